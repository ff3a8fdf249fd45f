#pragma once

#include <vector>

#include "dpipe/anscombe.hpp"
#include "dpipe/conv.hpp"
#include "dpipe/tape.hpp"

namespace dpipe {

// Differentiable primitives. Each op computes its value eagerly and registers
// an adjoint rule on the tape. Real-valued unless noted.

// -- elementwise / structural --------------------------------------------
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var add_const(Tape& t, Var a, double k);
Var scale_const(Tape& t, Var a, double k);
/// Broadcast multiply by a 1x1x1 scalar node.
Var scale(Tape& t, Var a, Var s);
Var exp_op(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var reshape(Tape& t, Var a, int h, int w, int c);
Var slice_channel(Tape& t, Var a, int ch);
Var concat_channels(Tape& t, const std::vector<Var>& parts);

// -- reductions / losses ---------------------------------------------------
Var sum(Tape& t, Var a);
Var mse(Tape& t, Var a, Var b);
Var softmax_cross_entropy(Tape& t, Var logits, int label);

double mse_value(const Tensor& a, const Tensor& b);
/// PSNR against peak 1.0; +infinity for identical inputs.
double psnr_value(const Tensor& a, const Tensor& ref);
double psnr_from_mse(double mse);

// -- variance stabilization -------------------------------------------------
Var gat_forward_op(Tape& t, Var y, const NoiseParams& noise);
Var gat_inverse_op(Tape& t, Var z, const NoiseParams& noise);

// -- convolution / per-pixel networks ---------------------------------------
/// Circular convolution of each channel with a single-channel kernel;
/// differentiable in both image and kernel. Path selection as circ_conv.
Var circ_conv_op(Tape& t, Var img, Var kernel, ConvMode mode = ConvMode::forward);

/// Per-pixel affine map: rows are the per-pixel channel vectors of each of
/// `groups` equal channel blocks. weight is (out, in, 1); bias is (1, 1, out).
Var pixel_affine(Tape& t, Var x, Var weight, Var bias, int groups = 1);

/// Zero-padded "same" multi-channel convolution with odd kernel; weight is
/// (kh, kw, in_ch*out_ch) with channel index ic*out_ch + oc, bias (1,1,out_ch).
Var conv2d_same(Tape& t, Var x, Var weight, Var bias, int out_ch);

/// 2x2 max pooling with stride 2; requires even spatial dims.
Var maxpool2(Tape& t, Var x);

// -- Fourier ---------------------------------------------------------------
Var make_complex(Tape& t, Var re, Var im);
Var creal(Tape& t, Var field);
Var cimag(Tape& t, Var field);
Var fft2_op(Tape& t, Var plane);
Var ifft2_real_op(Tape& t, Var field);
Var kernel_to_plane_op(Tape& t, Var kernel, int H, int W);
Var conj_op(Tape& t, Var field);
Var cmul(Tape& t, Var a, Var b);
Var cadd(Tape& t, Var a, Var b);
Var cabs2(Tape& t, Var field);
/// Complex field times a 1x1x1 real scalar node.
Var cscale(Tape& t, Var field, Var s);
/// Complex field divided by a real positive plane.
Var cdiv_real(Tape& t, Var field, Var denom);

} // namespace dpipe
