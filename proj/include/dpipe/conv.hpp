#pragma once

#include "dpipe/tensor.hpp"

namespace dpipe {

enum class ConvMode { forward, adjoint };

/// Circular (periodic) 2D convolution of each channel of `img` with `kernel`
/// (single channel, origin at (kh/2, kw/2)). `adjoint` applies correlation,
/// the transpose operator. Uses the FFT path when the kernel area exceeds 25,
/// a direct sliding window otherwise; the paths agree to 1e-10.
Tensor circ_conv(const Tensor& img, const Tensor& kernel, ConvMode mode = ConvMode::forward);

// Path-pinned variants, exposed for the agreement tests.
Tensor circ_conv_direct(const Tensor& img, const Tensor& kernel, ConvMode mode);
Tensor circ_conv_fft(const Tensor& img, const Tensor& kernel, ConvMode mode);

/// Embed a kernel into an H x W plane with its center tap wrapped to (0, 0),
/// so fft2 of the result is the transfer function of circ_conv.
Tensor kernel_to_plane(const Tensor& kernel, int H, int W);

/// Gradient of sum(upstream * circ_conv(img, kernel)) with respect to the
/// kernel taps; `img` and `upstream` are single-channel planes.
Tensor conv_kernel_grad(const Tensor& img, const Tensor& upstream, int kh, int kw);

} // namespace dpipe
