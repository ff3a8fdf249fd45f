#include "dpipe/ops.hpp"

#include <cmath>
#include <limits>

#include "dpipe/fft.hpp"

namespace dpipe {

namespace {

void check_same_shape(const Tape& t, Var a, Var b, const char* op) {
    if (!t.val(a).same_shape(t.val(b)))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    t.val(a).shape_str() + " vs " + t.val(b).shape_str());
}

void check_scalar(const Tape& t, Var s, const char* op) {
    if (t.val(s).size() != 1)
        throw std::invalid_argument(std::string(op) + ": expected a 1x1x1 scalar node");
}

void check_plane(const Tape& t, Var p, const char* op) {
    if (t.is_complex(p) || t.val(p).c != 1)
        throw std::invalid_argument(std::string(op) + ": expected a real single-channel plane");
}

} // namespace

Var add(Tape& t, Var a, Var b) {
    check_same_shape(t, a, b, "add");
    Tensor out = t.val(a);
    out.data += t.val(b).data;
    return t.emplace(std::move(out), "add", {a.id, b.id}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        if (tp.needs_grad(a)) tp.grad_buf(a.id).data += g.data;
        if (tp.needs_grad(b)) tp.grad_buf(b.id).data += g.data;
    });
}

Var sub(Tape& t, Var a, Var b) {
    check_same_shape(t, a, b, "sub");
    Tensor out = t.val(a);
    out.data -= t.val(b).data;
    return t.emplace(std::move(out), "sub", {a.id, b.id}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        if (tp.needs_grad(a)) tp.grad_buf(a.id).data += g.data;
        if (tp.needs_grad(b)) tp.grad_buf(b.id).data -= g.data;
    });
}

Var mul(Tape& t, Var a, Var b) {
    check_same_shape(t, a, b, "mul");
    Tensor out = t.val(a);
    out.data *= t.val(b).data;
    return t.emplace(std::move(out), "mul", {a.id, b.id}, [a, b](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        if (tp.needs_grad(a)) tp.grad_buf(a.id).data += g.data * tp.val(b).data;
        if (tp.needs_grad(b)) tp.grad_buf(b.id).data += g.data * tp.val(a).data;
    });
}

Var add_const(Tape& t, Var a, double k) {
    Tensor out = t.val(a);
    out.data += k;
    return t.emplace(std::move(out), "add_const", {a.id}, [a](Tape& tp, int id) {
        tp.grad_buf(a.id).data += tp.node(id).grad.data;
    });
}

Var scale_const(Tape& t, Var a, double k) {
    Tensor out = t.val(a);
    out.data *= k;
    return t.emplace(std::move(out), "scale_const", {a.id}, [a, k](Tape& tp, int id) {
        tp.grad_buf(a.id).data += k * tp.node(id).grad.data;
    });
}

Var scale(Tape& t, Var a, Var s) {
    check_scalar(t, s, "scale");
    Tensor out = t.val(a);
    out.data *= t.val(s).data[0];
    return t.emplace(std::move(out), "scale", {a.id, s.id}, [a, s](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        if (tp.needs_grad(a)) tp.grad_buf(a.id).data += tp.val(s).data[0] * g.data;
        if (tp.needs_grad(s)) tp.grad_buf(s.id).data[0] += (g.data * tp.val(a).data).sum();
    });
}

Var exp_op(Tape& t, Var a) {
    Tensor out = t.val(a);
    out.data = out.data.exp();
    return t.emplace(std::move(out), "exp", {a.id}, [a](Tape& tp, int id) {
        tp.grad_buf(a.id).data += tp.node(id).grad.data * tp.node(id).val.data;
    });
}

Var relu(Tape& t, Var a) {
    Tensor out = t.val(a);
    out.data = out.data.max(0.0);
    return t.emplace(std::move(out), "relu", {a.id}, [a](Tape& tp, int id) {
        // Subgradient 0 at the kink.
        tp.grad_buf(a.id).data +=
            tp.node(id).grad.data * (tp.val(a).data > 0.0).cast<double>();
    });
}

Var reshape(Tape& t, Var a, int h, int w, int c) {
    const Tensor& v = t.val(a);
    if (static_cast<Eigen::Index>(h) * w * c != v.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(h, w, c);
    out.data = v.data;
    return t.emplace(std::move(out), "reshape", {a.id}, [a](Tape& tp, int id) {
        tp.grad_buf(a.id).data += tp.node(id).grad.data;
    });
}

Var slice_channel(Tape& t, Var a, int ch) {
    const Tensor& v = t.val(a);
    Tensor out = channel_plane(v, ch);
    const int C = v.c;
    return t.emplace(std::move(out), "slice_channel", {a.id}, [a, ch, C](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        Tensor& ga = tp.grad_buf(a.id);
        const Eigen::Index n = g.size();
        for (Eigen::Index i = 0; i < n; ++i) ga.data[i * C + ch] += g.data[i];
    });
}

Var concat_channels(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty input");
    const int h = t.val(parts[0]).h, w = t.val(parts[0]).w;
    int c = 0;
    std::vector<int> ids, widths;
    for (Var p : parts) {
        const Tensor& v = t.val(p);
        if (v.h != h || v.w != w)
            throw std::invalid_argument("concat_channels: spatial shape mismatch");
        ids.push_back(p.id);
        widths.push_back(v.c);
        c += v.c;
    }
    Tensor out(h, w, c);
    int off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = t.val(parts[k]);
        const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < widths[k]; ++j) out.data[i * c + off + j] = v.data[i * widths[k] + j];
        off += widths[k];
    }
    return t.emplace(std::move(out), "concat_channels", ids,
                     [ids, widths, c](Tape& tp, int id) {
                         const Tensor& g = tp.node(id).grad;
                         const Eigen::Index n = static_cast<Eigen::Index>(g.h) * g.w;
                         int off = 0;
                         for (std::size_t k = 0; k < ids.size(); ++k) {
                             if (tp.needs_grad(Var{ids[k]})) {
                                 Tensor& gi = tp.grad_buf(ids[k]);
                                 for (Eigen::Index i = 0; i < n; ++i)
                                     for (int j = 0; j < widths[k]; ++j)
                                         gi.data[i * widths[k] + j] += g.data[i * c + off + j];
                             }
                             off += widths[k];
                         }
                     });
}

Var sum(Tape& t, Var a) {
    Tensor out = Tensor::scalar(t.val(a).data.sum());
    return t.emplace(std::move(out), "sum", {a.id}, [a](Tape& tp, int id) {
        tp.grad_buf(a.id).data += tp.node(id).grad.data[0];
    });
}

Var mse(Tape& t, Var a, Var b) {
    check_same_shape(t, a, b, "mse");
    const Eigen::Index n = t.val(a).size();
    if (n == 0) throw std::invalid_argument("mse: empty tensors");
    Tensor out = Tensor::scalar((t.val(a).data - t.val(b).data).square().sum() /
                                static_cast<double>(n));
    return t.emplace(std::move(out), "mse", {a.id, b.id}, [a, b, n](Tape& tp, int id) {
        const double g = tp.node(id).grad.data[0] * 2.0 / static_cast<double>(n);
        if (tp.needs_grad(a)) tp.grad_buf(a.id).data += g * (tp.val(a).data - tp.val(b).data);
        if (tp.needs_grad(b)) tp.grad_buf(b.id).data -= g * (tp.val(a).data - tp.val(b).data);
    });
}

Var softmax_cross_entropy(Tape& t, Var logits, int label) {
    const Tensor& l = t.val(logits);
    const Eigen::Index k = l.size();
    if (label < 0 || label >= k)
        throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const double m = l.data.maxCoeff();
    const double lse = m + std::log((l.data - m).exp().sum());
    Tensor out = Tensor::scalar(lse - l.data[label]);
    return t.emplace(std::move(out), "softmax_cross_entropy", {logits.id},
                     [logits, label, lse](Tape& tp, int id) {
                         const double g = tp.node(id).grad.data[0];
                         Tensor& gl = tp.grad_buf(logits.id);
                         gl.data += g * (tp.val(logits).data - lse).exp();
                         gl.data[label] -= g;
                     });
}

double mse_value(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    if (a.size() == 0) throw std::invalid_argument("mse: empty tensors");
    return (a.data - b.data).square().sum() / static_cast<double>(a.size());
}

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double psnr_value(const Tensor& a, const Tensor& ref) { return psnr_from_mse(mse_value(a, ref)); }

Var gat_forward_op(Tape& t, Var y, const NoiseParams& noise) {
    if (noise.alpha <= 0.0) throw std::invalid_argument("gat_forward: requires alpha > 0");
    Tensor out = gat_forward(t.val(y), noise);
    const double alpha = noise.alpha;
    return t.emplace(std::move(out), "gat_forward", {y.id}, [y, alpha](Tape& tp, int id) {
        // dz/dy = 1/sqrt(radicand) = 2/(alpha*z); 0 at the clamped kink.
        const Tensor& z = tp.node(id).val;
        Tensor& gy = tp.grad_buf(y.id);
        gy.data += tp.node(id).grad.data *
                   (z.data > 0.0).cast<double>() * (2.0 / alpha) / z.data.max(1e-300);
    });
}

Var gat_inverse_op(Tape& t, Var z, const NoiseParams& noise) {
    if (noise.alpha <= 0.0) throw std::invalid_argument("gat_inverse: requires alpha > 0");
    Tensor out = gat_inverse(t.val(z), noise);
    const double alpha = noise.alpha;
    return t.emplace(std::move(out), "gat_inverse", {z.id}, [z, alpha](Tape& tp, int id) {
        tp.grad_buf(z.id).data += tp.node(id).grad.data * (alpha * 0.5) * tp.val(z).data;
    });
}

Var circ_conv_op(Tape& t, Var img, Var kernel, ConvMode mode) {
    const Tensor& k = t.val(kernel);
    Tensor out = circ_conv(t.val(img), k, mode);
    const int kh = k.h, kw = k.w;
    return t.emplace(std::move(out), "circ_conv", {img.id, kernel.id},
                     [img, kernel, mode, kh, kw](Tape& tp, int id) {
                         const Tensor& g = tp.node(id).grad;
                         if (tp.needs_grad(img)) {
                             const ConvMode adj = mode == ConvMode::forward ? ConvMode::adjoint
                                                                            : ConvMode::forward;
                             tp.grad_buf(img.id).data += circ_conv(g, tp.val(kernel), adj).data;
                         }
                         if (tp.needs_grad(kernel)) {
                             Tensor& gk = tp.grad_buf(kernel.id);
                             const Tensor& x = tp.val(img);
                             for (int ch = 0; ch < x.c; ++ch) {
                                 const Tensor xp = x.c == 1 ? x : channel_plane(x, ch);
                                 const Tensor gp = g.c == 1 ? g : channel_plane(g, ch);
                                 if (mode == ConvMode::forward)
                                     gk.data += conv_kernel_grad(xp, gp, kh, kw).data;
                                 else
                                     // corr(x,k)(p) = sum_q k(q) x(p + q - c):
                                     // d/dk(q) = sum_p g(p) x(p + q - c), a conv-mode
                                     // kernel grad with the roles of lag flipped.
                                     gk.data += conv_kernel_grad(gp, xp, kh, kw).data;
                             }
                         }
                     });
}

Var pixel_affine(Tape& t, Var x, Var weight, Var bias, int groups) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(weight);
    const Tensor& bv = t.val(bias);
    if (wv.c != 1) throw std::invalid_argument("pixel_affine: weight must be (out, in, 1)");
    const int out_ch = wv.h, in_ch = wv.w;
    if (groups < 1 || xv.c != groups * in_ch)
        throw std::invalid_argument("pixel_affine: channel mismatch");
    if (bv.h != 1 || bv.w != 1 || bv.c != out_ch)
        throw std::invalid_argument("pixel_affine: bias must be (1, 1, out)");

    const Eigen::Index rows = static_cast<Eigen::Index>(xv.h) * xv.w * groups;
    ConstRowMatrixMap X(xv.data.data(), rows, in_ch);
    ConstRowMatrixMap W(wv.data.data(), out_ch, in_ch);
    Tensor out(xv.h, xv.w, groups * out_ch);
    RowMatrixMap Y(out.data.data(), rows, out_ch);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), out_ch);

    return t.emplace(std::move(out), "pixel_affine", {x.id, weight.id, bias.id},
                     [x, weight, bias, groups, in_ch, out_ch, rows](Tape& tp, int id) {
                         ConstRowMatrixMap G(tp.node(id).grad.data.data(), rows, out_ch);
                         ConstRowMatrixMap X(tp.val(x).data.data(), rows, in_ch);
                         ConstRowMatrixMap W(tp.val(weight).data.data(), out_ch, in_ch);
                         if (tp.needs_grad(x)) {
                             RowMatrixMap GX(tp.grad_buf(x.id).data.data(), rows, in_ch);
                             GX.noalias() += G * W;
                         }
                         if (tp.needs_grad(weight)) {
                             RowMatrixMap GW(tp.grad_buf(weight.id).data.data(), out_ch, in_ch);
                             GW.noalias() += G.transpose() * X;
                         }
                         if (tp.needs_grad(bias)) {
                             Eigen::Map<Eigen::RowVectorXd> GB(tp.grad_buf(bias.id).data.data(),
                                                               out_ch);
                             GB += G.colwise().sum();
                         }
                     });
}

Var conv2d_same(Tape& t, Var x, Var weight, Var bias, int out_ch) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(weight);
    const Tensor& bv = t.val(bias);
    const int in_ch = xv.c, kh = wv.h, kw = wv.w;
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
    if (wv.c != in_ch * out_ch) throw std::invalid_argument("conv2d: weight channel mismatch");
    if (bv.size() != out_ch) throw std::invalid_argument("conv2d: bias size mismatch");
    const int H = xv.h, W = xv.w, ph = kh / 2, pw = kw / 2;

    Tensor out(H, W, out_ch);
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
            double* o = out.data.data() + (static_cast<Eigen::Index>(y) * W + xx) * out_ch;
            for (int oc = 0; oc < out_ch; ++oc) o[oc] = bv.data[oc];
            for (int ky = 0; ky < kh; ++ky) {
                const int yy = y + ky - ph;
                if (yy < 0 || yy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int xs = xx + kx - pw;
                    if (xs < 0 || xs >= W) continue;
                    const double* xi =
                        xv.data.data() + (static_cast<Eigen::Index>(yy) * W + xs) * in_ch;
                    const double* wrow =
                        wv.data.data() +
                        (static_cast<Eigen::Index>(ky) * kw + kx) * in_ch * out_ch;
                    for (int ic = 0; ic < in_ch; ++ic) {
                        const double v = xi[ic];
                        const double* wr = wrow + static_cast<Eigen::Index>(ic) * out_ch;
                        for (int oc = 0; oc < out_ch; ++oc) o[oc] += wr[oc] * v;
                    }
                }
            }
        }

    return t.emplace(
        std::move(out), "conv2d", {x.id, weight.id, bias.id},
        [x, weight, bias, out_ch, in_ch, kh, kw, H, W, ph, pw](Tape& tp, int id) {
            const Tensor& g = tp.node(id).grad;
            const Tensor& xv = tp.val(x);
            const Tensor& wv = tp.val(weight);
            const bool need_x = tp.needs_grad(x);
            const bool need_w = tp.needs_grad(weight);
            if (need_x || need_w) {
                Tensor* gx = need_x ? &tp.grad_buf(x.id) : nullptr;
                Tensor* gw = need_w ? &tp.grad_buf(weight.id) : nullptr;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        const double* go =
                            g.data.data() + (static_cast<Eigen::Index>(y) * W + xx) * out_ch;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int yy = y + ky - ph;
                            if (yy < 0 || yy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int xs = xx + kx - pw;
                                if (xs < 0 || xs >= W) continue;
                                const Eigen::Index xoff =
                                    (static_cast<Eigen::Index>(yy) * W + xs) * in_ch;
                                const Eigen::Index woff =
                                    (static_cast<Eigen::Index>(ky) * kw + kx) * in_ch * out_ch;
                                for (int ic = 0; ic < in_ch; ++ic) {
                                    double accx = 0.0;
                                    const double xval = xv.data[xoff + ic];
                                    const double* wr =
                                        wv.data.data() + woff + static_cast<Eigen::Index>(ic) * out_ch;
                                    double* gwr =
                                        gw ? gw->data.data() + woff + static_cast<Eigen::Index>(ic) * out_ch
                                           : nullptr;
                                    for (int oc = 0; oc < out_ch; ++oc) {
                                        accx += wr[oc] * go[oc];
                                        if (gwr) gwr[oc] += xval * go[oc];
                                    }
                                    if (gx) gx->data[xoff + ic] += accx;
                                }
                            }
                        }
                    }
            }
            if (tp.needs_grad(bias)) {
                Tensor& gb = tp.grad_buf(bias.id);
                const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
                for (Eigen::Index i = 0; i < n; ++i)
                    for (int oc = 0; oc < out_ch; ++oc) gb.data[oc] += g.data[i * out_ch + oc];
            }
        });
}

Var maxpool2(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    if (xv.h % 2 != 0 || xv.w % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial dims must be even");
    const int H = xv.h, W = xv.w, C = xv.c;
    Tensor out(H / 2, W / 2, C);
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(out.size()));
    for (int y = 0; y < H / 2; ++y)
        for (int xx = 0; xx < W / 2; ++xx)
            for (int ch = 0; ch < C; ++ch) {
                Eigen::Index best = (static_cast<Eigen::Index>(2 * y) * W + 2 * xx) * C + ch;
                double bv = xv.data[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const Eigen::Index idx =
                            (static_cast<Eigen::Index>(2 * y + dy) * W + 2 * xx + dx) * C + ch;
                        if (xv.data[idx] > bv) {
                            bv = xv.data[idx];
                            best = idx;
                        }
                    }
                const Eigen::Index o = (static_cast<Eigen::Index>(y) * (W / 2) + xx) * C + ch;
                out.data[o] = bv;
                argmax[static_cast<std::size_t>(o)] = best;
            }
    return t.emplace(std::move(out), "maxpool2", {x.id},
                     [x, argmax = std::move(argmax)](Tape& tp, int id) {
                         const Tensor& g = tp.node(id).grad;
                         Tensor& gx = tp.grad_buf(x.id);
                         for (Eigen::Index i = 0; i < g.size(); ++i)
                             gx.data[argmax[static_cast<std::size_t>(i)]] += g.data[i];
                     });
}

// -- Fourier ----------------------------------------------------------------

Var make_complex(Tape& t, Var re, Var im) {
    check_plane(t, re, "make_complex");
    check_plane(t, im, "make_complex");
    check_same_shape(t, re, im, "make_complex");
    ComplexField out(t.val(re).h, t.val(re).w);
    out.re = t.val(re).data;
    out.im = t.val(im).data;
    return t.emplace_complex(std::move(out), "make_complex", {re.id, im.id},
                             [re, im](Tape& tp, int id) {
                                 const ComplexField& g = tp.node(id).cgrad;
                                 if (tp.needs_grad(re)) tp.grad_buf(re.id).data += g.re;
                                 if (tp.needs_grad(im)) tp.grad_buf(im.id).data += g.im;
                             });
}

Var creal(Tape& t, Var field) {
    const ComplexField& f = t.cval(field);
    Tensor out(f.h, f.w, 1);
    out.data = f.re;
    return t.emplace(std::move(out), "creal", {field.id}, [field](Tape& tp, int id) {
        tp.cgrad_buf(field.id).re += tp.node(id).grad.data;
    });
}

Var cimag(Tape& t, Var field) {
    const ComplexField& f = t.cval(field);
    Tensor out(f.h, f.w, 1);
    out.data = f.im;
    return t.emplace(std::move(out), "cimag", {field.id}, [field](Tape& tp, int id) {
        tp.cgrad_buf(field.id).im += tp.node(id).grad.data;
    });
}

Var fft2_op(Tape& t, Var plane) {
    check_plane(t, plane, "fft2");
    return t.emplace_complex(fft2(t.val(plane)), "fft2", {plane.id}, [plane](Tape& tp, int id) {
        // Adjoint of the unnormalized forward DFT on real input: the real part
        // of the unnormalized inverse DFT of the adjoint field.
        const ComplexField back = dft2(tp.node(id).cgrad, true);
        tp.grad_buf(plane.id).data += back.re;
    });
}

Var ifft2_real_op(Tape& t, Var field) {
    if (!t.is_complex(field)) throw std::invalid_argument("ifft2_real: expected a complex field");
    return t.emplace(ifft2_real(t.cval(field)), "ifft2_real", {field.id},
                     [field](Tape& tp, int id) {
                         const Tensor& g = tp.node(id).grad;
                         const ComplexField f = fft2(g);
                         ComplexField& gc = tp.cgrad_buf(field.id);
                         const double s = 1.0 / (static_cast<double>(g.h) * g.w);
                         gc.re += s * f.re;
                         gc.im += s * f.im;
                     });
}

Var kernel_to_plane_op(Tape& t, Var kernel, int H, int W) {
    const Tensor& k = t.val(kernel);
    const int kh = k.h, kw = k.w;
    Tensor out = kernel_to_plane(k, H, W);
    return t.emplace(std::move(out), "kernel_to_plane", {kernel.id},
                     [kernel, kh, kw, H, W](Tape& tp, int id) {
                         const Tensor& g = tp.node(id).grad;
                         Tensor& gk = tp.grad_buf(kernel.id);
                         const int cy = kh / 2, cx = kw / 2;
                         for (int i = 0; i < kh; ++i) {
                             const int y = ((i - cy) % H + H) % H;
                             for (int j = 0; j < kw; ++j) {
                                 const int x = ((j - cx) % W + W) % W;
                                 gk.data[static_cast<Eigen::Index>(i) * kw + j] +=
                                     g.data[static_cast<Eigen::Index>(y) * W + x];
                             }
                         }
                     });
}

Var conj_op(Tape& t, Var field) {
    ComplexField out = t.cval(field);
    out.im = -out.im;
    return t.emplace_complex(std::move(out), "conj", {field.id}, [field](Tape& tp, int id) {
        const ComplexField& g = tp.node(id).cgrad;
        ComplexField& gf = tp.cgrad_buf(field.id);
        gf.re += g.re;
        gf.im -= g.im;
    });
}

Var cmul(Tape& t, Var a, Var b) {
    const ComplexField& av = t.cval(a);
    const ComplexField& bv = t.cval(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("cmul: shape mismatch");
    ComplexField out(av.h, av.w);
    out.re = av.re * bv.re - av.im * bv.im;
    out.im = av.re * bv.im + av.im * bv.re;
    return t.emplace_complex(std::move(out), "cmul", {a.id, b.id}, [a, b](Tape& tp, int id) {
        const ComplexField& g = tp.node(id).cgrad;
        if (tp.needs_grad(a)) {
            const ComplexField& bv = tp.cval(b);
            ComplexField& ga = tp.cgrad_buf(a.id);
            ga.re += bv.re * g.re + bv.im * g.im;
            ga.im += bv.re * g.im - bv.im * g.re;
        }
        if (tp.needs_grad(b)) {
            const ComplexField& av = tp.cval(a);
            ComplexField& gb = tp.cgrad_buf(b.id);
            gb.re += av.re * g.re + av.im * g.im;
            gb.im += av.re * g.im - av.im * g.re;
        }
    });
}

Var cadd(Tape& t, Var a, Var b) {
    const ComplexField& av = t.cval(a);
    const ComplexField& bv = t.cval(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("cadd: shape mismatch");
    ComplexField out(av.h, av.w);
    out.re = av.re + bv.re;
    out.im = av.im + bv.im;
    return t.emplace_complex(std::move(out), "cadd", {a.id, b.id}, [a, b](Tape& tp, int id) {
        const ComplexField& g = tp.node(id).cgrad;
        for (Var v : {a, b})
            if (tp.needs_grad(v)) {
                ComplexField& gv = tp.cgrad_buf(v.id);
                gv.re += g.re;
                gv.im += g.im;
            }
    });
}

Var cabs2(Tape& t, Var field) {
    const ComplexField& f = t.cval(field);
    Tensor out(f.h, f.w, 1);
    out.data = f.re.square() + f.im.square();
    return t.emplace(std::move(out), "cabs2", {field.id}, [field](Tape& tp, int id) {
        const Tensor& g = tp.node(id).grad;
        const ComplexField& f = tp.cval(field);
        ComplexField& gf = tp.cgrad_buf(field.id);
        gf.re += 2.0 * f.re * g.data;
        gf.im += 2.0 * f.im * g.data;
    });
}

Var cscale(Tape& t, Var field, Var s) {
    check_scalar(t, s, "cscale");
    ComplexField out = t.cval(field);
    const double sv = t.val(s).data[0];
    out.re *= sv;
    out.im *= sv;
    return t.emplace_complex(std::move(out), "cscale", {field.id, s.id},
                             [field, s](Tape& tp, int id) {
                                 const ComplexField& g = tp.node(id).cgrad;
                                 if (tp.needs_grad(field)) {
                                     const double sv = tp.val(s).data[0];
                                     ComplexField& gf = tp.cgrad_buf(field.id);
                                     gf.re += sv * g.re;
                                     gf.im += sv * g.im;
                                 }
                                 if (tp.needs_grad(s)) {
                                     const ComplexField& f = tp.cval(field);
                                     tp.grad_buf(s.id).data[0] +=
                                         (f.re * g.re).sum() + (f.im * g.im).sum();
                                 }
                             });
}

Var cdiv_real(Tape& t, Var field, Var denom) {
    const ComplexField& f = t.cval(field);
    const Tensor& d = t.val(denom);
    if (d.c != 1 || d.h != f.h || d.w != f.w)
        throw std::invalid_argument("cdiv_real: denominator plane shape mismatch");
    ComplexField out(f.h, f.w);
    out.re = f.re / d.data;
    out.im = f.im / d.data;
    return t.emplace_complex(std::move(out), "cdiv_real", {field.id, denom.id},
                             [field, denom](Tape& tp, int id) {
                                 const ComplexField& g = tp.node(id).cgrad;
                                 const ComplexField& y = tp.node(id).cval;
                                 const Tensor& d = tp.val(denom);
                                 if (tp.needs_grad(field)) {
                                     ComplexField& gf = tp.cgrad_buf(field.id);
                                     gf.re += g.re / d.data;
                                     gf.im += g.im / d.data;
                                 }
                                 if (tp.needs_grad(denom)) {
                                     tp.grad_buf(denom.id).data -=
                                         (g.re * y.re + g.im * y.im) / d.data;
                                 }
                             });
}

} // namespace dpipe
