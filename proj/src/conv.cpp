#include "dpipe/conv.hpp"

#include "dpipe/fft.hpp"

namespace dpipe {

namespace {

constexpr int kDirectAreaLimit = 25;

void check_kernel(const Tensor& img, const Tensor& kernel) {
    if (kernel.c != 1) throw std::invalid_argument("circ_conv: kernel must be single-channel");
    if (kernel.h < 1 || kernel.w < 1) throw std::invalid_argument("circ_conv: empty kernel");
    if (kernel.h > img.h || kernel.w > img.w)
        throw std::invalid_argument("circ_conv: kernel larger than image");
}

// out(y, x) += kv * src((y - di) mod H, (x - dj) mod W)
void add_shifted(double* dst, const double* src, int H, int W, int di, int dj, double kv) {
    const int r = ((dj % W) + W) % W;
    for (int y = 0; y < H; ++y) {
        int sy = y - di;
        if (sy < 0) sy += H;
        else if (sy >= H) sy -= H;
        double* d = dst + static_cast<std::size_t>(y) * W;
        const double* s = src + static_cast<std::size_t>(sy) * W;
        for (int x = 0; x < r; ++x) d[x] += kv * s[x - r + W];
        for (int x = r; x < W; ++x) d[x] += kv * s[x - r];
    }
}

Tensor conv_plane_direct(const Tensor& plane, const Tensor& kernel, bool adjoint) {
    const int H = plane.h, W = plane.w, kh = kernel.h, kw = kernel.w;
    const int cy = kh / 2, cx = kw / 2;
    Tensor out(H, W, 1);
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            const double kv = kernel.data[static_cast<Eigen::Index>(i) * kw + j];
            int di = i - cy, dj = j - cx;
            if (adjoint) {
                di = -di;
                dj = -dj;
            }
            add_shifted(out.data.data(), plane.data.data(), H, W, di, dj, kv);
        }
    }
    return out;
}

Tensor conv_plane_fft(const Tensor& plane, const Tensor& kernel, bool adjoint) {
    const ComplexField P = fft2(kernel_to_plane(kernel, plane.h, plane.w));
    const ComplexField X = fft2(plane);
    ComplexField prod(plane.h, plane.w);
    if (adjoint) {
        prod.re = P.re * X.re + P.im * X.im;
        prod.im = P.re * X.im - P.im * X.re;
    } else {
        prod.re = P.re * X.re - P.im * X.im;
        prod.im = P.re * X.im + P.im * X.re;
    }
    return ifft2_real(prod);
}

Tensor conv_per_channel(const Tensor& img, const Tensor& kernel, ConvMode mode, bool use_fft) {
    const bool adjoint = (mode == ConvMode::adjoint);
    if (img.c == 1)
        return use_fft ? conv_plane_fft(img, kernel, adjoint)
                       : conv_plane_direct(img, kernel, adjoint);
    Tensor out(img.h, img.w, img.c);
    for (int ch = 0; ch < img.c; ++ch) {
        const Tensor plane = channel_plane(img, ch);
        set_channel_plane(out, ch,
                          use_fft ? conv_plane_fft(plane, kernel, adjoint)
                                  : conv_plane_direct(plane, kernel, adjoint));
    }
    return out;
}

} // namespace

Tensor circ_conv(const Tensor& img, const Tensor& kernel, ConvMode mode) {
    check_kernel(img, kernel);
    return conv_per_channel(img, kernel, mode, kernel.h * kernel.w > kDirectAreaLimit);
}

Tensor circ_conv_direct(const Tensor& img, const Tensor& kernel, ConvMode mode) {
    check_kernel(img, kernel);
    return conv_per_channel(img, kernel, mode, false);
}

Tensor circ_conv_fft(const Tensor& img, const Tensor& kernel, ConvMode mode) {
    check_kernel(img, kernel);
    return conv_per_channel(img, kernel, mode, true);
}

Tensor kernel_to_plane(const Tensor& kernel, int H, int W) {
    if (kernel.c != 1) throw std::invalid_argument("kernel_to_plane: kernel must be single-channel");
    if (kernel.h > H || kernel.w > W)
        throw std::invalid_argument("kernel_to_plane: kernel larger than target plane");
    const int cy = kernel.h / 2, cx = kernel.w / 2;
    Tensor plane(H, W, 1);
    for (int i = 0; i < kernel.h; ++i) {
        const int y = ((i - cy) % H + H) % H;
        for (int j = 0; j < kernel.w; ++j) {
            const int x = ((j - cx) % W + W) % W;
            plane.data[static_cast<Eigen::Index>(y) * W + x] =
                kernel.data[static_cast<Eigen::Index>(i) * kernel.w + j];
        }
    }
    return plane;
}

Tensor conv_kernel_grad(const Tensor& img, const Tensor& upstream, int kh, int kw) {
    if (img.c != 1 || upstream.c != 1)
        throw std::invalid_argument("conv_kernel_grad: expected single-channel planes");
    if (img.h != upstream.h || img.w != upstream.w)
        throw std::invalid_argument("conv_kernel_grad: shape mismatch");
    const int H = img.h, W = img.w;
    const int cy = kh / 2, cx = kw / 2;
    Tensor grad(kh, kw, 1);

    if (kh * kw > kDirectAreaLimit) {
        // kgrad(i, j) = cross_correlation(upstream, img) at lag ((i,j) - center)
        const ComplexField U = fft2(upstream);
        const ComplexField X = fft2(img);
        ComplexField prod(H, W);
        prod.re = U.re * X.re + U.im * X.im;
        prod.im = U.im * X.re - U.re * X.im;
        const Tensor corr = ifft2_real(prod);
        for (int i = 0; i < kh; ++i) {
            const int y = ((i - cy) % H + H) % H;
            for (int j = 0; j < kw; ++j) {
                const int x = ((j - cx) % W + W) % W;
                grad.data[static_cast<Eigen::Index>(i) * kw + j] =
                    corr.data[static_cast<Eigen::Index>(y) * W + x];
            }
        }
        return grad;
    }

    const double* u = upstream.data.data();
    const double* s = img.data.data();
    for (int i = 0; i < kh; ++i) {
        const int di = i - cy;
        for (int j = 0; j < kw; ++j) {
            const int dj = j - cx;
            const int r = ((dj % W) + W) % W;
            double acc = 0.0;
            for (int y = 0; y < H; ++y) {
                int sy = y - di;
                if (sy < 0) sy += H;
                else if (sy >= H) sy -= H;
                const double* urow = u + static_cast<std::size_t>(y) * W;
                const double* srow = s + static_cast<std::size_t>(sy) * W;
                for (int x = 0; x < r; ++x) acc += urow[x] * srow[x - r + W];
                for (int x = r; x < W; ++x) acc += urow[x] * srow[x - r];
            }
            grad.data[static_cast<Eigen::Index>(i) * kw + j] = acc;
        }
    }
    return grad;
}

} // namespace dpipe
