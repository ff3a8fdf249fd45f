#include "dpipe/fft.hpp"

#include <numbers>

namespace dpipe {

namespace {

using cd = std::complex<double>;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
    int m = 1;
    while (m < n) m <<= 1;
    return m;
}

// Iterative radix-2 Cooley-Tukey, n a power of two.
void fft_pow2(cd* x, int n, bool inverse) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / len * (inverse ? 1.0 : -1.0);
        const cd wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const cd u = x[i + k];
                const cd v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Bluestein chirp-z transform for arbitrary n, built on a power-of-two FFT.
void fft_bluestein(cd* x, int n, bool inverse) {
    const int m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cd> chirp(n);
    for (int k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for large n.
        const long long k2 = (static_cast<long long>(k) * k) % (2LL * n);
        const double ang = sign * std::numbers::pi * static_cast<double>(k2) / n;
        chirp[k] = cd(std::cos(ang), std::sin(ang));
    }
    std::vector<cd> a(m, cd(0, 0)), b(m, cd(0, 0));
    for (int k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (int k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
    fft_pow2(a.data(), m, false);
    fft_pow2(b.data(), m, false);
    for (int k = 0; k < m; ++k) a[k] *= b[k];
    fft_pow2(a.data(), m, true);
    const double scale = 1.0 / m;
    for (int k = 0; k < n; ++k) x[k] = a[k] * scale * chirp[k];
}

// 2D transform over an interleaved complex buffer, rows then columns.
void dft2_buffer(std::vector<cd>& buf, int h, int w, bool inverse) {
    for (int y = 0; y < h; ++y) fft_1d(buf.data() + static_cast<std::size_t>(y) * w, w, inverse);
    std::vector<cd> col(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = buf[static_cast<std::size_t>(y) * w + x];
        fft_1d(col.data(), h, inverse);
        for (int y = 0; y < h; ++y) buf[static_cast<std::size_t>(y) * w + x] = col[y];
    }
}

} // namespace

void fft_1d(cd* x, int n, bool inverse) {
    if (n < 1) throw std::invalid_argument("fft: length must be >= 1");
    if (n == 1) return;
    if (is_pow2(n))
        fft_pow2(x, n, inverse);
    else
        fft_bluestein(x, n, inverse);
}

ComplexField fft2(const Tensor& plane) {
    if (plane.h < 1 || plane.w < 1) throw std::invalid_argument("fft2: dimensions must be >= 1");
    if (plane.c != 1) throw std::invalid_argument("fft2: expected a single-channel plane");
    std::vector<cd> buf(plane.data.size());
    for (Eigen::Index i = 0; i < plane.data.size(); ++i) buf[i] = cd(plane.data[i], 0.0);
    dft2_buffer(buf, plane.h, plane.w, false);
    ComplexField out(plane.h, plane.w);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re[static_cast<Eigen::Index>(i)] = buf[i].real();
        out.im[static_cast<Eigen::Index>(i)] = buf[i].imag();
    }
    return out;
}

ComplexField dft2(const ComplexField& f, bool inverse) {
    if (f.h < 1 || f.w < 1) throw std::invalid_argument("dft2: dimensions must be >= 1");
    std::vector<cd> buf(static_cast<std::size_t>(f.h) * f.w);
    for (Eigen::Index i = 0; i < f.re.size(); ++i) buf[i] = cd(f.re[i], f.im[i]);
    dft2_buffer(buf, f.h, f.w, inverse);
    ComplexField out(f.h, f.w);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re[static_cast<Eigen::Index>(i)] = buf[i].real();
        out.im[static_cast<Eigen::Index>(i)] = buf[i].imag();
    }
    return out;
}

ComplexField ifft2(const ComplexField& f) {
    ComplexField out = dft2(f, true);
    const double scale = 1.0 / (static_cast<double>(f.h) * f.w);
    out.re *= scale;
    out.im *= scale;
    return out;
}

Tensor ifft2_real(const ComplexField& f) {
    ComplexField full = dft2(f, true);
    Tensor out(f.h, f.w, 1);
    out.data = full.re * (1.0 / (static_cast<double>(f.h) * f.w));
    return out;
}

} // namespace dpipe
