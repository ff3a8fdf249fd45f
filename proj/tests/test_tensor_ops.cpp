#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <numbers>

#include "dpipe/conv.hpp"
#include "dpipe/fft.hpp"
#include "test_support.hpp"

using namespace dpipe;
using dpipe::testing::random_tensor;

namespace {

// O(n^2) DFT straight from the definition; the oracle for fft2.
ComplexField dft2_brute(const Tensor& u) {
    const int H = u.h, W = u.w;
    ComplexField out(H, W);
    for (int ky = 0; ky < H; ++ky)
        for (int kx = 0; kx < W; ++kx) {
            std::complex<double> acc(0.0, 0.0);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(ky) * y / H +
                                        static_cast<double>(kx) * x / W);
                    acc += u.at(y, x, 0) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            out.re[static_cast<Eigen::Index>(ky) * W + kx] = acc.real();
            out.im[static_cast<Eigen::Index>(ky) * W + kx] = acc.imag();
        }
    return out;
}

// Dense circular convolution straight from the definition.
Tensor conv_brute(const Tensor& img, const Tensor& k, bool adjoint) {
    const int H = img.h, W = img.w;
    const int cy = k.h / 2, cx = k.w / 2;
    Tensor out(H, W, img.c);
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = 0; i < k.h; ++i)
                    for (int j = 0; j < k.w; ++j) {
                        const int dy = adjoint ? -(i - cy) : (i - cy);
                        const int dx = adjoint ? -(j - cx) : (j - cx);
                        const int sy = ((y - dy) % H + H) % H;
                        const int sx = ((x - dx) % W + W) % W;
                        acc += k.at(i, j, 0) * img.at(sy, sx, ch);
                    }
                out.at(y, x, ch) = acc;
            }
    return out;
}

} // namespace

TEST_CASE("fft2 of a constant field concentrates in the DC bin") {
    const double c = 0.37;
    ComplexField f = fft2(Tensor::constant(4, 4, 1, c));
    CHECK(f.re[0] == doctest::Approx(16.0 * c).epsilon(1e-12));
    CHECK(std::abs(f.im[0]) < 1e-12);
    for (Eigen::Index i = 1; i < f.size(); ++i) {
        CHECK(std::abs(f.re[i]) < 1e-12);
        CHECK(std::abs(f.im[i]) < 1e-12);
    }
}

TEST_CASE("fft2 of a unit impulse is flat") {
    for (auto [h, w] : {std::pair{3, 5}, {8, 8}, {1, 1}}) {
        Tensor u(h, w, 1);
        u.at(0, 0, 0) = 1.0;
        ComplexField f = fft2(u);
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            CHECK(f.re[i] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(std::abs(f.im[i]) < 1e-12);
        }
    }
}

TEST_CASE("fft2 matches the brute-force DFT on assorted sizes") {
    Rng rng(11);
    for (auto [h, w] : {std::pair{4, 4}, {8, 8}, {7, 9}, {5, 8}, {6, 10}, {1, 7}}) {
        const Tensor u = random_tensor(h, w, 1, rng);
        const ComplexField got = fft2(u);
        const ComplexField want = dft2_brute(u);
        CHECK((got.re - want.re).abs().maxCoeff() < 1e-9);
        CHECK((got.im - want.im).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("ifft2(fft2(u)) round trip within 1e-12, sizes up to 256x256") {
    Rng rng(12);
    for (auto [h, w] : {std::pair{8, 8}, {12, 10}, {37, 41}, {64, 64}, {256, 256}}) {
        const Tensor u = random_tensor(h, w, 1, rng);
        const Tensor back = ifft2_real(fft2(u));
        CHECK(max_abs_diff(u, back) < 1e-12);
    }
}

TEST_CASE("Parseval within 1e-9 relative") {
    Rng rng(13);
    for (auto [h, w] : {std::pair{16, 16}, {9, 13}, {64, 32}}) {
        const Tensor u = random_tensor(h, w, 1, rng);
        const ComplexField f = fft2(u);
        const double space = u.data.square().sum();
        const double freq = (f.re.square() + f.im.square()).sum() / (h * w);
        CHECK(std::abs(space - freq) / space < 1e-9);
    }
}

TEST_CASE("fft2 rejects empty dimensions") {
    CHECK_THROWS_AS(fft2(Tensor(0, 4, 1)), std::invalid_argument);
    CHECK_THROWS_AS(fft2(Tensor(4, 0, 1)), std::invalid_argument);
}

TEST_CASE("identity kernel leaves images unchanged") {
    Rng rng(14);
    const Tensor img = random_tensor(6, 7, 3, rng, 0.0, 1.0);
    Tensor k(1, 1, 1);
    k.data[0] = 1.0;
    CHECK(max_abs_diff(circ_conv(img, k), img) == 0.0);
}

TEST_CASE("delta sifting places the kernel circularly") {
    Tensor img(5, 5, 1);
    img.at(0, 0, 0) = 1.0;
    Rng rng(15);
    const Tensor k = random_tensor(3, 3, 1, rng);
    const Tensor out = circ_conv(img, k);
    CHECK(max_abs_diff(out, kernel_to_plane(k, 5, 5)) < 1e-15);
}

TEST_CASE("adjoint identity <Cx, z> = <x, C^T z> for filter sizes 1 through 5") {
    Rng rng(16);
    for (int ks : {1, 2, 3, 4, 5}) {
        const Tensor x = random_tensor(8, 8, 1, rng);
        const Tensor z = random_tensor(8, 8, 1, rng);
        const Tensor k = random_tensor(ks, ks, 1, rng);
        const double lhs = dot(circ_conv(x, k, ConvMode::forward), z);
        const double rhs = dot(x, circ_conv(z, k, ConvMode::adjoint));
        CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) < 1e-10);
    }
}

TEST_CASE("direct and FFT convolution paths agree within 1e-10") {
    Rng rng(17);
    for (auto mode : {ConvMode::forward, ConvMode::adjoint}) {
        for (auto [h, w, ks] : {std::tuple{8, 8, 3}, {16, 12, 5}, {9, 7, 7}}) {
            const Tensor x = random_tensor(h, w, 2, rng);
            const Tensor k = random_tensor(ks, ks, 1, rng);
            const Tensor a = circ_conv_direct(x, k, mode);
            const Tensor b = circ_conv_fft(x, k, mode);
            CHECK(max_abs_diff(a, b) < 1e-10);
            CHECK(max_abs_diff(a, conv_brute(x, k, mode == ConvMode::adjoint)) < 1e-10);
        }
    }
}

TEST_CASE("circ_conv rejects kernels larger than the image") {
    Rng rng(18);
    const Tensor img = random_tensor(4, 4, 1, rng);
    CHECK_THROWS_AS(circ_conv(img, Tensor(5, 3, 1)), std::invalid_argument);
    CHECK_THROWS_AS(circ_conv(img, Tensor(3, 5, 1)), std::invalid_argument);
}

TEST_CASE("conv_kernel_grad matches the dense definition on both paths") {
    Rng rng(19);
    const Tensor x = random_tensor(9, 8, 1, rng);
    const Tensor u = random_tensor(9, 8, 1, rng);
    for (int ks : {3, 7}) { // 3x3 direct path, 7x7 FFT path
        const Tensor g = conv_kernel_grad(x, u, ks, ks);
        for (int i = 0; i < ks; ++i)
            for (int j = 0; j < ks; ++j) {
                Tensor e(ks, ks, 1);
                e.at(i, j, 0) = 1.0;
                const double want = dot(circ_conv(x, e), u);
                CHECK(std::abs(g.at(i, j, 0) - want) < 1e-10);
            }
    }
}
