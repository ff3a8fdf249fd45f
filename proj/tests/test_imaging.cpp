#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpipe/imaging.hpp"
#include "test_support.hpp"

using namespace dpipe;

namespace {

// Pools per-pixel samples across repeated captures of a constant scene; every
// value is an iid draw from the same distribution.
std::pair<double, double> capture_moments(double level, const NoiseParams& np, int side,
                                          int repeats, std::uint64_t seed) {
    const Tensor x = Tensor::constant(side, side, 1, level);
    const Rng rng(seed);
    double sum = 0.0, sum2 = 0.0;
    const double n = static_cast<double>(side) * side * repeats;
    for (int r = 0; r < repeats; ++r) {
        const Tensor y = simulate_capture(x, nullptr, np, rng.stream(static_cast<std::uint64_t>(r)));
        sum += y.data.sum();
        sum2 += y.data.square().sum();
    }
    const double mean = sum / n;
    return {mean, sum2 / n - mean * mean};
}

} // namespace

TEST_CASE("noiseless dark frame stays exactly zero") {
    const Tensor x(8, 8, 1);
    const Tensor y = simulate_capture(x, nullptr, NoiseParams{0.0, 0.0}, Rng(1));
    CHECK(max_abs(y) == 0.0);
}

TEST_CASE("capture variance matches alpha*mean + sigma^2 at 1e5 pooled draws") {
    // 64x64 * 25 captures > 1e5 iid samples per setting.
    const NoiseParams np{0.01, 0.02};
    const auto [mean, var] = capture_moments(0.5, np, 64, 25, 42);
    const double want = np.alpha * 0.5 + np.sigma * np.sigma;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var > 0.95 * want);
    CHECK(var < 1.05 * want);
}

TEST_CASE("moment check across the unclipped range") {
    for (const double level : {0.2, 0.5, 0.8}) {
        const NoiseParams np{0.005, 0.005};
        const auto [mean, var] = capture_moments(level, np, 64, 25, 7);
        const double want_var = np.alpha * level + np.sigma * np.sigma;
        const double se = std::sqrt(want_var / 1e5);
        CHECK(std::abs(mean - level) < 3.0 * se);
        CHECK(var > 0.95 * want_var);
        CHECK(var < 1.05 * want_var);
    }
}

TEST_CASE("alpha = 0 degenerates to pure Gaussian noise around the scene") {
    const NoiseParams np{0.0, 0.03};
    const auto [mean, var] = capture_moments(0.5, np, 64, 25, 9);
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var == doctest::Approx(np.sigma * np.sigma).epsilon(0.05));
}

TEST_CASE("every output is clipped to [0,1] exactly") {
    const Tensor x = Tensor::constant(16, 16, 1, 1.0);
    const Tensor y = simulate_capture(x, nullptr, NoiseParams{0.05, 0.1}, Rng(3));
    CHECK((y.data <= 1.0).all());
    CHECK((y.data >= 0.0).all());
    const Tensor dark = simulate_capture(Tensor(16, 16, 1), nullptr, NoiseParams{0.0, 0.2}, Rng(4));
    CHECK((dark.data >= 0.0).all());
}

TEST_CASE("identical seeds give bit-identical captures") {
    Rng data_rng(5);
    const Tensor x = dpipe::testing::random_tensor(12, 12, 3, data_rng, 0.0, 1.0);
    const Psf psf = gaussian_psf(3, 0.8);
    const NoiseParams np{0.01, 0.01};
    const Tensor a = simulate_capture(x, &psf, np, Rng(77).stream(4));
    const Tensor b = simulate_capture(x, &psf, np, Rng(77).stream(4));
    const Tensor c = simulate_capture(x, &psf, np, Rng(77).stream(5));
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(max_abs_diff(a, c) > 0.0);
}

TEST_CASE("simulate_capture validates inputs") {
    CHECK_THROWS_AS(simulate_capture(Tensor::constant(2, 2, 1, 1.5), nullptr, NoiseParams{0, 0}, Rng(0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate_capture(Tensor(2, 2, 1), nullptr, NoiseParams{-0.1, 0}, Rng(0)),
                    std::invalid_argument);
}

TEST_CASE("poisson sampler hits the requested moments in both regimes") {
    const Rng rng(6);
    for (const double rate : {0.5, 5.0, 25.0, 60.0}) {
        double sum = 0.0, sum2 = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double k = poisson_sample(rate, rng, static_cast<std::uint64_t>(i) * 2);
            sum += k;
            sum2 += k * k;
        }
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        CHECK(mean == doctest::Approx(rate).epsilon(0.02));
        CHECK(var == doctest::Approx(rate).epsilon(0.05));
    }
}

TEST_CASE("calibration recovers the simulator parameters") {
    const NoiseParams truth{0.02, 0.01};
    const Rng rng(1234);
    std::vector<std::pair<double, Tensor>> patches;
    for (int i = 0; i < 50; ++i) {
        const double mean = 0.1 + 0.7 * i / 49.0;
        const Tensor flat = Tensor::constant(32, 32, 1, mean);
        patches.emplace_back(mean,
                             simulate_capture(flat, nullptr, truth, rng.stream(static_cast<std::uint64_t>(i))));
    }
    const NoiseCurve curve = fit_noise_curve(patches);
    CHECK(curve.fitted.alpha > 0.019);
    CHECK(curve.fitted.alpha < 0.021);
    CHECK(curve.fitted.sigma > 0.008);
    CHECK(curve.fitted.sigma < 0.012);
    CHECK(std::isfinite(curve.residual_rms));
    CHECK(curve.samples.size() == 50);
    // At alpha = 0.02 the brightest patches clip well past 1% of pixels and
    // must be left out of the regression; the mid range stays in.
    CHECK_FALSE(curve.samples.back().used_in_fit);
    CHECK_FALSE(curve.samples[48].used_in_fit);
    CHECK(curve.samples[10].used_in_fit);
    CHECK(curve.samples[25].used_in_fit);
}

TEST_CASE("noiseless patches fit to zero noise") {
    std::vector<std::pair<double, Tensor>> patches;
    for (const double m : {0.2, 0.4, 0.6})
        patches.emplace_back(m, Tensor::constant(16, 16, 1, m));
    const NoiseCurve curve = fit_noise_curve(patches);
    CHECK(curve.fitted.alpha == 0.0);
    CHECK(curve.fitted.sigma == 0.0);
}

TEST_CASE("fewer than three patches is an error") {
    std::vector<std::pair<double, Tensor>> patches;
    patches.emplace_back(0.2, Tensor::constant(8, 8, 1, 0.2));
    patches.emplace_back(0.5, Tensor::constant(8, 8, 1, 0.5));
    CHECK_THROWS_AS(fit_noise_curve(patches), std::invalid_argument);
}

TEST_CASE("a negative slope is clamped and flagged") {
    // Decreasing variance with mean: slope < 0.
    Rng rng(8);
    std::vector<std::pair<double, Tensor>> patches;
    for (int i = 0; i < 4; ++i) {
        const double m = 0.2 + 0.15 * i;
        Tensor p = Tensor::constant(24, 24, 1, m);
        const double spread = 0.02 * (4 - i);
        for (Eigen::Index j = 0; j < p.size(); ++j)
            p.data[j] += spread * (rng.next_uniform() - 0.5);
        patches.emplace_back(m, p);
    }
    const NoiseCurve curve = fit_noise_curve(patches);
    CHECK(curve.slope_clamped);
    CHECK(curve.fitted.alpha == 0.0);
}

TEST_CASE("psf construction validates and normalizes") {
    CHECK_THROWS_AS(make_psf(Tensor::constant(2, 2, 1, 0.25), "even"), std::invalid_argument);
    Tensor neg = Tensor::constant(3, 3, 1, 0.2);
    neg.at(0, 0, 0) = -0.1;
    CHECK_THROWS_AS(make_psf(neg, "neg"), std::invalid_argument);

    bool renorm = false;
    const Psf p = make_psf(Tensor::constant(3, 3, 1, 1.5 / 9.0), "scaled", &renorm);
    CHECK(renorm);
    CHECK(p.kernel.data.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const Psf g = gaussian_psf(5, 1.0);
    CHECK(g.kernel.data.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.kernel.at(2, 2, 0) > g.kernel.at(0, 0, 0));
}
