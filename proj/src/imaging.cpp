#include "dpipe/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "dpipe/conv.hpp"

namespace dpipe {

Psf make_psf(Tensor kernel, std::string label, bool* renormalized) {
    if (kernel.c != 1) throw std::invalid_argument("psf: kernel must be single-channel");
    if (kernel.h % 2 == 0 || kernel.w % 2 == 0)
        throw std::invalid_argument("psf: kernel dimensions must be odd");
    if ((kernel.data < 0.0).any()) throw std::invalid_argument("psf: negative kernel entries");
    const double sum = kernel.data.sum();
    if (sum <= 0.0) throw std::invalid_argument("psf: kernel sums to zero");
    if (renormalized) *renormalized = std::abs(sum - 1.0) > 1e-6;
    kernel.data /= sum;
    return Psf{std::move(kernel), std::move(label)};
}

Psf gaussian_psf(int size, double sigma_px, std::string label) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_psf: size must be odd");
    if (sigma_px <= 0.0) throw std::invalid_argument("gaussian_psf: sigma must be > 0");
    Tensor k(size, size, 1);
    const int c = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - c, dx = x - c;
            k.at(y, x, 0) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_px * sigma_px));
        }
    return make_psf(std::move(k), std::move(label));
}

double poisson_sample(double rate, const Rng& rng, std::uint64_t counter) {
    if (rate <= 0.0) return 0.0;
    if (rate < 30.0) {
        const double u = rng.uniform_at(counter);
        double p = std::exp(-rate);
        double cdf = p;
        int k = 0;
        while (u > cdf && k < 400) {
            ++k;
            p *= rate / k;
            cdf += p;
        }
        return static_cast<double>(k);
    }
    // Gaussian approximation with continuity correction.
    const double g = rng.gaussian_at(counter);
    return std::max(0.0, std::floor(rate + std::sqrt(rate) * g + 0.5));
}

Tensor simulate_capture(const Tensor& x, const Psf* psf, const NoiseParams& noise, const Rng& rng) {
    if ((x.data < 0.0).any() || (x.data > 1.0).any())
        throw std::invalid_argument("simulate_capture: input values must lie in [0,1]");
    if (noise.alpha < 0.0 || noise.sigma < 0.0)
        throw std::invalid_argument("simulate_capture: negative noise parameters");

    Tensor blurred = psf ? circ_conv(x, psf->kernel) : x;

    Tensor y(x.h, x.w, x.c);
    const Eigen::Index n = blurred.size();
    // Four rng counters per pixel: [0,1] shot noise, [2,3] read noise.
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint64_t base = static_cast<std::uint64_t>(i) * 4;
        double v = blurred.data[i];
        if (noise.alpha > 0.0)
            v = noise.alpha * poisson_sample(v / noise.alpha, rng, base);
        if (noise.sigma > 0.0)
            v += noise.sigma * rng.gaussian_at(base + 2);
        y.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return y;
}

NoiseCurve fit_noise_curve(const std::vector<std::pair<double, Tensor>>& patches) {
    if (patches.size() < 3) throw std::invalid_argument("fit_noise_curve: need at least 3 patches");

    NoiseCurve curve;
    curve.samples.reserve(patches.size());
    for (const auto& [true_mean, patch] : patches) {
        (void)true_mean;
        const Eigen::Index n = patch.size();
        if (n < 2) throw std::invalid_argument("fit_noise_curve: patch too small");
        const double mean = patch.data.mean();
        const double var = (patch.data - mean).square().sum() / static_cast<double>(n - 1);
        const double clipped =
            static_cast<double>((patch.data <= 0.0 || patch.data >= 1.0).count()) /
            static_cast<double>(n);
        NoisePoint pt;
        pt.mean = mean;
        pt.variance = var;
        pt.clipped_fraction = clipped;
        pt.used_in_fit = clipped <= 0.01;
        curve.samples.push_back(pt);
    }

    std::vector<const NoisePoint*> used;
    double max_var = 0.0;
    for (const auto& pt : curve.samples)
        if (pt.used_in_fit) {
            used.push_back(&pt);
            max_var = std::max(max_var, pt.variance);
        }
    if (used.size() < 3)
        throw std::invalid_argument("fit_noise_curve: fewer than 3 patches in the unclipped regime");

    if (max_var <= 1e-30) {
        // Noiseless patches: exact zero fit.
        curve.fitted = NoiseParams{0.0, 0.0};
        return curve;
    }

    // Iterated weighted least squares. Var(sample variance) scales with
    // variance^2, so each pass weights by 1/fit(mean)^2; weights come from the
    // previous pass's fitted line rather than the noisy per-patch estimates,
    // which would correlate weights with residuals.
    double slope = 0.0, intercept = 0.0;
    for (int pass = 0; pass < 3; ++pass) {
        double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
        for (const auto* pt : used) {
            double v = pass == 0 ? 1.0 : slope * pt->mean + intercept;
            v = std::max(v, max_var * 1e-3);
            const double wgt = 1.0 / (v * v);
            sw += wgt;
            swx += wgt * pt->mean;
            swy += wgt * pt->variance;
            swxx += wgt * pt->mean * pt->mean;
            swxy += wgt * pt->mean * pt->variance;
        }
        const double det = sw * swxx - swx * swx;
        if (std::abs(det) < 1e-300)
            throw std::invalid_argument("fit_noise_curve: degenerate patch means");
        slope = (sw * swxy - swx * swy) / det;
        intercept = (swxx * swy - swx * swxy) / det;
    }
    curve.slope = slope;
    curve.intercept = intercept;

    double ss = 0.0;
    for (const auto* pt : used) {
        const double r = pt->variance - (curve.slope * pt->mean + curve.intercept);
        ss += r * r;
    }
    curve.residual_rms = std::sqrt(ss / static_cast<double>(used.size()));
    if (!std::isfinite(curve.residual_rms))
        throw NumericalError("fit_noise_curve: non-finite fit residual");

    curve.slope_clamped = curve.slope < 0.0;
    curve.fitted.alpha = std::max(curve.slope, 0.0);
    curve.fitted.sigma = std::sqrt(std::max(curve.intercept, 0.0));
    return curve;
}

} // namespace dpipe
