#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dpipe/rng.hpp"
#include "dpipe/tensor.hpp"

namespace dpipe {

/// Calibrated sensor noise: signal-dependent shot noise of scale `alpha` and
/// signal-independent read noise of std `sigma`, both in [0,1] intensity units.
struct NoiseParams {
    double alpha = 0.0;
    double sigma = 0.0;
};

/// Normalized lens blur kernel; entries >= 0 and summing to 1, odd dimensions.
struct Psf {
    Tensor kernel;
    std::string label;
};

/// Validates and normalizes a raw kernel into a Psf (throws on negative
/// entries or even dimensions). Sets *renormalized if the sum deviated from 1
/// by more than 1e-6 before normalization.
Psf make_psf(Tensor kernel, std::string label, bool* renormalized = nullptr);

/// Truncated, normalized isotropic Gaussian blur kernel (odd size).
Psf gaussian_psf(int size, double sigma_px, std::string label = "gaussian");

struct NoisePoint {
    double mean = 0.0;
    double variance = 0.0;
    double clipped_fraction = 0.0;
    bool used_in_fit = true;
};

struct NoiseCurve {
    std::vector<NoisePoint> samples;
    NoiseParams fitted;
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
    bool slope_clamped = false; // negative fitted slope clamped to 0
};

/// Simulates one capture: y = clip_[0,1]( alpha * Poisson((psf * x)/alpha) + N(0, sigma^2) ).
/// With psf == nullptr the blur is skipped; with alpha == 0 the shot-noise term
/// degenerates to psf * x exactly. Each pixel draws from a fixed slot of the
/// rng counter space, so results are independent of evaluation order.
Tensor simulate_capture(const Tensor& x, const Psf* psf, const NoiseParams& noise, const Rng& rng);

/// Fits variance = alpha * mean + sigma^2 over per-patch sample moments by
/// weighted least squares, excluding patches with a clipped-pixel fraction
/// above 0.5% (the unclipped-regime fit). Requires >= 3 usable patches.
NoiseCurve fit_noise_curve(const std::vector<std::pair<double, Tensor>>& patches);

/// One Poisson draw with the given rate; inverse-CDF search below rate 30,
/// rounded Gaussian approximation above. Consumes rng counters
/// `counter` and `counter + 1`.
double poisson_sample(double rate, const Rng& rng, std::uint64_t counter);

} // namespace dpipe
