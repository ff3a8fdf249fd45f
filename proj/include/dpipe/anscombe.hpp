#pragma once

#include "dpipe/imaging.hpp"
#include "dpipe/tensor.hpp"

namespace dpipe {

// Generalized Anscombe transform: maps Poisson-Gaussian measurements to
// approximately unit-variance Gaussian data, and back. The inverse is the
// algebraic one, an exact functional inverse wherever the forward radicand
// is positive.

inline double gat_forward_value(double y, const NoiseParams& n) {
    const double r = n.alpha * y + 0.375 * n.alpha * n.alpha + n.sigma * n.sigma;
    return r > 0.0 ? (2.0 / n.alpha) * std::sqrt(r) : 0.0;
}

inline double gat_inverse_value(double z, const NoiseParams& n) {
    return n.alpha * z * z * 0.25 - 0.375 * n.alpha - n.sigma * n.sigma / n.alpha;
}

Tensor gat_forward(const Tensor& y, const NoiseParams& noise);
Tensor gat_inverse(const Tensor& z, const NoiseParams& noise);

} // namespace dpipe
