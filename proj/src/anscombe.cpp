#include "dpipe/anscombe.hpp"

namespace dpipe {

Tensor gat_forward(const Tensor& y, const NoiseParams& noise) {
    if (noise.alpha <= 0.0)
        throw std::invalid_argument("gat_forward: requires alpha > 0; bypass the transform instead");
    Tensor z(y.h, y.w, y.c);
    for (Eigen::Index i = 0; i < y.size(); ++i) z.data[i] = gat_forward_value(y.data[i], noise);
    return z;
}

Tensor gat_inverse(const Tensor& z, const NoiseParams& noise) {
    if (noise.alpha <= 0.0) throw std::invalid_argument("gat_inverse: requires alpha > 0");
    if ((z.data < 0.0).any()) throw std::invalid_argument("gat_inverse: negative entries");
    Tensor y(z.h, z.w, z.c);
    for (Eigen::Index i = 0; i < z.size(); ++i) y.data[i] = gat_inverse_value(z.data[i], noise);
    return y;
}

} // namespace dpipe
