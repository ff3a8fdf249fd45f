#pragma once

#include <Eigen/Dense>

#include "dpipe/conv.hpp"
#include "dpipe/hqs.hpp"

// Dense normal-equations oracle for the Fourier x-update, built from explicit
// circulant matrices. Test-only; never touches the FFT path it checks.

namespace dpipe::testing {

inline Eigen::MatrixXd circulant_matrix(const Tensor& kernel, int H, int W) {
    const int n = H * W;
    Eigen::MatrixXd M(n, n);
    for (int j = 0; j < n; ++j) {
        Tensor e(H, W, 1);
        e.data[j] = 1.0;
        const Tensor col = circ_conv_direct(e, kernel, ConvMode::forward);
        for (int i = 0; i < n; ++i) M(i, j) = col.data[i];
    }
    return M;
}

inline Tensor dense_x_update(const HqsStage& stage, const Psf* psf, const Tensor& y,
                             const Tensor& z) {
    const int H = y.h, W = y.w, n = H * W, m = stage.filter_count();
    const double ratio = stage.lambda() / stage.beta();

    Eigen::MatrixXd A =
        psf ? circulant_matrix(psf->kernel, H, W) : Eigen::MatrixXd::Identity(n, n);
    std::vector<Eigen::MatrixXd> C;
    for (int i = 0; i < m; ++i)
        C.push_back(circulant_matrix(channel_plane(stage.filters, i), H, W));

    Eigen::MatrixXd M =
        ratio * A.transpose() * A + kXUpdateRidge * Eigen::MatrixXd::Identity(n, n);
    for (const auto& Ci : C) M += Ci.transpose() * Ci;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);

    Tensor out(H, W, y.c);
    for (int c = 0; c < y.c; ++c) {
        Eigen::VectorXd yc(n);
        for (int i = 0; i < n; ++i) yc(i) = y.data[static_cast<Eigen::Index>(i) * y.c + c];
        Eigen::VectorXd rhs = ratio * A.transpose() * yc;
        for (int i = 0; i < m; ++i) {
            const int ch = stage.merge_colors ? i : c * m + i;
            Eigen::VectorXd zi(n);
            for (int j = 0; j < n; ++j) zi(j) = z.data[static_cast<Eigen::Index>(j) * z.c + ch];
            rhs += C[static_cast<std::size_t>(i)].transpose() * zi;
        }
        const Eigen::VectorXd xc = lu.solve(rhs);
        for (int i = 0; i < n; ++i) out.data[static_cast<Eigen::Index>(i) * y.c + c] = xc(i);
    }
    return out;
}

} // namespace dpipe::testing
