#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "dpipe/conv.hpp"
#include "dpipe/hqs.hpp"
#include "test_support.hpp"

using namespace dpipe;
using dpipe::testing::random_tensor;

namespace {

// Dense circulant operator: column j is circ_conv applied to the j-th unit
// impulse. The oracle never touches the Fourier path.
Eigen::MatrixXd circulant_matrix(const Tensor& kernel, int H, int W) {
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

// Explicit normal-equations solve (lambda/beta * A^T A + sum_i C_i^T C_i + eps I) x = rhs,
// one color channel at a time; z is shared across colors in merged mode.
Tensor dense_x_update(const HqsStage& stage, const Psf* psf, const Tensor& y, const Tensor& z) {
    const int H = y.h, W = y.w, n = H * W, m = stage.filter_count();
    const double ratio = stage.lambda() / stage.beta();

    Eigen::MatrixXd A = psf ? circulant_matrix(psf->kernel, H, W)
                            : Eigen::MatrixXd::Identity(n, n);
    std::vector<Eigen::MatrixXd> C;
    for (int i = 0; i < m; ++i)
        C.push_back(circulant_matrix(channel_plane(stage.filters, i), H, W));

    Eigen::MatrixXd M = ratio * A.transpose() * A +
                        kXUpdateRidge * Eigen::MatrixXd::Identity(n, n);
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

HqsStage random_stage(int m, int ks, bool merged, Rng& rng) {
    HqsStage s;
    s.merge_colors = merged;
    s.log_lambda = Tensor::scalar(rng.next_uniform() * 2.0 - 1.0);
    s.log_beta = Tensor::scalar(rng.next_uniform() * 2.0 - 1.0);
    s.filters = Tensor(ks, ks, m);
    for (Eigen::Index i = 0; i < s.filters.size(); ++i)
        s.filters.data[i] = rng.next_gaussian() * 0.5;
    return s;
}

double rel_max_err(const Tensor& got, const Tensor& want) {
    return max_abs_diff(got, want) / std::max(1e-30, max_abs(want));
}

// max-abs residual of the normal equations at x, evaluated with convolutions.
double normal_eq_residual(const HqsStage& stage, const Psf* psf, const Tensor& y, const Tensor& z,
                          const Tensor& x) {
    const double ratio = stage.lambda() / stage.beta();
    const int m = stage.filter_count();
    Tensor lhs(x.h, x.w, x.c);
    const Tensor ax = psf ? circ_conv(x, psf->kernel) : x;
    const Tensor atax = psf ? circ_conv(ax, psf->kernel, ConvMode::adjoint) : ax;
    lhs.data = ratio * atax.data + kXUpdateRidge * x.data;
    const Tensor aty = psf ? circ_conv(y, psf->kernel, ConvMode::adjoint) : y;
    Tensor rhs(x.h, x.w, x.c);
    rhs.data = ratio * aty.data;
    for (int c = 0; c < x.c; ++c) {
        for (int i = 0; i < m; ++i) {
            const Tensor ki = channel_plane(stage.filters, i);
            const Tensor cx = circ_conv(channel_plane(x, c), ki);
            Tensor ctcx = circ_conv(cx, ki, ConvMode::adjoint);
            const int ch = stage.merge_colors ? i : c * m + i;
            const Tensor ctz = circ_conv(channel_plane(z, ch), ki, ConvMode::adjoint);
            for (Eigen::Index p = 0; p < ctcx.size(); ++p) {
                lhs.data[p * x.c + c] += ctcx.data[p];
                rhs.data[p * x.c + c] += ctz.data[p];
            }
        }
    }
    return max_abs_diff(lhs, rhs);
}

} // namespace

TEST_CASE("x-update matches the dense circulant solve in all four configurations") {
    Rng rng(51);
    for (const bool deblur : {false, true}) {
        for (const bool merged : {false, true}) {
            for (int draw = 0; draw < 3; ++draw) {
                const int colors = merged ? 3 : 2;
                const int m = 2;
                HqsStage s = random_stage(m, 3, merged, rng);
                const Psf psf = gaussian_psf(3, 0.9);
                const Tensor y = random_tensor(8, 8, colors, rng, 0.0, 1.0);
                const Tensor z = random_tensor(8, 8, merged ? m : m * colors, rng);
                const Psf* p = deblur ? &psf : nullptr;
                const Tensor got = hqs_x_update(s, deblur ? PipelineMode::deblur
                                                          : PipelineMode::denoise,
                                                p, y, z);
                const Tensor want = dense_x_update(s, p, y, z);
                CHECK(rel_max_err(got, want) < 1e-8);
                CHECK(normal_eq_residual(s, p, y, z, got) < 1e-8);
            }
        }
    }
}

TEST_CASE("denoise mode with an empty filter bank returns the data") {
    Rng rng(52);
    HqsStage s;
    s.log_lambda = Tensor::scalar(0.3);
    s.log_beta = Tensor::scalar(-0.2);
    const Tensor y = random_tensor(6, 6, 1, rng, 0.0, 1.0);
    const Tensor x = hqs_x_update(s, PipelineMode::denoise, nullptr, y, Tensor(0, 0, 0));
    CHECK(max_abs_diff(x, y) < 1e-6); // up to the 1e-9 ridge
}

TEST_CASE("deblur mode solves a consistent system exactly") {
    Rng rng(53);
    const Psf psf = gaussian_psf(3, 0.7);
    HqsStage s = random_stage(3, 3, false, rng);
    const Tensor x_true = random_tensor(8, 8, 1, rng, 0.0, 1.0);
    const Tensor y = circ_conv(x_true, psf.kernel);
    const Tensor z = filter_responses(s, x_true);
    const Tensor got = hqs_x_update(s, PipelineMode::deblur, &psf, y, z);
    CHECK(max_abs_diff(got, x_true) < 1e-8);
}

TEST_CASE("x-update is jointly linear in (y, z)") {
    Rng rng(54);
    HqsStage s = random_stage(2, 3, false, rng);
    const Tensor y1 = random_tensor(8, 8, 1, rng), y2 = random_tensor(8, 8, 1, rng);
    const Tensor z1 = random_tensor(8, 8, 2, rng), z2 = random_tensor(8, 8, 2, rng);
    const double a = 0.7, b = -1.3;
    Tensor yc(8, 8, 1), zc(8, 8, 2);
    yc.data = a * y1.data + b * y2.data;
    zc.data = a * z1.data + b * z2.data;
    const Tensor lhs = hqs_x_update(s, PipelineMode::denoise, nullptr, yc, zc);
    const Tensor u1 = hqs_x_update(s, PipelineMode::denoise, nullptr, y1, z1);
    const Tensor u2 = hqs_x_update(s, PipelineMode::denoise, nullptr, y2, z2);
    Tensor want(8, 8, 1);
    want.data = a * u1.data + b * u2.data;
    CHECK(max_abs_diff(lhs, want) < 1e-10);
}

TEST_CASE("identity prox passes responses through unchanged") {
    Rng rng(55);
    HqsStage s;
    s.filters = dct_filter_bank(3, 4);
    ProxLayer layer;
    layer.weight = Tensor(4, 4, 1);
    for (int i = 0; i < 4; ++i) layer.weight.at(i, i, 0) = 1.0;
    layer.bias = Tensor(1, 1, 4);
    s.prox.layers.push_back(layer);
    const Tensor responses = random_tensor(5, 5, 4, rng);
    CHECK(max_abs_diff(prox_apply(s, responses), responses) == 0.0);
}

TEST_CASE("all-zero final layer broadcasts its bias") {
    Rng rng(56);
    HqsStage s;
    s.filters = dct_filter_bank(3, 2);
    ProxLayer layer;
    layer.weight = Tensor(2, 2, 1);
    layer.bias = Tensor(1, 1, 2);
    layer.bias.data[0] = 0.25;
    layer.bias.data[1] = -1.5;
    s.prox.layers.push_back(layer);
    const Tensor z = prox_apply(s, random_tensor(4, 6, 2, rng));
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) {
            CHECK(z.at(y, x, 0) == 0.25);
            CHECK(z.at(y, x, 1) == -1.5);
        }
}

TEST_CASE("prox output at a pixel depends only on that pixel") {
    Rng rng(57);
    PipelineConfig cfg;
    cfg.filter_count = 3;
    cfg.filter_size = 3;
    cfg.prox_layers = 3;
    cfg.prox_channels = 5;
    cfg.noise = NoiseParams{0.01, 0.01};
    const HqsPipeline pipe = make_pipeline(cfg, nullptr, Rng(4));
    const HqsStage& s = pipe.stages[0];
    Tensor responses = random_tensor(6, 6, 3, rng);
    const Tensor base = prox_apply(s, responses);
    responses.at(2, 3, 1) += 0.5;
    const Tensor bumped = prox_apply(s, responses);
    int changed_pixels = 0;
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c)
                if (base.at(y, x, c) != bumped.at(y, x, c)) {
                    CHECK(y == 2);
                    CHECK(x == 3);
                    ++changed_pixels;
                }
    CHECK(changed_pixels > 0);
}

TEST_CASE("filter responses: identity filter and merged-color linearity") {
    Rng rng(58);
    HqsStage s;
    s.filters = Tensor(1, 1, 1);
    s.filters.data[0] = 1.0;
    const Tensor x = random_tensor(5, 5, 2, rng);
    CHECK(max_abs_diff(filter_responses(s, x), x) == 0.0);

    // Merged responses over identical channels = channels x single-channel.
    HqsStage sm = random_stage(3, 3, true, rng);
    const Tensor plane = random_tensor(6, 6, 1, rng);
    Tensor trip(6, 6, 3);
    for (int c = 0; c < 3; ++c) set_channel_plane(trip, c, plane);
    HqsStage s1 = sm;
    s1.merge_colors = false;
    const Tensor merged = filter_responses(sm, trip);
    const Tensor single = filter_responses(s1, plane);
    Tensor want(6, 6, 3);
    want.data = 3.0 * single.data;
    CHECK(max_abs_diff(merged, want) < 1e-12);
}

TEST_CASE("filter responses adjoint identity through the tape") {
    Rng rng(59);
    const Tensor x = random_tensor(7, 6, 3, rng);
    const Tensor bank = random_tensor(3, 3, 2, rng);
    for (const bool merged : {false, true}) {
        Tape t;
        const Var xv = t.leaf(x);
        const Var out = filter_responses_fwd(t, xv, t.constant(bank), 2, merged);
        const Tensor w = random_tensor(t.val(out).h, t.val(out).w, t.val(out).c, rng);
        const Var loss = sum(t, mul(t, out, t.constant(w)));
        const double lhs = t.val(loss).data[0];
        t.backward(loss);
        CHECK(std::abs(lhs - dot(x, t.grad_or_zero(xv))) / std::max(1.0, std::abs(lhs)) < 1e-10);
    }
}

TEST_CASE("zero-stage pipelines are identities") {
    Rng rng(60);
    const Tensor y = random_tensor(8, 8, 1, rng, 0.05, 0.95);

    HqsPipeline plain;
    plain.mode = PipelineMode::denoise;
    plain.use_gat = false;
    CHECK(max_abs_diff(run_pipeline(plain, y), y) == 0.0);

    HqsPipeline gat;
    gat.mode = PipelineMode::denoise;
    gat.use_gat = true;
    gat.noise = NoiseParams{0.02, 0.01};
    CHECK(max_abs_diff(run_pipeline(gat, y), y) < 1e-12);
}

TEST_CASE("pipeline forward is deterministic") {
    PipelineConfig cfg;
    cfg.noise = NoiseParams{0.01, 0.01};
    cfg.filter_count = 8;
    cfg.filter_size = 3;
    const HqsPipeline pipe = make_pipeline(cfg, nullptr, Rng(9));
    Rng rng(61);
    const Tensor y = random_tensor(16, 16, 1, rng, 0.0, 1.0);
    CHECK(max_abs_diff(run_pipeline(pipe, y), run_pipeline(pipe, y)) == 0.0);
}

TEST_CASE("color deblur pipeline runs end to end") {
    PipelineConfig cfg;
    cfg.mode = PipelineMode::deblur;
    cfg.noise = NoiseParams{0.01, 0.01};
    cfg.filter_count = 6;
    cfg.filter_size = 3;
    cfg.prox_channels = 6;
    const Psf psf = gaussian_psf(5, 1.2, "wide");
    const HqsPipeline pipe = make_pipeline(cfg, &psf, Rng(71));
    CHECK(pipe.stages[0].merge_colors);
    CHECK_FALSE(pipe.use_gat);
    Rng rng(72);
    const Tensor clean = random_tensor(16, 16, 3, rng, 0.0, 1.0);
    const Tensor captured = simulate_capture(clean, &psf, pipe.noise, Rng(73));
    const Tensor restored = run_pipeline(pipe, captured);
    CHECK(restored.h == 16);
    CHECK(restored.c == 3);
    CHECK(all_finite(restored));
    CHECK(max_abs_diff(run_pipeline(pipe, captured), restored) == 0.0);
}

TEST_CASE("pipeline validation catches contract violations") {
    PipelineConfig cfg;
    cfg.mode = PipelineMode::deblur;
    CHECK_THROWS_AS(make_pipeline(cfg, nullptr, Rng(0)), std::invalid_argument);

    PipelineConfig even;
    even.filter_size = 4;
    even.noise = NoiseParams{0.01, 0.0};
    CHECK_THROWS_AS(make_pipeline(even, nullptr, Rng(0)), std::invalid_argument);

    PipelineConfig gatless;
    gatless.noise = NoiseParams{0.0, 0.01}; // GAT needs alpha > 0
    CHECK_THROWS_AS(make_pipeline(gatless, nullptr, Rng(0)), std::invalid_argument);
}

TEST_CASE("DCT bank drops the constant atom and normalizes") {
    const Tensor bank = dct_filter_bank(5, 24);
    CHECK(bank.c == 24);
    for (int i = 0; i < 24; ++i) {
        const Tensor f = channel_plane(bank, i);
        CHECK(f.data.square().sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(f.data.sum()) < 1e-9); // non-constant atoms are zero mean
    }
    CHECK_THROWS_AS(dct_filter_bank(5, 25), std::invalid_argument);
}
