#include "dpipe/hqs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dpipe/conv.hpp"
#include "dpipe/fft.hpp"

namespace dpipe {

namespace {

std::string stage_prefix(std::size_t i) { return "stage" + std::to_string(i) + "/"; }

Tensor he_matrix(int out, int in, Rng& rng) {
    Tensor w(out, in, 1);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data[i] = std_dev * rng.next_gaussian();
    return w;
}

} // namespace

Tensor dct_filter_bank(int size, int count) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("dct_filter_bank: size must be odd");
    if (count < 0 || count > size * size - 1)
        throw std::invalid_argument("dct_filter_bank: count must be in [0, size^2 - 1]");

    // Atom order: by total frequency p + q, then p.
    std::vector<std::pair<int, int>> order;
    for (int p = 0; p < size; ++p)
        for (int q = 0; q < size; ++q)
            if (p != 0 || q != 0) order.emplace_back(p, q);
    std::stable_sort(order.begin(), order.end(), [](auto a, auto b) {
        return a.first + a.second != b.first + b.second ? a.first + a.second < b.first + b.second
                                                        : a.first < b.first;
    });

    Tensor bank(size, size, count);
    for (int i = 0; i < count; ++i) {
        const auto [p, q] = order[static_cast<std::size_t>(i)];
        double norm = 0.0;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double v = std::cos(std::numbers::pi * (2 * y + 1) * p / (2.0 * size)) *
                                 std::cos(std::numbers::pi * (2 * x + 1) * q / (2.0 * size));
                bank.at(y, x, i) = v;
                norm += v * v;
            }
        norm = std::sqrt(norm);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) bank.at(y, x, i) /= norm;
    }
    return bank;
}

HqsPipeline make_pipeline(const PipelineConfig& cfg, const Psf* psf, Rng rng) {
    if (cfg.stages < 0) throw std::invalid_argument("pipeline: negative stage count");
    if (cfg.filter_size % 2 == 0)
        throw std::invalid_argument("pipeline: filter size must be odd");
    if (cfg.prox_layers < 1) throw std::invalid_argument("pipeline: need at least one prox layer");

    HqsPipeline pipe;
    pipe.mode = cfg.mode;
    pipe.use_gat = cfg.use_gat.value_or(cfg.mode == PipelineMode::denoise);
    pipe.noise = cfg.noise;
    if (cfg.mode == PipelineMode::deblur) {
        if (!psf) throw std::invalid_argument("pipeline: deblur mode requires a PSF");
        pipe.psf = *psf;
    } else if (psf) {
        pipe.psf = *psf;
    }
    const bool merged = cfg.merge_colors.value_or(cfg.mode == PipelineMode::deblur);

    for (int s = 0; s < cfg.stages; ++s) {
        HqsStage stage;
        stage.merge_colors = merged;
        stage.filters = dct_filter_bank(cfg.filter_size, cfg.filter_count);
        const int m = cfg.filter_count;
        for (int l = 0; l < cfg.prox_layers; ++l) {
            const int in = l == 0 ? m : cfg.prox_channels;
            const int out = l == cfg.prox_layers - 1 ? m : cfg.prox_channels;
            ProxLayer layer;
            layer.weight = he_matrix(out, in, rng);
            layer.bias = Tensor(1, 1, out);
            stage.prox.layers.push_back(std::move(layer));
        }
        pipe.stages.push_back(std::move(stage));
    }
    pipe.validate();
    return pipe;
}

void HqsPipeline::validate() const {
    if (mode == PipelineMode::deblur) {
        if (!psf) throw std::invalid_argument("pipeline: deblur mode requires a PSF");
        if (use_gat) throw std::invalid_argument("pipeline: GAT is incompatible with deblur mode");
    }
    if (use_gat && noise.alpha <= 0.0)
        throw std::invalid_argument("pipeline: GAT requires alpha > 0");
    for (const HqsStage& s : stages) {
        if (s.filters.c > 0 && (s.filters.h % 2 == 0 || s.filters.w % 2 == 0))
            throw std::invalid_argument("pipeline: filters must have odd dimensions");
        if (!s.prox.layers.empty()) {
            if (s.prox.in_channels() != s.filter_count() ||
                s.prox.out_channels() != s.filter_count())
                throw std::invalid_argument(
                    "pipeline: prox channel count must match the filter count");
            for (std::size_t l = 1; l < s.prox.layers.size(); ++l)
                if (s.prox.layers[l].weight.w != s.prox.layers[l - 1].weight.h)
                    throw std::invalid_argument("pipeline: prox layer dimensions do not chain");
        }
    }
}

ParamList HqsPipeline::params() const {
    ParamList list;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        auto& stage = const_cast<HqsStage&>(stages[s]);
        const std::string p = stage_prefix(s);
        list.push_back({p + "log_lambda", &stage.log_lambda});
        list.push_back({p + "log_beta", &stage.log_beta});
        if (stage.filters.c > 0) list.push_back({p + "filters", &stage.filters});
        for (std::size_t l = 0; l < stage.prox.layers.size(); ++l) {
            list.push_back({p + "prox/w" + std::to_string(l), &stage.prox.layers[l].weight});
            list.push_back({p + "prox/b" + std::to_string(l), &stage.prox.layers[l].bias});
        }
    }
    return list;
}

Var filter_responses_fwd(Tape& t, Var x, Var filters, int m, bool merged) {
    const int colors = t.val(x).c;
    if (m <= 0) throw std::invalid_argument("filter_responses: empty filter bank");
    std::vector<Var> color_planes;
    for (int c = 0; c < colors; ++c)
        color_planes.push_back(colors == 1 ? x : slice_channel(t, x, c));

    std::vector<Var> parts;
    if (merged) {
        for (int i = 0; i < m; ++i) {
            const Var ki = slice_channel(t, filters, i);
            Var acc = circ_conv_op(t, color_planes[0], ki);
            for (int c = 1; c < colors; ++c)
                acc = add(t, acc, circ_conv_op(t, color_planes[c], ki));
            parts.push_back(acc);
        }
    } else {
        for (int c = 0; c < colors; ++c)
            for (int i = 0; i < m; ++i)
                parts.push_back(circ_conv_op(t, color_planes[c], slice_channel(t, filters, i)));
    }
    return parts.size() == 1 ? parts[0] : concat_channels(t, parts);
}

Var prox_apply_fwd(Tape& t, const std::vector<std::pair<Var, Var>>& layers, Var responses,
                   int groups) {
    if (layers.empty()) throw std::invalid_argument("prox_apply: no layers");
    Var h = pixel_affine(t, responses, layers[0].first, layers[0].second, groups);
    for (std::size_t l = 1; l < layers.size(); ++l)
        h = pixel_affine(t, relu(t, h), layers[l].first, layers[l].second, groups);
    return h;
}

Var hqs_x_update_fwd(Tape& t, Var y, Var z, Var filters, Var ratio, const Psf* psf, bool merged) {
    const Tensor& yv = t.val(y);
    const int H = yv.h, W = yv.w, colors = yv.c;
    const int m = t.val(filters).c;
    if (m > 0 && t.val(z).c != (merged ? m : m * colors))
        throw std::invalid_argument("hqs_x_update: z channel count mismatch");

    // Transfer functions of the prior filters.
    std::vector<Var> conj_c(m), abs_c(m);
    for (int i = 0; i < m; ++i) {
        const Var ci = fft2_op(t, kernel_to_plane_op(t, slice_channel(t, filters, i), H, W));
        conj_c[static_cast<std::size_t>(i)] = conj_op(t, ci);
        abs_c[static_cast<std::size_t>(i)] = cabs2(t, ci);
    }

    // Data-term transfer function; identity in denoise mode.
    Var conj_k, abs_k;
    if (psf) {
        const Var kp = t.constant(kernel_to_plane(psf->kernel, H, W));
        const Var kf = fft2_op(t, kp);
        conj_k = conj_op(t, kf);
        abs_k = cabs2(t, kf);
    } else {
        abs_k = t.constant(Tensor::constant(H, W, 1, 1.0));
    }

    Var denom = scale(t, abs_k, ratio);
    for (int i = 0; i < m; ++i) denom = add(t, denom, abs_c[static_cast<std::size_t>(i)]);
    denom = add_const(t, denom, kXUpdateRidge);
    if (t.val(denom).data.minCoeff() <= 0.0)
        throw NumericalError("hqs_x_update: non-positive denominator bin");

    // In merged mode the z spectra are shared across colors.
    std::vector<Var> z_hat_shared(static_cast<std::size_t>(merged ? m : 0));
    if (merged)
        for (int i = 0; i < m; ++i)
            z_hat_shared[static_cast<std::size_t>(i)] =
                fft2_op(t, t.val(z).c == 1 ? z : slice_channel(t, z, i));

    std::vector<Var> out_planes;
    for (int c = 0; c < colors; ++c) {
        const Var yc = fft2_op(t, colors == 1 ? y : slice_channel(t, y, c));
        Var num = psf ? cscale(t, cmul(t, conj_k, yc), ratio) : cscale(t, yc, ratio);
        for (int i = 0; i < m; ++i) {
            const Var zi = merged ? z_hat_shared[static_cast<std::size_t>(i)]
                                  : fft2_op(t, slice_channel(t, z, c * m + i));
            num = cadd(t, num, cmul(t, conj_c[static_cast<std::size_t>(i)], zi));
        }
        out_planes.push_back(ifft2_real_op(t, cdiv_real(t, num, denom)));
    }
    return out_planes.size() == 1 ? out_planes[0] : concat_channels(t, out_planes);
}

Var pipeline_forward(Tape& t, const HqsPipeline& pipe, const BoundParams& bound, Var y) {
    pipe.validate();
    Var x = pipe.use_gat ? gat_forward_op(t, y, pipe.noise) : y;
    const Var y_data = x;
    const Psf* psf = pipe.mode == PipelineMode::deblur ? &*pipe.psf : nullptr;

    for (std::size_t s = 0; s < pipe.stages.size(); ++s) {
        const HqsStage& stage = pipe.stages[s];
        const std::string p = stage_prefix(s);
        const Var ratio = exp_op(t, sub(t, bound.var(p + "log_lambda"), bound.var(p + "log_beta")));
        const int m = stage.filter_count();
        Var z{-1}, filters{-1};
        if (m > 0) {
            filters = bound.var(p + "filters");
            const Var responses = filter_responses_fwd(t, x, filters, m, stage.merge_colors);
            std::vector<std::pair<Var, Var>> layers;
            for (std::size_t l = 0; l < stage.prox.layers.size(); ++l)
                layers.emplace_back(bound.var(p + "prox/w" + std::to_string(l)),
                                    bound.var(p + "prox/b" + std::to_string(l)));
            const int groups = stage.merge_colors ? 1 : t.val(x).c;
            z = prox_apply_fwd(t, layers, responses, groups);
        } else {
            filters = t.constant(Tensor(0, 0, 0));
            z = t.constant(Tensor(0, 0, 0));
        }
        x = hqs_x_update_fwd(t, y_data, z, filters, ratio, psf, stage.merge_colors);
    }
    return pipe.use_gat ? gat_inverse_op(t, x, pipe.noise) : x;
}

// -- pure wrappers ------------------------------------------------------------

Tensor run_pipeline(const HqsPipeline& pipe, const Tensor& y) {
    require_finite(y, "run_pipeline input");
    Tape t;
    const ParamList params = pipe.params(); // must outlive the bound view
    const BoundParams bound = bind_params(t, params, /*trainable=*/false);
    Tensor out = t.val(pipeline_forward(t, pipe, bound, t.constant(y)));
    require_finite(out, "run_pipeline output");
    return out;
}

Tensor filter_responses(const HqsStage& stage, const Tensor& x) {
    Tape t;
    return t.val(filter_responses_fwd(t, t.constant(x), t.constant(stage.filters),
                                      stage.filter_count(), stage.merge_colors));
}

Tensor prox_apply(const HqsStage& stage, const Tensor& responses, int groups) {
    const int m = stage.prox.in_channels();
    if (responses.c != m * groups)
        throw std::invalid_argument("prox_apply: expected " + std::to_string(m * groups) +
                                    " channels, got " + std::to_string(responses.c));
    Tape t;
    std::vector<std::pair<Var, Var>> layers;
    for (const ProxLayer& l : stage.prox.layers)
        layers.emplace_back(t.constant(l.weight), t.constant(l.bias));
    return t.val(prox_apply_fwd(t, layers, t.constant(responses), groups));
}

Tensor hqs_x_update(const HqsStage& stage, PipelineMode mode, const Psf* psf, const Tensor& y,
                    const Tensor& z) {
    if (mode == PipelineMode::deblur && !psf)
        throw std::invalid_argument("hqs_x_update: deblur mode requires a PSF");
    Tape t;
    const Var ratio = t.constant(Tensor::scalar(stage.lambda() / stage.beta()));
    return t.val(hqs_x_update_fwd(t, t.constant(y), t.constant(z), t.constant(stage.filters),
                                  ratio, mode == PipelineMode::deblur ? psf : nullptr,
                                  stage.merge_colors));
}

} // namespace dpipe
