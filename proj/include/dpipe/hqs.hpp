#pragma once

#include <optional>
#include <vector>

#include "dpipe/imaging.hpp"
#include "dpipe/ops.hpp"
#include "dpipe/params.hpp"
#include "dpipe/rng.hpp"

namespace dpipe {

enum class PipelineMode { denoise, deblur };

/// Learned per-pixel network applied to filter responses: chained affine maps
/// with ReLU between layers and none after the last. Weight (out, in, 1),
/// bias (1, 1, out).
struct ProxLayer {
    Tensor weight;
    Tensor bias;
};

struct ProxNet {
    std::vector<ProxLayer> layers;

    int in_channels() const { return layers.empty() ? 0 : layers.front().weight.w; }
    int out_channels() const { return layers.empty() ? 0 : layers.back().weight.h; }
};

/// One unrolled HQS stage: a filter bank, a learned proximal operator, and
/// data/penalty weights stored as logs so positivity survives training.
struct HqsStage {
    Tensor log_lambda = Tensor::scalar(0.0);
    Tensor log_beta = Tensor::scalar(0.0);
    Tensor filters; // (kh, kw, m), shared across color channels
    ProxNet prox;
    bool merge_colors = false;

    int filter_count() const { return filters.c; }
    double lambda() const { return std::exp(log_lambda.data[0]); }
    double beta() const { return std::exp(log_beta.data[0]); }
};

struct HqsPipeline {
    PipelineMode mode = PipelineMode::denoise;
    bool use_gat = true;
    NoiseParams noise;
    std::optional<Psf> psf; // required in deblur mode
    std::vector<HqsStage> stages;

    /// Trainable arrays in a fixed order (stage-major).
    ParamList params() const;
    void validate() const;
};

struct PipelineConfig {
    PipelineMode mode = PipelineMode::denoise;
    int stages = 1;
    int filter_count = 24;
    int filter_size = 5;
    int prox_layers = 3;
    int prox_channels = 24;
    std::optional<bool> merge_colors; // default: false for denoise, true for deblur
    std::optional<bool> use_gat;      // default: true for denoise, false for deblur
    NoiseParams noise;
    std::string psf_path; // deblur mode only
};

/// Builds a pipeline with DCT-initialized filters (constant atom dropped) and
/// He-initialized prox weights. lambda = beta = 1.
HqsPipeline make_pipeline(const PipelineConfig& cfg, const Psf* psf, Rng rng);

// -- tape builders ----------------------------------------------------------

/// Filter responses of x (h, w, C): circular convolution of every channel
/// with every filter. Merged: responses summed over colors, m channels;
/// unmerged: m channels per color, color-major layout (c*m + i).
Var filter_responses_fwd(Tape& t, Var x, Var filters, int m, bool merged);

/// Applies the prox network pixelwise to each group of net-input channels.
Var prox_apply_fwd(Tape& t, const std::vector<std::pair<Var, Var>>& layers, Var responses,
                   int groups);

/// Fourier-domain least-squares update: per color channel,
/// X = [ratio*conj(K)*Y + sum_i conj(C_i)*Z_i] / [ratio*|K|^2 + sum_i |C_i|^2 + eps]
/// with K = 1 in denoise mode and ratio = lambda/beta.
Var hqs_x_update_fwd(Tape& t, Var y, Var z, Var filters, Var ratio, const Psf* psf, bool merged);

/// Full reconstruction forward pass on a tape. In denoise mode the HQS core
/// runs between the variance-stabilizing transform and its inverse.
Var pipeline_forward(Tape& t, const HqsPipeline& pipe, const BoundParams& bound, Var y);

// -- pure wrappers (build a scratch tape internally) --------------------------

Tensor run_pipeline(const HqsPipeline& pipe, const Tensor& y);
Tensor filter_responses(const HqsStage& stage, const Tensor& x);
Tensor prox_apply(const HqsStage& stage, const Tensor& responses, int groups = 1);
Tensor hqs_x_update(const HqsStage& stage, PipelineMode mode, const Psf* psf, const Tensor& y,
                    const Tensor& z);

/// x-update ridge; guards all-zero denominator bins in deblur mode.
inline constexpr double kXUpdateRidge = 1e-9;

/// First `count` non-constant atoms of the size x size DCT basis, unit L2
/// norm, lowest spatial frequencies first.
Tensor dct_filter_bank(int size, int count);

} // namespace dpipe
