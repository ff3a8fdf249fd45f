#pragma once

#include <filesystem>
#include <functional>
#include <span>

#include "dpipe/classifier.hpp"
#include "dpipe/hqs.hpp"
#include "dpipe/optim.hpp"

namespace dpipe {

struct TrainConfig {
    PipelineConfig pipeline;
    OptimizerConfig optimizer;
    int epochs = 1;
    int batch_size = 4;
    std::uint64_t seed = 0;
    bool train_lowlevel = true;
    bool train_classifier = false;
    int threads = 0; // 0 = hardware concurrency
};

/// One training example; tensors are owned by the caller.
struct TrainItem {
    const Tensor* clean = nullptr;
    const Tensor* degraded = nullptr;
    int label = -1;
};

struct HistoryRow {
    int step = 0;
    double loss = 0.0;
    double psnr = 0.0;
    bool has_psnr = false;
    double lr = 0.0;
};

/// Minibatch RMSProp over the selected trainable subset. With a classifier
/// present the loss is softmax cross-entropy on the labels, otherwise MSE of
/// the pipeline output against the clean reference. Per-item forward passes
/// may run in parallel; gradient accumulation is serial and index-ordered,
/// so results are bit-identical for any thread count.
std::vector<HistoryRow> train(HqsPipeline* pipe, ToyClassifier* clf,
                              std::span<const TrainItem> items, const TrainConfig& cfg);

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);

/// Loss and mean PSNR of the pipeline output over a dataset (no training).
struct EvalStats {
    double mean_psnr_in = 0.0;  // degraded vs clean
    double mean_psnr_out = 0.0; // pipeline output vs clean
    double accuracy = 0.0;      // only with a classifier
    int n = 0;
};
EvalStats evaluate(const HqsPipeline* pipe, const ToyClassifier* clf,
                   std::span<const TrainItem> items, int threads = 0);

// -- gradient checking --------------------------------------------------------

struct GradCheckArray {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0; // coordinates straddling a kink, resampled
    int worst_index = -1;
    double analytic = 0.0, numeric = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckArray> arrays;
    double tolerance = 0.0;
    bool pass = true;

    const GradCheckArray* worst() const;
};

/// Compares supplied analytic gradients against central finite differences of
/// `loss_value` on >= `samples_per_array` random coordinates per array
/// (h = 1e-5 * max(1, |p|)). Relative error 0 when both sides are ~0.
GradCheckReport grad_check_compare(const ParamList& params, const ParamGrads& analytic,
                                   const std::function<double()>& loss_value,
                                   int samples_per_array, double tolerance, std::uint64_t seed);

/// End-to-end check for a pipeline and/or classifier on one input. The loss is
/// MSE against `reference` without a classifier, cross-entropy on `label`
/// with one.
GradCheckReport grad_check(HqsPipeline* pipe, ToyClassifier* clf, const Tensor& input,
                           const Tensor* reference, int label, double tolerance,
                           std::uint64_t seed, int samples_per_array = 10);

} // namespace dpipe
