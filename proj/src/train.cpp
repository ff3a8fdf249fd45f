#include "dpipe/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dpipe/fsio.hpp"
#include "dpipe/parallel.hpp"

namespace dpipe {

namespace {

struct ItemResult {
    ParamGrads grads;
    double loss = 0.0;
    double psnr = 0.0;
    bool has_psnr = false;
};

ParamList gather_params(HqsPipeline* pipe, ToyClassifier* clf, bool lowlevel, bool classifier) {
    ParamList list;
    if (pipe && lowlevel)
        for (auto& p : pipe->params()) list.push_back(p);
    if (clf && classifier)
        for (auto& p : clf->params()) list.push_back(p);
    return list;
}

// Forward + backward for one item; trainable params are bound as leaves,
// frozen model params as constants.
ItemResult item_pass(HqsPipeline* pipe, ToyClassifier* clf, const TrainItem& item,
                     const TrainConfig& cfg) {
    Tape t;
    const ParamList trainable = gather_params(pipe, clf, cfg.train_lowlevel, cfg.train_classifier);
    const ParamList frozen = gather_params(pipe, clf, !cfg.train_lowlevel, !cfg.train_classifier);
    const BoundParams bt = bind_params(t, trainable, /*trainable=*/true);
    const BoundParams bf = bind_params(t, frozen, /*trainable=*/false);

    auto lookup = [&](const ParamList& list, const BoundParams& bound, const std::string& name,
                      Var& out) {
        for (std::size_t i = 0; i < list.size(); ++i)
            if (list[i].name == name) {
                out = bound.vars[i];
                return true;
            }
        return false;
    };
    // A single bound view over both sets for the forward builders.
    ParamList all = trainable;
    BoundParams ball;
    for (const auto& p : frozen) all.push_back(p);
    ball.list = &all;
    for (const auto& p : all) {
        Var v;
        if (!lookup(trainable, bt, p.name, v)) lookup(frozen, bf, p.name, v);
        ball.vars.push_back(v);
    }

    Var x = t.constant(*item.degraded);
    if (pipe) x = pipeline_forward(t, *pipe, ball, x);

    ItemResult res;
    Var loss;
    if (clf) {
        const Var logits = classifier_forward(t, *clf, ball, x);
        loss = softmax_cross_entropy(t, logits, item.label);
    } else {
        loss = mse(t, x, t.constant(*item.clean));
        res.psnr = psnr_from_mse(t.val(loss).data[0]);
        res.has_psnr = true;
    }
    res.loss = t.val(loss).data[0];
    if (!std::isfinite(res.loss)) throw NumericalError("train: non-finite loss");
    t.backward(loss);
    res.grads = collect_grads(t, bt);
    return res;
}

} // namespace

std::vector<HistoryRow> train(HqsPipeline* pipe, ToyClassifier* clf,
                              std::span<const TrainItem> items, const TrainConfig& cfg) {
    if (items.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    const ParamList trainable =
        gather_params(pipe, clf, cfg.train_lowlevel, cfg.train_classifier);
    if (trainable.empty()) throw std::invalid_argument("train: nothing to train");

    RmsProp opt(cfg.optimizer);
    std::vector<HistoryRow> history;
    int step = 0;
    std::vector<int> order(items.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Deterministic shuffle derived from (seed, epoch).
        Rng shuffle_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        const double lr = opt.lr_at_epoch(epoch);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const int bs = static_cast<int>(
                std::min<std::size_t>(cfg.batch_size, order.size() - start));
            std::vector<ItemResult> results;
            try {
                results = parallel_map<ItemResult>(
                    bs,
                    [&](int i) {
                        return item_pass(pipe, clf, items[static_cast<std::size_t>(
                                                        order[start + static_cast<std::size_t>(i)])],
                                         cfg);
                    },
                    cfg.threads);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (step " + std::to_string(step) +
                                     ")");
            }

            ParamGrads total;
            double loss_sum = 0.0, psnr_sum = 0.0;
            bool has_psnr = false;
            for (const ItemResult& r : results) { // serial, index-ordered
                total.accumulate(r.grads, 1.0 / bs);
                loss_sum += r.loss;
                psnr_sum += r.psnr;
                has_psnr = r.has_psnr;
            }
            opt.step(trainable, total, lr);

            HistoryRow row;
            row.step = step++;
            row.loss = loss_sum / bs;
            row.psnr = psnr_sum / bs;
            row.has_psnr = has_psnr;
            row.lr = lr;
            history.push_back(row);
        }
    }
    return history;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
    std::string out = "step,loss,psnr,lr\n";
    for (const HistoryRow& r : rows) {
        out += std::to_string(r.step) + "," + format_double(r.loss) + ",";
        if (r.has_psnr) out += format_double(r.psnr);
        out += "," + format_double(r.lr) + "\n";
    }
    write_file_atomic(path, out);
}

EvalStats evaluate(const HqsPipeline* pipe, const ToyClassifier* clf,
                   std::span<const TrainItem> items, int threads) {
    if (items.empty()) throw std::invalid_argument("evaluate: empty dataset");
    struct Row {
        double psnr_in = 0.0, psnr_out = 0.0;
        int correct = 0;
    };
    auto rows = parallel_map<Row>(
        static_cast<int>(items.size()),
        [&](int i) {
            const TrainItem& item = items[static_cast<std::size_t>(i)];
            Row r;
            const Tensor out = pipe ? run_pipeline(*pipe, *item.degraded) : *item.degraded;
            if (item.clean) {
                r.psnr_in = psnr_value(*item.degraded, *item.clean);
                r.psnr_out = psnr_value(out, *item.clean);
            }
            if (clf) r.correct = predict(*clf, out) == item.label ? 1 : 0;
            return r;
        },
        threads);

    EvalStats stats;
    stats.n = static_cast<int>(items.size());
    int finite_in = 0, finite_out = 0, correct = 0;
    for (const Row& r : rows) {
        // Infinite PSNR (identical images) is excluded from averages.
        if (std::isfinite(r.psnr_in)) {
            stats.mean_psnr_in += r.psnr_in;
            ++finite_in;
        }
        if (std::isfinite(r.psnr_out)) {
            stats.mean_psnr_out += r.psnr_out;
            ++finite_out;
        }
        correct += r.correct;
    }
    stats.mean_psnr_in = finite_in ? stats.mean_psnr_in / finite_in : 0.0;
    stats.mean_psnr_out = finite_out ? stats.mean_psnr_out / finite_out : 0.0;
    stats.accuracy = static_cast<double>(correct) / stats.n;
    return stats;
}

// -- gradient checking --------------------------------------------------------

const GradCheckArray* GradCheckReport::worst() const {
    const GradCheckArray* w = nullptr;
    for (const auto& a : arrays)
        if (!w || a.max_rel_err > w->max_rel_err) w = &a;
    return w;
}

GradCheckReport grad_check_compare(const ParamList& params, const ParamGrads& analytic,
                                   const std::function<double()>& loss_value,
                                   int samples_per_array, double tolerance, std::uint64_t seed) {
    if (analytic.grads.size() != params.size())
        throw std::logic_error("grad_check: gradient/parameter count mismatch");
    GradCheckReport report;
    report.tolerance = tolerance;
    Rng rng(seed, 0x67726164ULL);
    const double loss0 = loss_value();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi].value;
        GradCheckArray arr;
        arr.name = params[pi].name;
        const Eigen::Index n = p.size();
        const int want = static_cast<int>(std::min<Eigen::Index>(samples_per_array, n));
        const int max_attempts = n <= samples_per_array ? want : want * 6;
        struct Stencil {
            double central, fwd, bwd;
        };
        auto probe = [&](Eigen::Index idx, double p0, double h) {
            p.data[idx] = p0 + h;
            const double lp = loss_value();
            p.data[idx] = p0 - h;
            const double lm = loss_value();
            p.data[idx] = p0;
            return Stencil{(lp - lm) / (2.0 * h), (lp - loss0) / h, (loss0 - lm) / h};
        };
        for (int attempt = 0; attempt < max_attempts && arr.checked < want; ++attempt) {
            const Eigen::Index idx =
                n <= samples_per_array
                    ? attempt
                    : static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
            const double p0 = p.data[idx];
            const double h = 1e-5 * std::max(1.0, std::abs(p0));
            const Stencil s = probe(idx, p0, h);
            const double numeric = s.central;
            const double an = analytic.grads[pi].data[idx];
            const double denom = std::max(std::abs(an), std::abs(numeric));
            if (denom <= 1e-10) { // dead region: both sides vanish
                ++arr.checked;
                continue;
            }
            // Central differences are only meaningful between kinks. Two
            // symptoms mark a kink inside the stencil: the one-sided slopes
            // disagree (a point pinned exactly at the kink), or the estimate
            // moves when the step shrinks (a crossing inside +-h; smooth
            // coordinates shift only by O(h^2)). Either way the coordinate is
            // resampled instead of judged.
            const bool one_sided_split =
                std::abs(s.fwd - s.bwd) > 0.02 * std::max(std::abs(s.fwd), std::abs(s.bwd));
            const double refined = probe(idx, p0, h * 0.25).central;
            const bool inconsistent =
                std::abs(numeric - refined) >
                1e-4 * std::max({std::abs(numeric), std::abs(refined), 1e-10});
            if (one_sided_split || inconsistent) {
                ++arr.skipped;
                continue;
            }
            const double rel = std::abs(an - numeric) / denom;
            if (rel > arr.max_rel_err) {
                arr.max_rel_err = rel;
                arr.worst_index = static_cast<int>(idx);
                arr.analytic = an;
                arr.numeric = numeric;
            }
            ++arr.checked;
        }
        arr.pass = arr.max_rel_err <= tolerance;
        report.pass = report.pass && arr.pass;
        report.arrays.push_back(std::move(arr));
    }
    return report;
}

GradCheckReport grad_check(HqsPipeline* pipe, ToyClassifier* clf, const Tensor& input,
                           const Tensor* reference, int label, double tolerance,
                           std::uint64_t seed, int samples_per_array) {
    const ParamList params = gather_params(pipe, clf, true, true);
    if (params.empty()) throw std::invalid_argument("grad_check: no parameters");

    auto forward = [&](bool with_grads) {
        Tape t;
        const BoundParams bound = bind_params(t, params, /*trainable=*/with_grads);
        Var x = t.constant(input);
        if (pipe) x = pipeline_forward(t, *pipe, bound, x);
        Var loss;
        if (clf)
            loss = softmax_cross_entropy(t, classifier_forward(t, *clf, bound, x), label);
        else
            loss = mse(t, x, t.constant(*reference));
        const double value = t.val(loss).data[0];
        ParamGrads grads;
        if (with_grads) {
            t.backward(loss);
            grads = collect_grads(t, bound);
        }
        return std::make_pair(value, std::move(grads));
    };

    if (!clf && !reference) throw std::invalid_argument("grad_check: reference image required");
    const ParamGrads analytic = forward(true).second;
    return grad_check_compare(
        params, analytic, [&] { return forward(false).first; }, samples_per_array, tolerance,
        seed);
}

} // namespace dpipe
