// dpipe command-line tool: simulate, calibrate, train, and evaluate the
// differentiable imaging pipeline and the texture-classification benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "dpipe/dataset.hpp"
#include "dpipe/fsio.hpp"
#include "dpipe/pfm.hpp"
#include "dpipe/png16.hpp"
#include "dpipe/serialize.hpp"
#include "dpipe/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dpipe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::optional<Psf> load_optional_psf(const std::string& path) {
    if (path.empty() || path == "none") return std::nullopt;
    bool renormalized = false;
    Psf psf = load_psf(path, &renormalized);
    if (renormalized)
        std::cerr << "warning: PSF " << path << " renormalized to unit sum\n";
    return psf;
}

std::vector<Tensor> degrade_all(const ToyDataset& ds, const NoiseParams& noise, const Psf* psf,
                                std::uint64_t seed) {
    std::vector<Tensor> out;
    out.reserve(ds.samples.size());
    const Rng rng(seed);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        out.push_back(simulate_capture(ds.samples[i].image, psf, noise, rng.stream(i)));
    return out;
}

struct Pairs {
    std::vector<TrainItem> train, val;
    std::vector<Tensor> degraded; // storage backing the items
};

// Deterministic 90/10 train/val split over a clean dataset plus simulated
// degraded copies.
Pairs make_pairs(const ToyDataset& ds, const NoiseParams& noise, const Psf* psf,
                 std::uint64_t seed) {
    Pairs p;
    p.degraded = degrade_all(ds, noise, psf, seed);
    const std::size_t n_val = std::max<std::size_t>(1, ds.samples.size() / 10);
    const std::size_t n_train = ds.samples.size() - n_val;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const TrainItem item{&ds.samples[i].image, &p.degraded[i], ds.samples[i].label};
        (i < n_train ? p.train : p.val).push_back(item);
    }
    return p;
}

HqsPipeline pipeline_from_config(const TrainConfig& cfg, std::uint64_t init_seed) {
    std::optional<Psf> psf = load_optional_psf(cfg.pipeline.psf_path);
    if (cfg.pipeline.mode == PipelineMode::deblur && !psf)
        throw std::runtime_error("config: deblur mode requires psf_path");
    return make_pipeline(cfg.pipeline, psf ? &*psf : nullptr, Rng(init_seed, 0x9e1));
}

void write_image(const fs::path& path, const Tensor& img) {
    const std::string ext = path.extension().string();
    if (ext == ".png")
        write_png16(path, img);
    else if (ext == ".pfm")
        write_pfm(path, img);
    else
        throw std::runtime_error("unsupported output extension '" + ext + "' (use .pfm or .png)");
}

int max_label(const ToyDataset& ds) {
    int m = 0;
    for (const auto& s : ds.samples) m = std::max(m, s.label);
    return m;
}

// ---------------------------------------------------------------------------

int cmd_datagen(const std::string& out, int classes, int n, std::uint64_t seed,
                const std::string& params_path, const std::string& split) {
    ToyParams params;
    if (!params_path.empty()) {
        const json j = json::parse(read_file(params_path));
        params.classes = j.value("classes", params.classes);
        params.height = j.value("height", params.height);
        params.width = j.value("width", params.width);
        params.channels = j.value("channels", params.channels);
        params.grating_freq = j.value("grating_freq", params.grating_freq);
        params.grating_amp = j.value("grating_amp", params.grating_amp);
        params.bg_amp = j.value("bg_amp", params.bg_amp);
    }
    if (classes > 0) params.classes = classes;
    const ToyDataset ds = generate_dataset(params, n, seed, split);
    export_dataset(out, ds);
    std::printf("wrote %d images (%d classes, %dx%dx%d) to %s\n", n, params.classes,
                params.height, params.width, params.channels, out.c_str());
    return kExitOk;
}

int cmd_simulate(const std::string& in, const std::string& noise_path, const std::string& psf_path,
                 std::uint64_t seed, const std::string& out) {
    const NoiseParams noise = load_noise_params(noise_path);
    const std::optional<Psf> psf = load_optional_psf(psf_path);
    fs::create_directories(out);

    json prov;
    prov["noise"] = {{"alpha", noise.alpha}, {"sigma", noise.sigma}};
    prov["psf"] = psf ? psf_path : "none";
    prov["seed"] = seed;
    prov["source"] = in;

    if (fs::is_directory(in)) {
        const ToyDataset ds = import_dataset(in);
        const std::vector<Tensor> degraded = degrade_all(ds, noise, psf ? &*psf : nullptr, seed);
        std::string labels = "filename,label\n";
        for (std::size_t i = 0; i < degraded.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img_%05d.pfm", static_cast<int>(i));
            write_pfm(fs::path(out) / name, degraded[i]);
            labels += std::string(name) + "," + std::to_string(ds.samples[i].label) + "\n";
        }
        write_file_atomic(fs::path(out) / "labels.csv", labels);
        std::printf("simulated %zu captures into %s\n", degraded.size(), out.c_str());
    } else {
        const Tensor x = read_pfm(in);
        const Tensor y = simulate_capture(x, psf ? &*psf : nullptr, noise, Rng(seed).stream(0));
        const fs::path target = fs::path(out) / fs::path(in).filename();
        write_pfm(target, y);
        std::printf("simulated capture written to %s\n", target.string().c_str());
    }
    write_file_atomic(fs::path(out) / "provenance.json", prov.dump(2) + "\n");
    return kExitOk;
}

int cmd_calibrate(const std::string& patches_dir, const std::string& truth_csv,
                  const std::string& out) {
    std::vector<std::pair<double, Tensor>> patches;
    std::istringstream in(read_file(truth_csv));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("truth csv: malformed line '" + line + "'");
        if (first && line.substr(0, comma) == "filename") {
            first = false;
            continue;
        }
        first = false;
        patches.emplace_back(std::stod(line.substr(comma + 1)),
                             read_pfm(fs::path(patches_dir) / line.substr(0, comma)));
    }
    const NoiseCurve curve = fit_noise_curve(patches);

    int used = 0;
    for (const auto& s : curve.samples) used += s.used_in_fit ? 1 : 0;
    std::printf("patches: %zu (%d in the unclipped regime)\n", curve.samples.size(), used);
    std::printf("fit: slope %.6g intercept %.6g residual_rms %.6g%s\n", curve.slope,
                curve.intercept, curve.residual_rms,
                curve.slope_clamped ? " (negative slope clamped)" : "");
    std::printf("noise: alpha %.6g sigma %.6g\n", curve.fitted.alpha, curve.fitted.sigma);

    json j;
    j["alpha"] = curve.fitted.alpha;
    j["sigma"] = curve.fitted.sigma;
    j["fit"] = {{"slope", curve.slope},
                {"intercept", curve.intercept},
                {"residual_rms", curve.residual_rms},
                {"patches", curve.samples.size()},
                {"used_in_fit", used},
                {"slope_clamped", curve.slope_clamped}};
    write_file_atomic(out, j.dump(2) + "\n");
    return kExitOk;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                 const std::string& out) {
    TrainConfig cfg = load_train_config(config_path);
    cfg.train_lowlevel = true;
    cfg.train_classifier = false;
    HqsPipeline pipe = pipeline_from_config(cfg, cfg.seed);
    const ToyDataset ds = import_dataset(data_dir);
    if (ds.samples.empty()) throw std::runtime_error("pretrain: empty dataset");
    const Pairs pairs =
        make_pairs(ds, cfg.pipeline.noise, pipe.psf ? &*pipe.psf : nullptr, cfg.seed);

    const EvalStats before = evaluate(&pipe, nullptr, pairs.val, cfg.threads);
    const auto history = train(&pipe, nullptr, pairs.train, cfg);
    const EvalStats after = evaluate(&pipe, nullptr, pairs.val, cfg.threads);

    std::printf("%-18s %10s %10s\n", "validation", "before", "after");
    std::printf("%-18s %10.3f %10.3f\n", "psnr input (dB)", before.mean_psnr_in,
                after.mean_psnr_in);
    std::printf("%-18s %10.3f %10.3f\n", "psnr output (dB)", before.mean_psnr_out,
                after.mean_psnr_out);

    save_pipeline(out, pipe);
    write_history_csv(fs::path(out).replace_extension(".history.csv"), history);
    std::printf("model written to %s\n", out.c_str());
    return kExitOk;
}

int cmd_finetune(const std::string& config_path, const std::string& model_path,
                 const std::string& clf_path, const std::string& data_dir,
                 const std::string& trainable, const std::string& out) {
    TrainConfig cfg = load_train_config(config_path);
    if (!trainable.empty()) {
        cfg.train_lowlevel = trainable.find("lowlevel") != std::string::npos;
        cfg.train_classifier = trainable.find("classifier") != std::string::npos;
    }
    if (!cfg.train_lowlevel && !cfg.train_classifier)
        throw std::runtime_error("finetune: nothing to train");

    const ToyDataset ds = import_dataset(data_dir);
    if (ds.samples.empty()) throw std::runtime_error("finetune: empty dataset");

    std::optional<HqsPipeline> pipe;
    if (!model_path.empty())
        pipe = load_pipeline(model_path);
    else if (cfg.train_lowlevel)
        pipe = pipeline_from_config(cfg, cfg.seed);

    ToyClassifier clf =
        clf_path.empty()
            ? make_toy_classifier(ds.params.height, ds.params.width, ds.params.channels,
                                  max_label(ds) + 1, Rng(cfg.seed, 0xc1f))
            : load_classifier(clf_path);

    const Psf* psf = pipe && pipe->psf ? &*pipe->psf : nullptr;
    const Pairs pairs = make_pairs(ds, cfg.pipeline.noise, psf, cfg.seed);

    const auto history = train(pipe ? &*pipe : nullptr, &clf, pairs.train, cfg);
    const EvalStats stats = evaluate(pipe ? &*pipe : nullptr, &clf, pairs.val, cfg.threads);
    std::printf("validation top-1 %.4f over %d samples\n", stats.accuracy, stats.n);

    if (pipe)
        save_joint(out, *pipe, clf);
    else
        save_classifier(out, clf);
    write_history_csv(fs::path(out).replace_extension(".history.csv"), history);
    std::printf("checkpoint written to %s\n", out.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& clf_path,
             const std::string& data_dir, const std::string& baseline,
             const std::string& noise_path, const std::string& psf_path, std::uint64_t seed,
             const std::string& out_csv, int threads) {
    if (clf_path.empty()) throw std::runtime_error("eval: --classifier is required");
    const ToyClassifier clf = load_classifier(clf_path);

    std::optional<HqsPipeline> pipe;
    if (baseline == "none" && !model_path.empty()) pipe = load_pipeline(model_path);

    const ToyDataset ds = import_dataset(data_dir);
    if (ds.samples.empty()) throw std::runtime_error("eval: empty dataset");

    std::vector<Tensor> degraded;
    std::vector<TrainItem> items;
    if (!noise_path.empty()) {
        const NoiseParams noise = load_noise_params(noise_path);
        const std::optional<Psf> psf = load_optional_psf(psf_path);
        degraded = degrade_all(ds, noise, psf ? &*psf : nullptr, seed);
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            items.push_back({&ds.samples[i].image, &degraded[i], ds.samples[i].label});
    } else {
        for (const auto& s : ds.samples) items.push_back({&s.image, &s.image, s.label});
    }

    const EvalStats stats = evaluate(pipe ? &*pipe : nullptr, &clf, items, threads);
    std::printf("%-18s %12s\n", "metric", "value");
    std::printf("%-18s %12.4f\n", "top1_accuracy", stats.accuracy);
    std::printf("%-18s %12.3f\n", "mean_psnr_in", stats.mean_psnr_in);
    std::printf("%-18s %12.3f\n", "mean_psnr_out", stats.mean_psnr_out);
    std::printf("%-18s %12d\n", "samples", stats.n);

    std::string csv = "metric,value\n";
    csv += "top1_accuracy," + format_double(stats.accuracy) + "\n";
    csv += "mean_psnr_in," + format_double(stats.mean_psnr_in) + "\n";
    csv += "mean_psnr_out," + format_double(stats.mean_psnr_out) + "\n";
    csv += "samples," + std::to_string(stats.n) + "\n";
    write_file_atomic(out_csv, csv);
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, double tol) {
    TrainConfig cfg = load_train_config(config_path);
    HqsPipeline pipe = pipeline_from_config(cfg, cfg.seed);

    // Check at a generic parameter point: zero-initialized biases pin ReLU
    // preactivations exactly at the kink where central differences see a
    // one-sided slope.
    Rng jitter(cfg.seed, 0xb1a5);
    for (HqsStage& s : pipe.stages)
        for (ProxLayer& l : s.prox.layers)
            for (Eigen::Index i = 0; i < l.bias.size(); ++i)
                l.bias.data[i] += 0.02 * (jitter.next_uniform() - 0.5);

    ToyParams tp;
    tp.height = 16;
    tp.width = 16;
    tp.classes = 4;
    const ToyDataset probe = generate_dataset(tp, 1, cfg.seed + 1, "gradcheck");
    const Psf* psf = pipe.psf ? &*pipe.psf : nullptr;
    const Tensor degraded =
        simulate_capture(probe.samples[0].image, psf, cfg.pipeline.noise, Rng(cfg.seed, 3));

    std::optional<ToyClassifier> clf;
    if (cfg.train_classifier)
        clf = make_toy_classifier(16, 16, 1, tp.classes, Rng(cfg.seed, 0xc1f));

    const GradCheckReport report =
        grad_check(cfg.train_lowlevel || !clf ? &pipe : nullptr, clf ? &*clf : nullptr, degraded,
                   &probe.samples[0].image, probe.samples[0].label, tol, cfg.seed, 10);

    std::printf("%-22s %12s %8s %8s  %s\n", "array", "max_rel_err", "checked", "skipped", "ok");
    for (const auto& arr : report.arrays)
        std::printf("%-22s %12.3e %8d %8d  %s\n", arr.name.c_str(), arr.max_rel_err, arr.checked,
                    arr.skipped, arr.pass ? "yes" : "NO");
    std::printf("gradcheck %s at tolerance %g\n", report.pass ? "passed" : "FAILED", tol);
    return report.pass ? kExitOk : kExitNumerical;
}

int cmd_infer(const std::string& model_path, const std::string& in, const std::string& out,
              PipelineMode expected_mode) {
    const HqsPipeline pipe = load_pipeline(model_path);
    if (pipe.mode != expected_mode)
        throw std::runtime_error("model mode does not match the subcommand");
    const Tensor y = read_pfm(in);
    // Clamped at export only.
    write_image(out, clamp01(run_pipeline(pipe, y)));
    std::printf("wrote %s\n", out.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable imaging pipeline: simulate, calibrate, train, evaluate"};
    app.require_subcommand(1);

    // datagen
    std::string dg_out, dg_params, dg_split = "train";
    int dg_classes = 0, dg_n = 0;
    std::uint64_t dg_seed = 0;
    auto* datagen = app.add_subcommand("datagen", "generate a texture-classification dataset");
    datagen->add_option("--out", dg_out)->required();
    datagen->add_option("--classes", dg_classes);
    datagen->add_option("--n", dg_n)->required();
    datagen->add_option("--seed", dg_seed)->required();
    datagen->add_option("--params", dg_params);
    datagen->add_option("--split", dg_split);

    // simulate
    std::string sm_in, sm_noise, sm_psf = "none", sm_out;
    std::uint64_t sm_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "pass images through the camera model");
    simulate->add_option("--in", sm_in)->required();
    simulate->add_option("--noise", sm_noise)->required();
    simulate->add_option("--psf", sm_psf);
    simulate->add_option("--seed", sm_seed)->required();
    simulate->add_option("--out", sm_out)->required();

    // calibrate
    std::string cb_patches, cb_truth, cb_out;
    auto* calibrate = app.add_subcommand("calibrate", "fit noise parameters from gray patches");
    calibrate->add_option("--patches", cb_patches)->required();
    calibrate->add_option("--truth", cb_truth)->required();
    calibrate->add_option("--out", cb_out)->required();

    // pretrain
    std::string pt_config, pt_data, pt_out;
    auto* pretrain = app.add_subcommand("pretrain", "train the low-level unit for PSNR");
    pretrain->add_option("--config", pt_config)->required();
    pretrain->add_option("--data", pt_data)->required();
    pretrain->add_option("--out", pt_out)->required();

    // finetune
    std::string ft_config, ft_model, ft_clf, ft_data, ft_trainable, ft_out;
    auto* finetune = app.add_subcommand("finetune", "train classifier and/or pipeline jointly");
    finetune->add_option("--config", ft_config)->required();
    finetune->add_option("--model", ft_model);
    finetune->add_option("--classifier", ft_clf);
    finetune->add_option("--data", ft_data)->required();
    finetune->add_option("--trainable", ft_trainable);
    finetune->add_option("--out", ft_out)->required();

    // eval
    std::string ev_model, ev_clf, ev_data, ev_baseline = "none", ev_noise, ev_psf = "none",
                ev_out = "eval.csv";
    std::uint64_t ev_seed = 0;
    int ev_threads = 0;
    auto* eval_cmd = app.add_subcommand("eval", "top-1 accuracy and PSNR of a checkpoint");
    eval_cmd->add_option("--model", ev_model);
    eval_cmd->add_option("--classifier", ev_clf)->required();
    eval_cmd->add_option("--data", ev_data)->required();
    eval_cmd->add_option("--baseline", ev_baseline)->check(CLI::IsMember({"none", "identity"}));
    eval_cmd->add_option("--noise", ev_noise);
    eval_cmd->add_option("--psf", ev_psf);
    eval_cmd->add_option("--seed", ev_seed);
    eval_cmd->add_option("--out", ev_out);
    eval_cmd->add_option("--threads", ev_threads);

    // gradcheck
    std::string gc_config;
    double gc_tol = 1e-5;
    auto* gradcheck = app.add_subcommand("gradcheck", "compare gradients to finite differences");
    gradcheck->add_option("--config", gc_config)->required();
    gradcheck->add_option("--tol", gc_tol);

    // denoise / deblur
    std::string dn_model, dn_in, dn_out;
    auto* denoise = app.add_subcommand("denoise", "run a denoising model on one image");
    denoise->add_option("--model", dn_model)->required();
    denoise->add_option("--in", dn_in)->required();
    denoise->add_option("--out", dn_out)->required();
    std::string db_model, db_in, db_out;
    auto* deblur = app.add_subcommand("deblur", "run a deblurring model on one image");
    deblur->add_option("--model", db_model)->required();
    deblur->add_option("--in", db_in)->required();
    deblur->add_option("--out", db_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*datagen) return cmd_datagen(dg_out, dg_classes, dg_n, dg_seed, dg_params, dg_split);
        if (*simulate) return cmd_simulate(sm_in, sm_noise, sm_psf, sm_seed, sm_out);
        if (*calibrate) return cmd_calibrate(cb_patches, cb_truth, cb_out);
        if (*pretrain) return cmd_pretrain(pt_config, pt_data, pt_out);
        if (*finetune)
            return cmd_finetune(ft_config, ft_model, ft_clf, ft_data, ft_trainable, ft_out);
        if (*eval_cmd)
            return cmd_eval(ev_model, ev_clf, ev_data, ev_baseline, ev_noise, ev_psf, ev_seed,
                            ev_out, ev_threads);
        if (*gradcheck) return cmd_gradcheck(gc_config, gc_tol);
        if (*denoise) return cmd_infer(dn_model, dn_in, dn_out, PipelineMode::denoise);
        if (*deblur) return cmd_infer(db_model, db_in, db_out, PipelineMode::deblur);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
