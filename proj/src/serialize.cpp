#include "dpipe/serialize.hpp"

#include <json.hpp>

#include "dpipe/fsio.hpp"

namespace dpipe {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json tensor_to_json(const Tensor& t) {
    json j;
    j["h"] = t.h;
    j["w"] = t.w;
    j["c"] = t.c;
    j["data"] = std::vector<double>(t.data.data(), t.data.data() + t.size());
    return j;
}

Tensor tensor_from_json(const json& j) {
    Tensor t(j.at("h").get<int>(), j.at("w").get<int>(), j.at("c").get<int>());
    const auto values = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != t.size())
        throw std::runtime_error("checkpoint: tensor data length mismatch");
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = values[static_cast<std::size_t>(i)];
    return t;
}

json parse_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void check_version(const json& j, const std::filesystem::path& path) {
    if (j.value("format_version", 0) != kFormatVersion)
        throw std::runtime_error(path.string() + ": unsupported format_version");
}

json pipeline_to_json(const HqsPipeline& pipe) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "pipeline";
    j["mode"] = pipe.mode == PipelineMode::denoise ? "denoise" : "deblur";
    j["use_gat"] = pipe.use_gat;
    j["noise"] = {{"alpha", pipe.noise.alpha}, {"sigma", pipe.noise.sigma}};
    if (pipe.psf) {
        j["psf"] = tensor_to_json(pipe.psf->kernel);
        j["psf_label"] = pipe.psf->label;
    }
    j["stages"] = json::array();
    for (const HqsStage& s : pipe.stages) {
        json js;
        js["log_lambda"] = s.log_lambda.data[0];
        js["log_beta"] = s.log_beta.data[0];
        js["merge_colors"] = s.merge_colors;
        js["filters"] = tensor_to_json(s.filters);
        js["prox"] = json::array();
        for (const ProxLayer& l : s.prox.layers)
            js["prox"].push_back(
                {{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}});
        j["stages"].push_back(std::move(js));
    }
    return j;
}

HqsPipeline pipeline_from_json(const json& j) {
    HqsPipeline pipe;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "denoise")
        pipe.mode = PipelineMode::denoise;
    else if (mode == "deblur")
        pipe.mode = PipelineMode::deblur;
    else
        throw std::runtime_error("checkpoint: unknown mode '" + mode + "'");
    pipe.use_gat = j.at("use_gat").get<bool>();
    pipe.noise.alpha = j.at("noise").at("alpha").get<double>();
    pipe.noise.sigma = j.at("noise").at("sigma").get<double>();
    if (j.contains("psf"))
        pipe.psf = make_psf(tensor_from_json(j.at("psf")), j.value("psf_label", std::string()));
    for (const json& js : j.at("stages")) {
        HqsStage s;
        s.log_lambda = Tensor::scalar(js.at("log_lambda").get<double>());
        s.log_beta = Tensor::scalar(js.at("log_beta").get<double>());
        s.merge_colors = js.at("merge_colors").get<bool>();
        s.filters = tensor_from_json(js.at("filters"));
        for (const json& jl : js.at("prox"))
            s.prox.layers.push_back(
                {tensor_from_json(jl.at("weight")), tensor_from_json(jl.at("bias"))});
        pipe.stages.push_back(std::move(s));
    }
    pipe.validate();
    return pipe;
}

json classifier_to_json(const ToyClassifier& clf) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "toy_classifier";
    j["in_h"] = clf.in_h;
    j["in_w"] = clf.in_w;
    j["in_c"] = clf.in_c;
    j["classes"] = clf.classes;
    j["conv1_w"] = tensor_to_json(clf.conv1_w);
    j["conv1_b"] = tensor_to_json(clf.conv1_b);
    j["conv2_w"] = tensor_to_json(clf.conv2_w);
    j["conv2_b"] = tensor_to_json(clf.conv2_b);
    j["fc_w"] = tensor_to_json(clf.fc_w);
    j["fc_b"] = tensor_to_json(clf.fc_b);
    return j;
}

ToyClassifier classifier_from_json(const json& j) {
    ToyClassifier clf;
    clf.in_h = j.at("in_h").get<int>();
    clf.in_w = j.at("in_w").get<int>();
    clf.in_c = j.at("in_c").get<int>();
    clf.classes = j.at("classes").get<int>();
    clf.conv1_w = tensor_from_json(j.at("conv1_w"));
    clf.conv1_b = tensor_from_json(j.at("conv1_b"));
    clf.conv2_w = tensor_from_json(j.at("conv2_w"));
    clf.conv2_b = tensor_from_json(j.at("conv2_b"));
    clf.fc_w = tensor_from_json(j.at("fc_w"));
    clf.fc_b = tensor_from_json(j.at("fc_b"));
    clf.c1 = clf.conv1_b.c;
    clf.c2 = clf.conv2_b.c;
    return clf;
}

} // namespace

void save_noise_params(const std::filesystem::path& path, const NoiseParams& np) {
    json j = {{"alpha", np.alpha}, {"sigma", np.sigma}};
    write_file_atomic(path, j.dump(2) + "\n");
}

NoiseParams load_noise_params(const std::filesystem::path& path) {
    const json j = parse_file(path);
    NoiseParams np;
    np.alpha = j.at("alpha").get<double>();
    np.sigma = j.at("sigma").get<double>();
    if (np.alpha < 0.0 || np.sigma < 0.0)
        throw std::runtime_error(path.string() + ": negative noise parameters");
    return np;
}

void save_noise_table(const std::filesystem::path& path, const std::vector<NoiseLevel>& levels) {
    json j;
    j["levels"] = json::array();
    for (const NoiseLevel& l : levels)
        j["levels"].push_back(
            {{"lux", l.lux}, {"alpha", l.params.alpha}, {"sigma", l.params.sigma}});
    write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<NoiseLevel> load_noise_table(const std::filesystem::path& path) {
    const json j = parse_file(path);
    std::vector<NoiseLevel> levels;
    for (const json& jl : j.at("levels")) {
        NoiseLevel l;
        l.lux = jl.at("lux").get<double>();
        l.params.alpha = jl.at("alpha").get<double>();
        l.params.sigma = jl.at("sigma").get<double>();
        levels.push_back(l);
    }
    return levels;
}

void save_pipeline(const std::filesystem::path& path, const HqsPipeline& pipe) {
    write_file_atomic(path, pipeline_to_json(pipe).dump() + "\n");
}

HqsPipeline load_pipeline(const std::filesystem::path& path) {
    json j = parse_file(path);
    check_version(j, path);
    if (j.contains("pipeline")) j = j.at("pipeline"); // joint checkpoint
    return pipeline_from_json(j);
}

void save_classifier(const std::filesystem::path& path, const ToyClassifier& clf) {
    write_file_atomic(path, classifier_to_json(clf).dump() + "\n");
}

ToyClassifier load_classifier(const std::filesystem::path& path) {
    json j = parse_file(path);
    check_version(j, path);
    if (j.contains("classifier")) j = j.at("classifier"); // joint checkpoint
    return classifier_from_json(j);
}

void save_joint(const std::filesystem::path& path, const HqsPipeline& pipe,
                const ToyClassifier& clf) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "joint";
    j["pipeline"] = pipeline_to_json(pipe);
    j["classifier"] = classifier_to_json(clf);
    write_file_atomic(path, j.dump() + "\n");
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    const json j = parse_file(path);
    TrainConfig cfg;
    const std::string mode = j.value("mode", std::string("denoise"));
    if (mode == "denoise")
        cfg.pipeline.mode = PipelineMode::denoise;
    else if (mode == "deblur")
        cfg.pipeline.mode = PipelineMode::deblur;
    else
        throw std::runtime_error(path.string() + ": unknown mode '" + mode + "'");
    cfg.pipeline.stages = j.value("stages", cfg.pipeline.stages);
    if (j.contains("filters")) {
        cfg.pipeline.filter_count = j.at("filters").value("count", cfg.pipeline.filter_count);
        cfg.pipeline.filter_size = j.at("filters").value("size", cfg.pipeline.filter_size);
    }
    if (j.contains("prox")) {
        cfg.pipeline.prox_layers = j.at("prox").value("layers", cfg.pipeline.prox_layers);
        cfg.pipeline.prox_channels = j.at("prox").value("channels", cfg.pipeline.prox_channels);
    }
    if (j.contains("merge_colors")) cfg.pipeline.merge_colors = j.at("merge_colors").get<bool>();
    if (j.contains("use_gat")) cfg.pipeline.use_gat = j.at("use_gat").get<bool>();
    if (j.contains("noise")) {
        cfg.pipeline.noise.alpha = j.at("noise").value("alpha", 0.0);
        cfg.pipeline.noise.sigma = j.at("noise").value("sigma", 0.0);
    }
    cfg.pipeline.psf_path = j.value("psf_path", std::string());
    if (j.contains("optimizer")) {
        const json& jo = j.at("optimizer");
        cfg.optimizer.lr = jo.value("lr", cfg.optimizer.lr);
        cfg.optimizer.decay = jo.value("decay", cfg.optimizer.decay);
        cfg.optimizer.eps = jo.value("eps", cfg.optimizer.eps);
        cfg.optimizer.lr_decay_per_epoch =
            jo.value("lr_decay_per_epoch", cfg.optimizer.lr_decay_per_epoch);
    }
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("trainable")) {
        cfg.train_lowlevel = false;
        cfg.train_classifier = false;
        for (const json& t : j.at("trainable")) {
            const std::string name = t.get<std::string>();
            if (name == "lowlevel")
                cfg.train_lowlevel = true;
            else if (name == "classifier")
                cfg.train_classifier = true;
            else
                throw std::runtime_error(path.string() + ": unknown trainable '" + name + "'");
        }
    }
    return cfg;
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg) {
    json j;
    j["mode"] = cfg.pipeline.mode == PipelineMode::denoise ? "denoise" : "deblur";
    j["stages"] = cfg.pipeline.stages;
    j["filters"] = {{"count", cfg.pipeline.filter_count}, {"size", cfg.pipeline.filter_size}};
    j["prox"] = {{"layers", cfg.pipeline.prox_layers}, {"channels", cfg.pipeline.prox_channels}};
    if (cfg.pipeline.merge_colors) j["merge_colors"] = *cfg.pipeline.merge_colors;
    if (cfg.pipeline.use_gat) j["use_gat"] = *cfg.pipeline.use_gat;
    j["noise"] = {{"alpha", cfg.pipeline.noise.alpha}, {"sigma", cfg.pipeline.noise.sigma}};
    if (!cfg.pipeline.psf_path.empty()) j["psf_path"] = cfg.pipeline.psf_path;
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"decay", cfg.optimizer.decay},
                      {"eps", cfg.optimizer.eps},
                      {"lr_decay_per_epoch", cfg.optimizer.lr_decay_per_epoch}};
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    json trainable = json::array();
    if (cfg.train_lowlevel) trainable.push_back("lowlevel");
    if (cfg.train_classifier) trainable.push_back("classifier");
    j["trainable"] = trainable;
    write_file_atomic(path, j.dump(2) + "\n");
}

} // namespace dpipe
