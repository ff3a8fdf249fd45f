#include "dpipe/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dpipe/fsio.hpp"
#include "dpipe/pfm.hpp"

namespace dpipe {

namespace {

using nlohmann::json;

std::uint64_t split_key(const std::string& split) {
    std::uint64_t k = 0xcbf29ce484222325ULL;
    for (unsigned char ch : split) k = (k ^ ch) * 0x100000001b3ULL;
    return k;
}

std::string image_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%05d.pfm", i);
    return buf;
}

Tensor make_sample(const ToyParams& p, int label, Rng r) {
    const double theta = std::numbers::pi * label / p.classes;
    const double phase = 2.0 * std::numbers::pi * r.next_uniform();
    const double cx = (0.30 + 0.40 * r.next_uniform()) * p.width;
    const double cy = (0.30 + 0.40 * r.next_uniform()) * p.height;
    const double radius = (0.22 + 0.11 * r.next_uniform()) * std::min(p.height, p.width);
    const double edge = 2.5;

    // Low-frequency background: a few random sinusoids, <= 2 cycles per image.
    struct BgWave {
        double fu, fv, amp, phase;
    };
    std::vector<BgWave> waves;
    for (int j = 0; j < 3; ++j) {
        BgWave wv;
        do {
            wv.fu = std::floor(r.next_uniform() * 5.0) - 2.0;
            wv.fv = std::floor(r.next_uniform() * 5.0) - 2.0;
        } while (wv.fu == 0.0 && wv.fv == 0.0);
        wv.amp = p.bg_amp * (0.5 + r.next_uniform());
        wv.phase = 2.0 * std::numbers::pi * r.next_uniform();
        waves.push_back(wv);
    }

    const double gdx = std::cos(theta), gdy = std::sin(theta);
    Tensor img(p.height, p.width, p.channels);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            const double mask = 1.0 / (1.0 + std::exp((d - radius) / edge));
            const double grating =
                std::sin(2.0 * std::numbers::pi * p.grating_freq * (x * gdx + y * gdy) + phase);
            for (int ch = 0; ch < p.channels; ++ch) {
                double v = 0.5 + p.grating_amp * mask * grating;
                for (const BgWave& wv : waves)
                    v += wv.amp * std::sin(2.0 * std::numbers::pi *
                                               (wv.fu * x / p.width + wv.fv * y / p.height) +
                                           wv.phase + 0.7 * ch);
                img.at(y, x, ch) = std::clamp(v, 0.0, 1.0);
            }
        }
    return img;
}

} // namespace

ToyDataset generate_dataset(const ToyParams& params, int n, std::uint64_t seed,
                            const std::string& split) {
    if (params.classes < 2 || params.classes > 16)
        throw std::invalid_argument("generate_dataset: classes must be in [2, 16]");
    if (n < 0) throw std::invalid_argument("generate_dataset: negative sample count");
    if (params.channels != 1 && params.channels != 3)
        throw std::invalid_argument("generate_dataset: channels must be 1 or 3");

    ToyDataset ds;
    ds.params = params;
    ds.seed = seed;
    ds.split = split;
    ds.samples.reserve(static_cast<std::size_t>(n));
    const Rng base(seed, split_key(split));
    for (int i = 0; i < n; ++i) {
        ToySample s;
        s.label = i % params.classes;
        s.image = make_sample(params, s.label, base.stream(static_cast<std::uint64_t>(i)));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void export_dataset(const std::filesystem::path& dir, const ToyDataset& ds) {
    std::filesystem::create_directories(dir);
    std::string labels = "filename,label\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const std::string name = image_name(static_cast<int>(i));
        write_pfm(dir / name, ds.samples[i].image);
        labels += name + "," + std::to_string(ds.samples[i].label) + "\n";
    }
    write_file_atomic(dir / "labels.csv", labels);

    json j;
    j["classes"] = ds.params.classes;
    j["height"] = ds.params.height;
    j["width"] = ds.params.width;
    j["channels"] = ds.params.channels;
    j["grating_freq"] = ds.params.grating_freq;
    j["grating_amp"] = ds.params.grating_amp;
    j["bg_amp"] = ds.params.bg_amp;
    j["seed"] = ds.seed;
    j["split"] = ds.split;
    write_file_atomic(dir / "params.json", j.dump(2) + "\n");
}

ToyDataset import_dataset(const std::filesystem::path& dir) {
    ToyDataset ds;
    if (std::filesystem::exists(dir / "params.json")) {
        const json j = json::parse(read_file(dir / "params.json"));
        ds.params.classes = j.value("classes", ds.params.classes);
        ds.params.height = j.value("height", ds.params.height);
        ds.params.width = j.value("width", ds.params.width);
        ds.params.channels = j.value("channels", ds.params.channels);
        ds.params.grating_freq = j.value("grating_freq", ds.params.grating_freq);
        ds.params.grating_amp = j.value("grating_amp", ds.params.grating_amp);
        ds.params.bg_amp = j.value("bg_amp", ds.params.bg_amp);
        ds.seed = j.value("seed", std::uint64_t{0});
        ds.split = j.value("split", std::string("train"));
    }

    std::istringstream in(read_file(dir / "labels.csv"));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("labels.csv: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("labels.csv: malformed line '" + line + "'");
        ToySample s;
        s.label = std::stoi(line.substr(comma + 1));
        s.image = read_pfm(dir / line.substr(0, comma));
        ds.samples.push_back(std::move(s));
    }
    if (!ds.samples.empty()) {
        ds.params.height = ds.samples[0].image.h;
        ds.params.width = ds.samples[0].image.w;
        ds.params.channels = ds.samples[0].image.c;
    }
    return ds;
}

} // namespace dpipe
