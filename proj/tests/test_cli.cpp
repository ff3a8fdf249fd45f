#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dpipe/dataset.hpp"
#include "dpipe/fsio.hpp"
#include "dpipe/pfm.hpp"
#include "dpipe/serialize.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace dpipe;

namespace {

const fs::path kBin = DPIPE_CLI_PATH;

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "dpipe_cli_test";
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = kBin.string() + " " + args + " >" +
                            (work_dir() / "cli.log").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string small_params_json() {
    const auto path = work_dir() / "toy_params.json";
    write_file_atomic(path, R"({"classes": 4, "height": 32, "width": 32})");
    return path.string();
}

std::string micro_config(bool classifier_only = false) {
    const auto path = work_dir() / (classifier_only ? "cfg_clf.json" : "cfg.json");
    nlohmann::json j;
    j["mode"] = "denoise";
    j["stages"] = 1;
    j["filters"] = {{"count", 6}, {"size", 3}};
    j["prox"] = {{"layers", 2}, {"channels", 6}};
    j["noise"] = {{"alpha", 0.01}, {"sigma", 0.01}};
    j["optimizer"] = {{"lr", 1e-3}, {"decay", 0.9}, {"eps", 1e-8}, {"lr_decay_per_epoch", 1.0}};
    j["epochs"] = 1;
    j["batch_size"] = 4;
    j["seed"] = 5;
    j["trainable"] = classifier_only ? nlohmann::json::array({"classifier"})
                                     : nlohmann::json::array({"lowlevel"});
    write_file_atomic(path, j.dump(2));
    return path.string();
}

} // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("datagen") == 2); // missing required flags
}

TEST_CASE("datagen is deterministic and self-describing") {
    const auto out1 = work_dir() / "ds1";
    const auto out2 = work_dir() / "ds2";
    fs::remove_all(out1);
    fs::remove_all(out2);
    const std::string params = small_params_json();
    CHECK(run("datagen --out " + out1.string() + " --n 8 --seed 42 --params " + params) == 0);
    CHECK(run("datagen --out " + out2.string() + " --n 8 --seed 42 --params " + params) == 0);
    CHECK(fs::exists(out1 / "labels.csv"));
    CHECK(fs::exists(out1 / "params.json"));
    CHECK(read_file(out1 / "img_00000.pfm") == read_file(out2 / "img_00000.pfm"));
    CHECK(read_file(out1 / "labels.csv") == read_file(out2 / "labels.csv"));
}

TEST_CASE("simulate is bit-deterministic given the seed") {
    const auto ds = work_dir() / "ds1";
    const auto noise = work_dir() / "noise.json";
    save_noise_params(noise, NoiseParams{0.02, 0.01});
    const auto s1 = work_dir() / "sim1";
    const auto s2 = work_dir() / "sim2";
    const auto s3 = work_dir() / "sim3";
    for (const auto& d : {s1, s2, s3}) fs::remove_all(d);
    const std::string base = "simulate --in " + ds.string() + " --noise " + noise.string();
    CHECK(run(base + " --seed 7 --out " + s1.string()) == 0);
    CHECK(run(base + " --seed 7 --out " + s2.string()) == 0);
    CHECK(run(base + " --seed 8 --out " + s3.string()) == 0);
    CHECK(read_file(s1 / "img_00003.pfm") == read_file(s2 / "img_00003.pfm"));
    CHECK(read_file(s1 / "img_00003.pfm") != read_file(s3 / "img_00003.pfm"));
    CHECK(fs::exists(s1 / "provenance.json"));
    CHECK(fs::exists(s1 / "labels.csv"));

    // Blur path: a PSF changes the output.
    const auto psf_path = work_dir() / "blur.pfm";
    save_psf(psf_path, gaussian_psf(5, 1.0));
    const auto s4 = work_dir() / "sim4";
    fs::remove_all(s4);
    CHECK(run(base + " --psf " + psf_path.string() + " --seed 7 --out " + s4.string()) == 0);
    CHECK(read_file(s4 / "img_00003.pfm") != read_file(s1 / "img_00003.pfm"));
}

TEST_CASE("simulate validates inputs with exit code 3") {
    const auto bad = work_dir() / "nonexistent.json";
    CHECK(run("simulate --in missing_dir --noise " + bad.string() + " --seed 1 --out " +
              (work_dir() / "simx").string()) == 3);
}

TEST_CASE("calibrate fits simulated patches") {
    const auto dir = work_dir() / "patches";
    fs::create_directories(dir);
    const NoiseParams truth{0.02, 0.01};
    const Rng rng(88);
    std::string csv = "filename,true_mean\n";
    for (int i = 0; i < 20; ++i) {
        const double mean = 0.15 + 0.5 * i / 19.0;
        const Tensor patch =
            simulate_capture(Tensor::constant(32, 32, 1, mean), nullptr, truth,
                             rng.stream(static_cast<std::uint64_t>(i)));
        char name[32];
        std::snprintf(name, sizeof(name), "p%02d.pfm", i);
        write_pfm(dir / name, patch);
        csv += std::string(name) + "," + format_double(mean) + "\n";
    }
    const auto truth_csv = work_dir() / "truth.csv";
    write_file_atomic(truth_csv, csv);
    const auto out = work_dir() / "fitted.json";
    CHECK(run("calibrate --patches " + dir.string() + " --truth " + truth_csv.string() +
              " --out " + out.string()) == 0);
    const NoiseParams fitted = load_noise_params(out);
    CHECK(fitted.alpha > 0.01);
    CHECK(fitted.alpha < 0.03);
    CHECK(fitted.sigma < 0.02);
}

TEST_CASE("pretrain then finetune produce loadable checkpoints") {
    const auto data = work_dir() / "ds_train";
    fs::remove_all(data);
    CHECK(run("datagen --out " + data.string() + " --n 10 --seed 3 --params " +
              small_params_json()) == 0);

    const auto model = work_dir() / "model.json";
    CHECK(run("pretrain --config " + micro_config() + " --data " + data.string() + " --out " +
              model.string()) == 0);
    CHECK(fs::exists(model));
    CHECK(fs::exists(work_dir() / "model.history.csv"));
    const HqsPipeline pipe = load_pipeline(model);
    CHECK(pipe.stages.size() == 1);

    // A second process with the same config and seed produces the same bytes.
    const auto model2 = work_dir() / "model2.json";
    CHECK(run("pretrain --config " + micro_config() + " --data " + data.string() + " --out " +
              model2.string()) == 0);
    CHECK(read_file(model) == read_file(model2));
    CHECK(read_file(work_dir() / "model.history.csv") ==
          read_file(work_dir() / "model2.history.csv"));

    // Classifier-only training from scratch.
    const auto clf = work_dir() / "clf.json";
    CHECK(run("finetune --config " + micro_config(true) + " --data " + data.string() +
              " --out " + clf.string()) == 0);
    const ToyClassifier c = load_classifier(clf);
    CHECK(c.classes == 4);

    // Joint training from both checkpoints.
    const auto joint = work_dir() / "joint.json";
    CHECK(run("finetune --config " + micro_config() + " --model " + model.string() +
              " --classifier " + clf.string() + " --data " + data.string() +
              " --trainable lowlevel,classifier --out " + joint.string()) == 0);
    const HqsPipeline jp = load_pipeline(joint);
    const ToyClassifier jc = load_classifier(joint);
    CHECK(jc.classes == 4);
    CHECK(jp.stages.size() == 1);
}

TEST_CASE("eval with an identity baseline equals eval without a model") {
    const auto data = work_dir() / "ds_train";
    const auto clf = work_dir() / "clf.json";
    const auto noise = work_dir() / "noise.json";
    const auto model = work_dir() / "model.json";
    REQUIRE(fs::exists(clf)); // produced by the previous case
    const auto csv_a = work_dir() / "eval_a.csv";
    const auto csv_b = work_dir() / "eval_b.csv";
    const auto csv_c = work_dir() / "eval_c.csv";
    const std::string common = "eval --classifier " + clf.string() + " --data " + data.string() +
                               " --noise " + noise.string() + " --seed 5 --threads 2";
    CHECK(run(common + " --out " + csv_a.string()) == 0);
    CHECK(run(common + " --model " + model.string() + " --baseline identity --out " +
              csv_b.string()) == 0);
    CHECK(read_file(csv_a) == read_file(csv_b));
    // And a model eval differs.
    CHECK(run(common + " --model " + model.string() + " --out " + csv_c.string()) == 0);
    CHECK(read_file(csv_a) != read_file(csv_c));
}

TEST_CASE("denoise runs single images and respects the model mode") {
    const auto model = work_dir() / "model.json";
    const auto img = work_dir() / "in.pfm";
    ToyParams tp;
    tp.height = 32;
    tp.width = 32;
    tp.classes = 2;
    write_pfm(img, generate_dataset(tp, 1, 9, "x").samples[0].image);
    const auto out_pfm = work_dir() / "out.pfm";
    const auto out_png = work_dir() / "out.png";
    CHECK(run("denoise --model " + model.string() + " --in " + img.string() + " --out " +
              out_pfm.string()) == 0);
    CHECK(run("denoise --model " + model.string() + " --in " + img.string() + " --out " +
              out_png.string()) == 0);
    const Tensor restored = read_pfm(out_pfm);
    CHECK((restored.data >= 0.0).all()); // clamped at export
    CHECK((restored.data <= 1.0).all());
    // Mode mismatch is a data error.
    CHECK(run("deblur --model " + model.string() + " --in " + img.string() + " --out " +
              out_pfm.string()) == 3);
}

TEST_CASE("gradcheck on the shipped default config passes") {
    CHECK(run("gradcheck --config " + micro_config() + " --tol 1e-5") == 0);
}

TEST_CASE("simulate handles a single image input") {
    const auto img = work_dir() / "single.pfm";
    ToyParams tp;
    tp.height = 16;
    tp.width = 16;
    tp.classes = 2;
    write_pfm(img, generate_dataset(tp, 1, 4, "x").samples[0].image);
    const auto noise = work_dir() / "noise.json";
    const auto out = work_dir() / "single_out";
    fs::remove_all(out);
    CHECK(run("simulate --in " + img.string() + " --noise " + noise.string() +
              " --seed 2 --out " + out.string()) == 0);
    CHECK(fs::exists(out / "single.pfm"));
    CHECK(fs::exists(out / "provenance.json"));
}

TEST_CASE("numerical failures exit with code 4") {
    // exp(900) overflows the data weight, poisoning the forward pass.
    const auto model = work_dir() / "model.json";
    HqsPipeline pipe = load_pipeline(model);
    pipe.stages[0].log_lambda.data[0] = 900.0;
    const auto broken = work_dir() / "broken.json";
    save_pipeline(broken, pipe);
    const auto img = work_dir() / "in.pfm";
    CHECK(run("denoise --model " + broken.string() + " --in " + img.string() + " --out " +
              (work_dir() / "nan_out.pfm").string()) == 4);
}
