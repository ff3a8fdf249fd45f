#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpipe/rng.hpp"
#include "dpipe/tensor.hpp"

namespace dpipe {

/// Texture-classification benchmark: each class is a high-frequency
/// sinusoidal grating at orientation pi*c/K, masked by a random smooth blob
/// over a low-frequency background, so class evidence lives above the
/// blur/noise cutoff.
struct ToyParams {
    int classes = 8;
    int height = 64;
    int width = 64;
    int channels = 1;
    double grating_freq = 0.25; // cycles per pixel
    double grating_amp = 0.22;
    double bg_amp = 0.05;       // per low-frequency background component
};

struct ToySample {
    Tensor image;
    int label = 0;
};

struct ToyDataset {
    std::vector<ToySample> samples;
    ToyParams params;
    std::uint64_t seed = 0;
    std::string split = "train";
};

/// Deterministic generation: sample i is a pure function of
/// (params, seed, split, i); labels cycle through the classes so counts are
/// balanced within one sample.
ToyDataset generate_dataset(const ToyParams& params, int n, std::uint64_t seed,
                            const std::string& split = "train");

/// Directory layout: img_00000.pfm ..., labels.csv (filename,label),
/// params.json (generation parameters + seed + split).
void export_dataset(const std::filesystem::path& dir, const ToyDataset& ds);
ToyDataset import_dataset(const std::filesystem::path& dir);

} // namespace dpipe
