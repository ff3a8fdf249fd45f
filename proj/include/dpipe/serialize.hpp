#pragma once

#include <filesystem>

#include "dpipe/classifier.hpp"
#include "dpipe/hqs.hpp"
#include "dpipe/imaging.hpp"
#include "dpipe/train.hpp"

namespace dpipe {

// JSON persistence. Floats are serialized as shortest round-trip decimal
// strings, so save/load cycles are bit-exact.

void save_noise_params(const std::filesystem::path& path, const NoiseParams& np);
NoiseParams load_noise_params(const std::filesystem::path& path);

/// Noise table: {"levels": [{"lux": .., "alpha": .., "sigma": ..}, ...]}.
struct NoiseLevel {
    double lux = 0.0;
    NoiseParams params;
};
void save_noise_table(const std::filesystem::path& path, const std::vector<NoiseLevel>& levels);
std::vector<NoiseLevel> load_noise_table(const std::filesystem::path& path);

/// Model checkpoint: a single versioned JSON document with mode flags, stage
/// count, and every parameter array as nested number lists.
void save_pipeline(const std::filesystem::path& path, const HqsPipeline& pipe);
HqsPipeline load_pipeline(const std::filesystem::path& path);

void save_classifier(const std::filesystem::path& path, const ToyClassifier& clf);
ToyClassifier load_classifier(const std::filesystem::path& path);

/// Joint checkpoint holding both units; load_pipeline/load_classifier accept
/// these files too.
void save_joint(const std::filesystem::path& path, const HqsPipeline& pipe,
                const ToyClassifier& clf);

/// Training configuration (see the example shipped in the repository).
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg);

} // namespace dpipe
