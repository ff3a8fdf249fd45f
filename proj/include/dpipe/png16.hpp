#pragma once

#include <filesystem>

#include "dpipe/tensor.hpp"

namespace dpipe {

/// Writes a 1- or 3-channel tensor as a 16-bit linear PNG; values are clamped
/// to [0,1] and rounded to the full 16-bit range at export.
void write_png16(const std::filesystem::path& path, const Tensor& img);

} // namespace dpipe
