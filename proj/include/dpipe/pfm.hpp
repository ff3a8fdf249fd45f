#pragma once

#include <filesystem>

#include "dpipe/imaging.hpp"
#include "dpipe/tensor.hpp"

namespace dpipe {

/// Reads a portable float map ("Pf" grayscale or "PF" 3-channel).
/// Handles both byte orders; scanlines are stored bottom-to-top.
Tensor read_pfm(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor as a little-endian PFM (values stored as
/// 32-bit floats).
void write_pfm(const std::filesystem::path& path, const Tensor& img);

/// Loads a PSF from a grayscale PFM, validating odd dimensions and
/// non-negative entries, and normalizing to unit sum. Sets *renormalized when
/// the stored sum deviated from 1 by more than 1e-6.
Psf load_psf(const std::filesystem::path& path, bool* renormalized = nullptr);

void save_psf(const std::filesystem::path& path, const Psf& psf);

} // namespace dpipe
