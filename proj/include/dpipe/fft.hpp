#pragma once

#include <complex>
#include <vector>

#include "dpipe/tensor.hpp"

namespace dpipe {

/// Unnormalized forward 2D DFT of a real H x W x 1 plane.
/// ifft2(fft2(u)) == u; the 1/(H*W) factor lives in the inverse.
ComplexField fft2(const Tensor& plane);

/// Unnormalized forward 2D DFT of a complex field (in-place friendly variant
/// used by adjoint rules; `inverse` flips the twiddle sign without scaling).
ComplexField dft2(const ComplexField& f, bool inverse);

/// Normalized inverse 2D DFT.
ComplexField ifft2(const ComplexField& f);

/// Real part of the normalized inverse 2D DFT, as an H x W x 1 plane.
Tensor ifft2_real(const ComplexField& f);

/// In-place 1D FFT of length n (any n >= 1); unnormalized in both directions.
void fft_1d(std::complex<double>* x, int n, bool inverse);

} // namespace dpipe
