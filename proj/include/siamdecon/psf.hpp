#pragma once

#include "siamdecon/core.hpp"

#include <filesystem>

namespace siamdecon {

/// Cleans a measured kernel: negatives are clipped to zero (with a warning
/// when the clipped mass exceeds 1e-3 of the total) and the result is
/// renormalized to sum one. Even sides and all-zero kernels are rejected.
PSFKernel make_psf(const torch::Tensor& raw);

/// Loads a kernel from a `.npy` or `.tif` raster and cleans it with make_psf.
PSFKernel load_psf(const std::filesystem::path& path);

/// Isotropic discretized Gaussian of odd `side` per axis, centered, summing
/// to one. Stand-in for a measured microscope PSF.
PSFKernel gaussian_psf(int dims, int side, double sigma);

}  // namespace siamdecon
