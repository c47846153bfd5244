#pragma once

#include "siamdecon/core.hpp"

namespace siamdecon {

/// Sparse 3D volume of `n_fibers` smooth tubes (radius 1..2 voxels,
/// intensity 0.5..1) on a zero background. Shape is (depth, height, width),
/// every side >= 32.
Image microtubules_phantom(const Shape& shape, int n_fibers, SeededRng& rng);

/// 2D stand-in for natural microscopy images: band-limited texture plus
/// flat-shaded shapes with sharp edges plus point sources. Sides >= 64.
Image texture_phantom_2d(const Shape& shape, SeededRng& rng);

}  // namespace siamdecon
