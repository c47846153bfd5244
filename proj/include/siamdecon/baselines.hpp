#pragma once

#include "siamdecon/core.hpp"
#include "siamdecon/fftconv.hpp"
#include "siamdecon/metrics.hpp"

namespace siamdecon {

/// Classical Richardson-Lucy deconvolution, `n` multiplicative updates
/// starting from the observation itself:
///   x <- x * (K^T * (y / (K * x + eps)))
/// Negative observations are clipped to zero with a warning.
Image lucy_richardson(const Image& y, const PSFKernel& psf, int n, Padding padding = Padding::Reflect);

/// Same iteration from an explicit starting estimate.
Image lucy_richardson(const Image& y, const PSFKernel& psf, int n, const Image& x0,
                      Padding padding = Padding::Reflect);

/// One metric row per iteration count, named "LR n=<n>", with an
/// "Inference t (ms)" column.
std::vector<MetricRow> lr_sweep(const Image& y, const PSFKernel& psf, const std::vector<int>& ns, const Image& clean);

}  // namespace siamdecon
