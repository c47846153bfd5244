#pragma once

#include "siamdecon/core.hpp"

namespace siamdecon {

/// Blind-spot pixel set J for one patch, as sorted unique flat (C-order)
/// indices into `shape`.
struct MaskSet {
    Shape shape;
    std::vector<int64_t> indices;
    double fraction = 0.0;
    double noise_sigma = 0.2;

    int64_t size() const { return static_cast<int64_t>(indices.size()); }
};

/// How masked pixels are perturbed in standardized space.
enum class MaskMode {
    Additive,  ///< x_j + N(0, sigma^2)
    Replace,   ///< N(0, sigma^2)
};

/// Draws max(1, round(fraction * numel)) distinct coordinates uniformly.
MaskSet sample_mask(const Shape& shape, double fraction, SeededRng& rng, double noise_sigma = 0.2);

/// Copy of `x_std` with pixels in J perturbed; everything else bit-identical.
torch::Tensor apply_mask(const torch::Tensor& x_std, const MaskSet& mask, SeededRng& rng,
                         MaskMode mode = MaskMode::Additive);
Image apply_mask(const Image& x_std, const MaskSet& mask, SeededRng& rng, MaskMode mode = MaskMode::Additive);

/// Pools per-sample masks into flat indices over a stacked batch tensor in
/// which sample i occupies elements [i * per_sample, (i + 1) * per_sample).
torch::Tensor pooled_indices(const std::vector<MaskSet>& masks);

}  // namespace siamdecon
