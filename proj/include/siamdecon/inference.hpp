#pragma once

#include "siamdecon/core.hpp"
#include "siamdecon/model.hpp"

#include <functional>

namespace siamdecon {

struct TileConfig {
    int tile_size = 128;
    int overlap = 32;
    bool enabled = false;
    /// Extra input context evaluated around each tile and discarded before
    /// blending. -1 uses the network's receptive radius, so tiled and
    /// untiled predictions agree away from the image border.
    int context = -1;

    /// Tiling on for 3D (128^3 tiles, 32 overlap), off for 2D.
    static TileConfig defaults(int dims);
    void validate(int64_t size_multiple) const;
};

/// Separable tent weights peaking at 1 in the center; strictly positive.
/// A side of length n has profile min(i + 1, n - i) / max.
torch::Tensor pyramid_weights(const Shape& shape);

/// Maps a standardized (N, 1, spatial...) batch to the deconvolved
/// representation.
using Network = std::function<torch::Tensor(const torch::Tensor&)>;

struct Prediction {
    Image image;        ///< destandardized and clipped to [0, 1]
    torch::Tensor raw;  ///< destandardized, unclipped
    double milliseconds = 0;
};

/// Unmasked forward pass only; the PSF is never applied. Inputs are
/// reflect-padded to the network's size multiple (or the tile grid) and
/// cropped back. With tiling enabled, tiles of `tile_size` with stride
/// tile_size - overlap are blended with pyramid weights. Each tile is
/// evaluated with up to `context` extra pixels per side (clipped to the
/// padded grid, rounded down to the size multiple); `auto_context`
/// replaces a context of -1.
Prediction predict(const Network& net, int64_t size_multiple, const Image& img, const NormStats& stats,
                   const TileConfig& tiles, int64_t auto_context = 0);

Prediction predict(UNet model, const Image& img, const NormStats& stats, const TileConfig& tiles);

}  // namespace siamdecon
