#include "siamdecon/masking.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace siamdecon {

namespace {

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

}  // namespace

MaskSet sample_mask(const Shape& shape, double fraction, SeededRng& rng, double noise_sigma) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw Error("sample_mask: fraction must lie in (0, 1)");
    if (noise_sigma < 0) throw Error("sample_mask: noise sigma must be >= 0");
    const int64_t m = numel_of(shape);
    if (m < 1) throw Error("sample_mask: empty shape");
    const int64_t count = std::max<int64_t>(1, std::llround(fraction * static_cast<double>(m)));

    // Floyd's algorithm: uniform k-subset in O(k).
    std::unordered_set<int64_t> chosen;
    chosen.reserve(static_cast<size_t>(count) * 2);
    for (int64_t j = m - count; j < m; ++j) {
        int64_t t = rng.uniform_int(0, j);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    MaskSet mask;
    mask.shape = shape;
    mask.indices.assign(chosen.begin(), chosen.end());
    std::sort(mask.indices.begin(), mask.indices.end());
    mask.fraction = static_cast<double>(count) / static_cast<double>(m);
    mask.noise_sigma = noise_sigma;
    return mask;
}

torch::Tensor apply_mask(const torch::Tensor& x_std, const MaskSet& mask, SeededRng& rng, MaskMode mode) {
    Shape shape(x_std.sizes().begin(), x_std.sizes().end());
    if (shape != mask.shape) {
        throw Error("apply_mask: mask shape " + shape_string(mask.shape) + " does not match input " +
                    shape_string(shape));
    }
    auto out = x_std.detach().to(torch::kFloat32).contiguous().clone();
    float* p = out.data_ptr<float>();
    const int64_t m = out.numel();
    for (auto j : mask.indices) {
        if (j < 0 || j >= m) throw Error("apply_mask: coordinate out of range");
        double noise = mask.noise_sigma > 0 ? rng.normal(0.0, mask.noise_sigma) : 0.0;
        p[j] = mode == MaskMode::Additive ? static_cast<float>(p[j] + noise) : static_cast<float>(noise);
    }
    return out;
}

Image apply_mask(const Image& x_std, const MaskSet& mask, SeededRng& rng, MaskMode mode) {
    return Image(apply_mask(x_std.tensor(), mask, rng, mode), x_std.value_range());
}

torch::Tensor pooled_indices(const std::vector<MaskSet>& masks) {
    std::vector<int64_t> flat;
    int64_t offset = 0;
    for (const auto& mask : masks) {
        for (auto j : mask.indices) flat.push_back(offset + j);
        offset += numel_of(mask.shape);
    }
    if (flat.empty()) throw Error("pooled_indices: empty mask");
    return torch::tensor(flat, torch::kInt64);
}

}  // namespace siamdecon
