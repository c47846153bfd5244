#pragma once

#include "siamdecon/core.hpp"

#include <atomic>
#include <filesystem>

namespace siamdecon {

enum class SkipMode { Concat, Add };

struct UNetConfig {
    int dims = 2;
    /// Number of resolution levels. Level l has base_features * 2^l
    /// channels; there are depth - 1 downsampling steps between them.
    int depth = 3;
    int base_features = 96;
    SkipMode skip_mode = SkipMode::Concat;

    /// 2D: 96 features with concatenating skips. 3D: 48 features with
    /// additive skips.
    static UNetConfig defaults(int dims);

    /// Spatial sizes must be multiples of this.
    int64_t size_multiple() const { return int64_t{1} << (depth - 1); }
    /// Farthest input offset (in pixels, per axis) that can influence an
    /// output pixel: 7 (2^(depth-1) - 1) + 2^depth.
    int64_t receptive_radius() const { return 7 * (size_multiple() - 1) + 2 * size_multiple(); }
    void validate() const;
};

/// conv3-norm-ReLU. Batch norm in 2D, per-sample instance norm in 3D.
class ConvBlockImpl : public torch::nn::Module {
public:
    ConvBlockImpl(int dims, int64_t in_channels, int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    int dims_;
    torch::nn::AnyModule conv_;
    torch::nn::AnyModule norm_;
};
TORCH_MODULE(ConvBlock);

/// Fully-convolutional encoder/decoder. Maps (N, 1, spatial...) to the same
/// shape; the output is unbounded (no final activation).
class UNetImpl : public torch::nn::Module {
public:
    explicit UNetImpl(const UNetConfig& cfg);

    torch::Tensor forward(const torch::Tensor& x);

    const UNetConfig& config() const { return cfg_; }
    int64_t parameter_count() const;

    /// Number of forward() calls; lets the trainer's pass count be verified.
    uint64_t forward_count() const { return forward_calls_.load(); }

private:
    torch::Tensor downsample(const torch::Tensor& x) const;
    torch::Tensor upsample(const torch::Tensor& x) const;

    UNetConfig cfg_;
    std::vector<torch::nn::Sequential> encoders_;
    std::vector<ConvBlock> up_convs_;
    std::vector<torch::nn::Sequential> decoders_;
    torch::nn::AnyModule head_;
    std::atomic<uint64_t> forward_calls_{0};
};
TORCH_MODULE(UNet);

UNet build_unet(const UNetConfig& cfg, uint64_t seed = 0);

std::string to_string(SkipMode mode);
SkipMode parse_skip_mode(const std::string& name);

/// Everything needed to run inference or resume training.
struct Checkpoint {
    static constexpr const char* kFormatTag = "siamdecon-checkpoint-v1";

    UNetConfig config;
    NormStats stats;
    int64_t step = 0;
    UNet model{nullptr};
    /// Serialized optimizer state; empty when saved for inference only.
    std::string optimizer_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace siamdecon
