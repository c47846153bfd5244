#pragma once

#include "siamdecon/core.hpp"
#include "siamdecon/fftconv.hpp"
#include "siamdecon/losses.hpp"
#include "siamdecon/masking.hpp"
#include "siamdecon/model.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace siamdecon {

struct TrainConfig {
    int dims = 2;
    int patch_size = 128;
    int batch_size = 16;
    int total_steps = 3000;
    double lr0 = 4e-4;
    double lr_decay = 0.5;
    int lr_decay_every = 500;
    double mask_fraction = 0.005;
    double mask_sigma = 0.2;
    MaskMode mask_mode = MaskMode::Additive;
    LossConfig loss = LossConfig::noise2same_d();
    UNetConfig model = UNetConfig::defaults(2);
    ConvBackend backend = ConvBackend::Auto;
    uint64_t seed = 0;
    int log_every = 10;
    /// 0 saves only the final checkpoint.
    int checkpoint_every = 0;

    /// 2D: 128 px patches, batch 16, 3k steps, halve every 500.
    /// 3D: 64^3 patches, batch 4, 15k steps, halve every 2k.
    static TrainConfig defaults(int dims);
    void validate() const;
};

/// Step-decayed learning rate lr0 * decay^floor(step / decay_every).
double lr_at(int64_t step, const TrainConfig& cfg);

/// A training crop and the symmetry applied to it. The augmentation is an
/// axis permutation followed by per-axis flips, which together enumerate
/// every flip/right-angle-rotation of a square or cube.
struct Patch {
    torch::Tensor data;
    Shape origin;
    std::vector<int64_t> permutation;
    std::vector<bool> flips;
};

/// Uniformly positioned `size`-sided crop of a standardized image followed
/// by a uniformly drawn element of the symmetry group. Images smaller than
/// the patch are reflect-padded (with a warning).
Patch sample_patch(const torch::Tensor& img_std, int size, SeededRng& rng);

/// Applies a patch's augmentation to an arbitrary tensor of the same shape.
torch::Tensor apply_augmentation(const torch::Tensor& t, const std::vector<int64_t>& permutation,
                                 const std::vector<bool>& flips);

struct LogRow {
    int64_t step = 0;
    double lr = 0;
    LossBreakdown loss;
    double wall_ms = 0;
};

std::string log_csv_header();
std::string log_csv_row(const LogRow& row);

/// Owns the network and optimizer for single-image self-supervised
/// training. Normalization statistics come from the whole image and are
/// reused for every patch and at inference.
class Trainer {
public:
    Trainer(const Image& img, const PSFKernel& psf, TrainConfig cfg);
    ~Trainer();
    Trainer(Trainer&&) noexcept;
    Trainer& operator=(Trainer&&) noexcept;

    /// One optimizer update. Throws with the loss breakdown when the loss
    /// is not finite.
    LossBreakdown step();

    /// Restores network, optimizer and step counter from a checkpoint.
    void resume(const Checkpoint& ckpt);
    Checkpoint checkpoint(bool with_optimizer = true) const;

    int64_t current_step() const;
    const NormStats& stats() const;
    const TrainConfig& config() const;
    UNet model() const;
    uint64_t forward_count() const;
    /// convolve() calls attributable to training steps so far.
    uint64_t psf_convolutions() const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

struct TrainOutputs {
    /// Directory receiving checkpoint.pt and train_log.csv; empty keeps
    /// everything in memory.
    std::filesystem::path directory;
    /// Continue from directory/checkpoint.pt when it exists.
    bool resume = false;
    /// Print progress every log row.
    bool verbose = false;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LogRow> log;
    double train_seconds = 0;
};

TrainResult train(const Image& img, const PSFKernel& psf, const TrainConfig& cfg, const TrainOutputs& outputs = {});

}  // namespace siamdecon
