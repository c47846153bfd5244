#include "siamdecon/trainer.hpp"

#include "siamdecon/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace siamdecon {

namespace F = torch::nn::functional;

TrainConfig TrainConfig::defaults(int dims) {
    TrainConfig cfg;
    cfg.dims = dims;
    cfg.model = UNetConfig::defaults(dims);
    if (dims == 3) {
        cfg.patch_size = 64;
        cfg.batch_size = 4;
        cfg.total_steps = 15000;
        cfg.lr_decay_every = 2000;
        cfg.loss = LossConfig::noise2same(2.0, 0.0);
    }
    return cfg;
}

void TrainConfig::validate() const {
    if (dims != 2 && dims != 3) throw Error("train: dims must be 2 or 3");
    if (model.dims != dims) throw Error("train: model dims differ from train dims");
    model.validate();
    loss.validate();
    if (patch_size < 1 || patch_size % model.size_multiple() != 0) {
        throw Error("train: patch_size must be a positive multiple of " + std::to_string(model.size_multiple()));
    }
    if (batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (total_steps < 1) throw Error("train: total_steps must be >= 1");
    if (!(lr0 > 0)) throw Error("train: lr0 must be positive");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw Error("train: lr_decay must lie in (0, 1]");
    if (lr_decay_every < 1) throw Error("train: lr_decay_every must be >= 1");
    if (log_every < 1) throw Error("train: log_every must be >= 1");
    if (checkpoint_every < 0) throw Error("train: checkpoint_every must be >= 0");
}

double lr_at(int64_t step, const TrainConfig& cfg) {
    if (step < 0) throw Error("lr_at: step must be >= 0");
    return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_decay_every));
}

// ---------------------------------------------------------------- patches

namespace {

torch::Tensor reflect_pad_end(torch::Tensor t, const Shape& target) {
    // F::pad wants a batch and channel axis in front of the spatial ones.
    const int k = static_cast<int>(t.dim());
    auto x = t.unsqueeze(0).unsqueeze(0);
    for (;;) {
        std::vector<int64_t> pads;
        bool done = true;
        for (int a = k - 1; a >= 0; --a) {
            int64_t cur = x.size(a + 2);
            int64_t need = std::max<int64_t>(0, target[a] - cur);
            int64_t step = std::min(need, cur - 1);
            if (need > 0) done = false;
            pads.push_back(0);
            pads.push_back(step);
        }
        if (done) break;
        x = F::pad(x, F::PadFuncOptions(pads).mode(torch::kReflect));
    }
    return x.squeeze(0).squeeze(0);
}

}  // namespace

torch::Tensor apply_augmentation(const torch::Tensor& t, const std::vector<int64_t>& permutation,
                                 const std::vector<bool>& flips) {
    auto out = t.permute(permutation);
    std::vector<int64_t> axes;
    for (size_t a = 0; a < flips.size(); ++a) {
        if (flips[a]) axes.push_back(static_cast<int64_t>(a));
    }
    if (!axes.empty()) out = out.flip(axes);
    return out.contiguous();
}

Patch sample_patch(const torch::Tensor& img_std, int size, SeededRng& rng) {
    const int k = static_cast<int>(img_std.dim());
    if (k != 2 && k != 3) throw Error("sample_patch: image must be 2D or 3D");
    if (size < 1) throw Error("sample_patch: size must be >= 1");
    auto src = img_std;
    Shape target(k);
    bool small = false;
    for (int a = 0; a < k; ++a) {
        target[a] = std::max<int64_t>(src.size(a), size);
        small = small || src.size(a) < size;
    }
    if (small) {
        warn("sample_patch: image smaller than the patch; reflect-padding to " + shape_string(target));
        src = reflect_pad_end(src, target);
    }

    Patch patch;
    auto crop = src;
    for (int a = 0; a < k; ++a) {
        int64_t o = rng.uniform_int(0, src.size(a) - size);
        patch.origin.push_back(o);
        crop = crop.narrow(a, o, size);
    }
    patch.permutation.resize(k);
    std::iota(patch.permutation.begin(), patch.permutation.end(), 0);
    // Uniform permutation (Fisher-Yates) and independent flips.
    for (int a = k - 1; a > 0; --a) std::swap(patch.permutation[a], patch.permutation[rng.uniform_int(0, a)]);
    for (int a = 0; a < k; ++a) patch.flips.push_back(rng.uniform() < 0.5);
    patch.data = apply_augmentation(crop, patch.permutation, patch.flips);
    return patch;
}

// ---------------------------------------------------------------- log

std::string log_csv_header() { return "step,lr,bsp,rec,inv,inv_d,bound,bound_d,total,wall_ms\n"; }

std::string log_csv_row(const LogRow& r) {
    std::ostringstream os;
    os.precision(9);
    os << r.step << ',' << r.lr << ',' << r.loss.bsp << ',' << r.loss.rec << ',' << r.loss.inv << ','
       << r.loss.inv_d << ',' << r.loss.bound << ',' << r.loss.bound_d << ',' << r.loss.total << ',' << r.wall_ms
       << '\n';
    return os.str();
}

// ---------------------------------------------------------------- trainer

struct Trainer::State {
    TrainConfig cfg;
    PSFKernel psf;
    torch::Tensor image_std;
    NormStats stats;
    UNet model{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer;
    int64_t step = 0;
    uint64_t psf_convolutions = 0;
    SeededRng root{0};
};

Trainer::Trainer(const Image& img, const PSFKernel& psf, TrainConfig cfg) : state_(std::make_unique<State>()) {
    cfg.validate();
    if (img.dims() != cfg.dims) throw Error("train: image dimensionality does not match config dims");
    if (psf.dims() != cfg.dims) throw Error("train: PSF dimensionality does not match config dims");
    for (int a = 0; a < psf.dims(); ++a) {
        if (psf.side(a) > cfg.patch_size) throw Error("train: PSF is larger than the training patch");
    }
    auto& s = *state_;
    s.cfg = cfg;
    s.psf = psf;
    s.stats = compute_norm_stats(img.tensor(), img.value_range());
    s.image_std = standardize_with(img.tensor(), s.stats).to(torch::kFloat32).contiguous();
    s.root = SeededRng(cfg.seed).derive("train");
    s.model = build_unet(cfg.model, s.root.derive("init").seed());
    s.optimizer = std::make_unique<torch::optim::Adam>(
        s.model->parameters(), torch::optim::AdamOptions(cfg.lr0).betas({0.9, 0.999}).eps(1e-8));
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

int64_t Trainer::current_step() const { return state_->step; }
const NormStats& Trainer::stats() const { return state_->stats; }
const TrainConfig& Trainer::config() const { return state_->cfg; }
UNet Trainer::model() const { return state_->model; }
uint64_t Trainer::forward_count() const { return state_->model->forward_count(); }
uint64_t Trainer::psf_convolutions() const { return state_->psf_convolutions; }

LossBreakdown Trainer::step() {
    auto& s = *state_;
    const auto& cfg = s.cfg;
    s.model->train();

    std::vector<torch::Tensor> clean, masked;
    std::vector<MaskSet> masks;
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
        auto patch_rng = s.root.derive(static_cast<uint64_t>(s.step), static_cast<uint64_t>(slot), 0);
        auto mask_rng = s.root.derive(static_cast<uint64_t>(s.step), static_cast<uint64_t>(slot), 1);
        auto noise_rng = s.root.derive(static_cast<uint64_t>(s.step), static_cast<uint64_t>(slot), 2);
        auto patch = sample_patch(s.image_std, cfg.patch_size, patch_rng);
        Shape shape(patch.data.sizes().begin(), patch.data.sizes().end());
        auto mask = sample_mask(shape, cfg.mask_fraction, mask_rng, cfg.mask_sigma);
        masked.push_back(apply_mask(patch.data, mask, noise_rng, cfg.mask_mode));
        clean.push_back(patch.data);
        masks.push_back(std::move(mask));
    }
    LossInputs in;
    in.x = torch::stack(clean).unsqueeze(1);
    in.mask = pooled_indices(masks);
    in.stats = s.stats;

    auto reconvolve = [&](const torch::Tensor& f) {
        ++s.psf_convolutions;
        return convolve(f, s.psf, cfg.backend, Padding::Reflect);
    };
    // The masked pass always runs; the unmasked pass only when a term
    // consumes it.
    in.f_masked = s.model->forward(torch::stack(masked).unsqueeze(1));
    in.g_of_f_masked = reconvolve(in.f_masked);
    if (cfg.loss.needs_unmasked_pass()) {
        in.f_unmasked = s.model->forward(in.x);
        in.g_of_f_unmasked = reconvolve(in.f_unmasked);
    }

    auto [loss, parts] = composite_loss(in, cfg.loss);
    if (!std::isfinite(parts.total)) {
        std::ostringstream os;
        os << "train: non-finite loss at step " << s.step << " (bsp=" << parts.bsp << " rec=" << parts.rec
           << " inv=" << parts.inv << " inv_d=" << parts.inv_d << " bound=" << parts.bound
           << " bound_d=" << parts.bound_d << " total=" << parts.total << ")";
        throw Error(os.str());
    }

    const double lr = lr_at(s.step, cfg);
    for (auto& group : s.optimizer->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    s.optimizer->zero_grad();
    loss.backward();
    s.optimizer->step();
    ++s.step;
    return parts;
}

Checkpoint Trainer::checkpoint(bool with_optimizer) const {
    const auto& s = *state_;
    Checkpoint ckpt;
    ckpt.config = s.cfg.model;
    ckpt.stats = s.stats;
    ckpt.step = s.step;
    ckpt.model = s.model;
    if (with_optimizer) {
        torch::serialize::OutputArchive archive;
        s.optimizer->save(archive);
        std::ostringstream os;
        archive.save_to(os);
        ckpt.optimizer_state = os.str();
    }
    return ckpt;
}

void Trainer::resume(const Checkpoint& ckpt) {
    auto& s = *state_;
    const auto& a = ckpt.config;
    const auto& b = s.cfg.model;
    if (a.dims != b.dims || a.depth != b.depth || a.base_features != b.base_features || a.skip_mode != b.skip_mode) {
        throw Error("resume: checkpoint network does not match the training config");
    }
    torch::NoGradGuard no_grad;
    auto src = ckpt.model->named_parameters();
    for (auto& p : s.model->named_parameters()) p.value().copy_(src[p.key()]);
    auto src_buffers = ckpt.model->named_buffers();
    for (auto& b : s.model->named_buffers()) b.value().copy_(src_buffers[b.key()]);
    if (!ckpt.optimizer_state.empty()) {
        std::istringstream is(ckpt.optimizer_state);
        torch::serialize::InputArchive archive;
        archive.load_from(is);
        s.optimizer->load(archive);
    }
    s.step = ckpt.step;
}

TrainResult train(const Image& img, const PSFKernel& psf, const TrainConfig& cfg, const TrainOutputs& outputs) {
    Trainer trainer(img, psf, cfg);
    const bool persist = !outputs.directory.empty();
    const auto ckpt_path = outputs.directory / "checkpoint.pt";
    const auto log_path = outputs.directory / "train_log.csv";

    TrainResult result;
    if (persist) {
        std::filesystem::create_directories(outputs.directory);
        if (outputs.resume && std::filesystem::exists(ckpt_path)) {
            trainer.resume(load_checkpoint(ckpt_path));
            if (!std::filesystem::exists(log_path)) io::write_text(log_path, log_csv_header());
        } else {
            io::write_text(log_path, log_csv_header());
        }
    }

    auto t_start = std::chrono::steady_clock::now();
    while (trainer.current_step() < cfg.total_steps) {
        const int64_t step = trainer.current_step();
        auto t0 = std::chrono::steady_clock::now();
        auto parts = trainer.step();
        auto t1 = std::chrono::steady_clock::now();
        if (step % cfg.log_every == 0) {
            LogRow row{step, lr_at(step, cfg), parts, std::chrono::duration<double, std::milli>(t1 - t0).count()};
            result.log.push_back(row);
            if (persist) {
                std::ofstream(log_path, std::ios::app) << log_csv_row(row);
            }
            if (outputs.verbose) {
                std::cerr << "step " << step << " lr " << row.lr << " loss " << parts.total << " ("
                          << row.wall_ms << " ms)\n";
            }
        }
        if (persist && cfg.checkpoint_every > 0 && trainer.current_step() % cfg.checkpoint_every == 0) {
            save_checkpoint(ckpt_path, trainer.checkpoint());
        }
    }
    result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.checkpoint = trainer.checkpoint();
    if (persist) save_checkpoint(ckpt_path, result.checkpoint);
    return result;
}

}  // namespace siamdecon
