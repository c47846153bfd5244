#include "siamdecon/model.hpp"

#include <cstring>

namespace siamdecon {

namespace F = torch::nn::functional;

UNetConfig UNetConfig::defaults(int dims) {
    UNetConfig cfg;
    cfg.dims = dims;
    cfg.depth = 3;
    cfg.base_features = dims == 3 ? 48 : 96;
    cfg.skip_mode = dims == 3 ? SkipMode::Add : SkipMode::Concat;
    return cfg;
}

void UNetConfig::validate() const {
    if (dims != 2 && dims != 3) throw Error("unet: dims must be 2 or 3");
    if (depth < 1) throw Error("unet: depth must be >= 1");
    if (base_features < 1) throw Error("unet: base_features must be >= 1");
}

std::string to_string(SkipMode mode) { return mode == SkipMode::Add ? "add" : "concat"; }

SkipMode parse_skip_mode(const std::string& name) {
    if (name == "add") return SkipMode::Add;
    if (name == "concat") return SkipMode::Concat;
    throw Error("unknown skip mode '" + name + "' (expected concat or add)");
}

// ---------------------------------------------------------------- blocks

ConvBlockImpl::ConvBlockImpl(int dims, int64_t in_channels, int64_t out_channels) : dims_(dims) {
    if (dims == 2) {
        conv_ = torch::nn::AnyModule(register_module(
            "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1).bias(false))));
        norm_ = torch::nn::AnyModule(register_module("norm", torch::nn::BatchNorm2d(out_channels)));
    } else {
        conv_ = torch::nn::AnyModule(register_module(
            "conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(in_channels, out_channels, 3).padding(1).bias(false))));
        norm_ = torch::nn::AnyModule(register_module(
            "norm", torch::nn::InstanceNorm3d(torch::nn::InstanceNorm3dOptions(out_channels).affine(true))));
    }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
    return torch::relu(norm_.forward(conv_.forward(x)));
}

// ---------------------------------------------------------------- U-Net

UNetImpl::UNetImpl(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.dims;
    auto width = [&](int level) { return static_cast<int64_t>(cfg_.base_features) << level; };

    for (int l = 0; l < cfg_.depth; ++l) {
        int64_t in = l == 0 ? 1 : width(l - 1);
        torch::nn::Sequential enc(ConvBlock(d, in, width(l)), ConvBlock(d, width(l), width(l)));
        encoders_.push_back(register_module("enc" + std::to_string(l), enc));
    }
    for (int l = cfg_.depth - 2; l >= 0; --l) {
        const bool concat = cfg_.skip_mode == SkipMode::Concat;
        // Additive skips need the upsampled features projected to the
        // encoder width first.
        int64_t up_out = concat ? width(l + 1) : width(l);
        up_convs_.push_back(register_module("up" + std::to_string(l), ConvBlock(d, width(l + 1), up_out)));
        int64_t dec_in = concat ? up_out + width(l) : width(l);
        torch::nn::Sequential dec(ConvBlock(d, dec_in, width(l)), ConvBlock(d, width(l), width(l)));
        decoders_.push_back(register_module("dec" + std::to_string(l), dec));
    }
    if (d == 2) {
        head_ = torch::nn::AnyModule(
            register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(width(0), 1, 1))));
    } else {
        head_ = torch::nn::AnyModule(
            register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(width(0), 1, 1))));
    }
}

torch::Tensor UNetImpl::downsample(const torch::Tensor& x) const {
    return cfg_.dims == 2 ? torch::max_pool2d(x, 2) : torch::max_pool3d(x, 2);
}

torch::Tensor UNetImpl::upsample(const torch::Tensor& x) const {
    std::vector<double> scale(cfg_.dims, 2.0);
    return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(scale).mode(torch::kNearest));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
    forward_calls_.fetch_add(1, std::memory_order_relaxed);
    if (x.dim() != cfg_.dims + 2 || x.size(1) != 1) {
        throw Error("unet: expected input of shape (N, 1, " + std::string(cfg_.dims == 2 ? "H, W" : "D, H, W") +
                    "), got " + shape_string(Shape(x.sizes().begin(), x.sizes().end())));
    }
    const auto multiple = cfg_.size_multiple();
    for (int a = 2; a < x.dim(); ++a) {
        if (x.size(a) % multiple != 0) {
            throw Error("unet: spatial size " + std::to_string(x.size(a)) + " is not divisible by " +
                        std::to_string(multiple) + " (2^(depth-1))");
        }
    }

    std::vector<torch::Tensor> skips;
    auto h = x;
    for (int l = 0; l < cfg_.depth; ++l) {
        if (l > 0) h = downsample(h);
        h = encoders_[l]->forward(h);
        skips.push_back(h);
    }
    for (size_t i = 0; i < decoders_.size(); ++i) {
        const int l = cfg_.depth - 2 - static_cast<int>(i);
        h = up_convs_[i]->forward(upsample(h));
        h = cfg_.skip_mode == SkipMode::Concat ? torch::cat({h, skips[l]}, 1) : h + skips[l];
        h = decoders_[i]->forward(h);
    }
    return head_.forward(h);
}

int64_t UNetImpl::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

UNet build_unet(const UNetConfig& cfg, uint64_t seed) {
    torch::manual_seed(seed);
    return UNet(cfg);
}

// ---------------------------------------------------------------- checkpoints

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (!ckpt.model) throw Error("save_checkpoint: no model");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(Checkpoint::kFormatTag)));
    archive.write("dims", c10::IValue(static_cast<int64_t>(ckpt.config.dims)));
    archive.write("depth", c10::IValue(static_cast<int64_t>(ckpt.config.depth)));
    archive.write("base_features", c10::IValue(static_cast<int64_t>(ckpt.config.base_features)));
    archive.write("skip_mode", c10::IValue(to_string(ckpt.config.skip_mode)));
    archive.write("norm_mean", c10::IValue(ckpt.stats.mean));
    archive.write("norm_std", c10::IValue(ckpt.stats.std));
    archive.write("step", c10::IValue(ckpt.step));
    torch::serialize::OutputArchive model_archive;
    ckpt.model->save(model_archive);
    archive.write("model", model_archive);
    auto opt = torch::empty({static_cast<int64_t>(ckpt.optimizer_state.size())}, torch::kUInt8);
    if (!ckpt.optimizer_state.empty()) {
        std::memcpy(opt.data_ptr(), ckpt.optimizer_state.data(), ckpt.optimizer_state.size());
    }
    archive.write("optimizer", opt, /*is_buffer=*/true);
    auto tmp = path;
    tmp += ".tmp";
    archive.save_to(tmp.string());
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("checkpoint '" + path.string() + "' does not exist");
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw Error("checkpoint '" + path.string() + "' is not a readable archive");
    }
    c10::IValue v;
    if (!archive.try_read("format", v) || !v.isString() || v.toStringRef() != Checkpoint::kFormatTag) {
        throw Error("checkpoint '" + path.string() + "' has an unknown format tag");
    }
    Checkpoint ckpt;
    archive.read("dims", v);
    ckpt.config.dims = static_cast<int>(v.toInt());
    archive.read("depth", v);
    ckpt.config.depth = static_cast<int>(v.toInt());
    archive.read("base_features", v);
    ckpt.config.base_features = static_cast<int>(v.toInt());
    archive.read("skip_mode", v);
    ckpt.config.skip_mode = parse_skip_mode(v.toStringRef());
    archive.read("norm_mean", v);
    ckpt.stats.mean = v.toDouble();
    archive.read("norm_std", v);
    ckpt.stats.std = v.toDouble();
    archive.read("step", v);
    ckpt.step = v.toInt();
    ckpt.model = UNet(ckpt.config);
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    ckpt.model->load(model_archive);
    torch::Tensor opt;
    archive.read("optimizer", opt, /*is_buffer=*/true);
    ckpt.optimizer_state.assign(static_cast<const char*>(opt.data_ptr()), static_cast<size_t>(opt.numel()));
    return ckpt;
}

}  // namespace siamdecon
