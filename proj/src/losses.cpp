#include "siamdecon/losses.hpp"

namespace siamdecon {

LossConfig LossConfig::noise2self() {
    LossConfig c;
    c.lambda_bsp = 1.0;
    return c;
}

LossConfig LossConfig::noise2same(double lambda_inv, double lambda_bound) {
    LossConfig c;
    c.lambda_rec = 1.0;
    c.lambda_inv = lambda_inv;
    c.lambda_bound = lambda_bound;
    return c;
}

LossConfig LossConfig::noise2same_d(double lambda_inv_d, double lambda_bound_d) {
    LossConfig c;
    c.lambda_rec = 1.0;
    c.lambda_inv_d = lambda_inv_d;
    c.lambda_bound_d = lambda_bound_d;
    return c;
}

LossConfig LossConfig::preset(const std::string& name) {
    if (name == "noise2self") return noise2self();
    if (name == "noise2same") return noise2same();
    if (name == "noise2same_d") return noise2same_d();
    throw Error("unknown loss preset '" + name + "' (expected noise2self, noise2same or noise2same_d)");
}

void LossConfig::validate() const {
    for (double l : {lambda_bsp, lambda_rec, lambda_inv, lambda_inv_d, lambda_bound, lambda_bound_d}) {
        if (l < 0) throw Error("loss: every lambda must be >= 0");
    }
    if (lambda_bsp + lambda_rec + lambda_inv + lambda_inv_d + lambda_bound + lambda_bound_d <= 0) {
        throw Error("loss: at least one lambda must be positive");
    }
    if (!(bound_min < bound_max)) throw Error("loss: bound_min must be < bound_max");
}

bool LossConfig::needs_unmasked_pass() const {
    return lambda_rec > 0 || lambda_inv > 0 || lambda_inv_d > 0 || lambda_bound > 0 || lambda_bound_d > 0;
}

bool LossConfig::needs_masked_pass() const { return lambda_bsp > 0 || lambda_inv > 0 || lambda_inv_d > 0; }

namespace {

torch::Tensor gather(const torch::Tensor& t, const torch::Tensor& mask) {
    return t.reshape({-1}).index_select(0, mask);
}

void require_mask(const torch::Tensor& mask, const char* what) {
    if (!mask.defined() || mask.numel() == 0) throw Error(std::string(what) + ": empty mask");
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.defined() || !b.defined()) throw Error(std::string(what) + ": missing tensor");
    if (a.sizes() != b.sizes()) throw Error(std::string(what) + ": shape mismatch");
}

}  // namespace

torch::Tensor blind_spot_loss(const torch::Tensor& y_masked_reconv, const torch::Tensor& x, const torch::Tensor& mask) {
    require_same(y_masked_reconv, x, "blind_spot_loss");
    require_mask(mask, "blind_spot_loss");
    return (gather(y_masked_reconv, mask) - gather(x, mask)).pow(2).mean();
}

torch::Tensor reconstruction_loss(const torch::Tensor& y_unmasked_reconv, const torch::Tensor& x) {
    require_same(y_unmasked_reconv, x, "reconstruction_loss");
    return (y_unmasked_reconv - x).pow(2).sum() / static_cast<double>(x.numel());
}

torch::Tensor invariance_loss(const torch::Tensor& y_unmasked, const torch::Tensor& y_masked, const torch::Tensor& mask) {
    require_same(y_unmasked, y_masked, "invariance_loss");
    require_mask(mask, "invariance_loss");
    auto mse = (gather(y_unmasked, mask) - gather(y_masked, mask)).pow(2).mean();
    // sqrt has an infinite slope at 0; route exact zeros around it.
    auto positive = mse > 0;
    auto safe = torch::where(positive, mse, torch::ones_like(mse));
    return torch::where(positive, torch::sqrt(safe), mse);
}

torch::Tensor boundary_loss(const torch::Tensor& y_destd, double lo, double hi) {
    if (!(lo < hi)) throw Error("boundary_loss: lo must be < hi");
    return ((lo - y_destd).abs() + (y_destd - hi).abs()).mean();
}

std::pair<torch::Tensor, LossBreakdown> composite_loss(const LossInputs& in, const LossConfig& cfg) {
    cfg.validate();
    LossBreakdown parts;
    if (!in.x.defined()) throw Error("composite_loss: missing input tensor 'x'");
    auto total = torch::zeros({}, in.x.options());

    auto need = [](const torch::Tensor& t, const char* name) -> const torch::Tensor& {
        if (!t.defined()) throw Error(std::string("composite_loss: missing tensor '") + name + "' required by a nonzero lambda");
        return t;
    };
    auto add = [&](double lambda, const torch::Tensor& term, double& slot) {
        slot = term.item<double>();
        total = total + lambda * term;
    };

    if (cfg.lambda_bsp > 0) {
        add(cfg.lambda_bsp, blind_spot_loss(need(in.g_of_f_masked, "g_of_f_masked"), in.x, in.mask), parts.bsp);
    }
    if (cfg.lambda_rec > 0) {
        add(cfg.lambda_rec, reconstruction_loss(need(in.g_of_f_unmasked, "g_of_f_unmasked"), in.x), parts.rec);
    }
    if (cfg.lambda_inv > 0) {
        add(cfg.lambda_inv,
            invariance_loss(need(in.g_of_f_unmasked, "g_of_f_unmasked"), need(in.g_of_f_masked, "g_of_f_masked"),
                            in.mask),
            parts.inv);
    }
    if (cfg.lambda_inv_d > 0) {
        add(cfg.lambda_inv_d,
            invariance_loss(need(in.f_unmasked, "f_unmasked"), need(in.f_masked, "f_masked"), in.mask), parts.inv_d);
    }
    if (cfg.lambda_bound > 0) {
        auto v = destandardize(need(in.g_of_f_unmasked, "g_of_f_unmasked"), in.stats);
        add(cfg.lambda_bound, boundary_loss(v, cfg.bound_min, cfg.bound_max), parts.bound);
    }
    if (cfg.lambda_bound_d > 0) {
        auto v = destandardize(need(in.f_unmasked, "f_unmasked"), in.stats);
        add(cfg.lambda_bound_d, boundary_loss(v, cfg.bound_min, cfg.bound_max), parts.bound_d);
    }
    parts.total = total.item<double>();
    return {total, parts};
}

}  // namespace siamdecon
