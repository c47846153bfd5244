#pragma once

#include "siamdecon/core.hpp"

#include <optional>

namespace siamdecon {

/// Weights of the six-term self-supervised objective:
///
///   bsp     blind-spot MSE of the reconvolved masked pass at J
///   rec     MSE between the reconvolved unmasked pass and the input
///   inv     root-MSE at J between reconvolved masked/unmasked passes
///   inv_d   same, between the deconvolved (pre-PSF) passes
///   bound   |lo - v| + |v - hi| on the destandardized reconvolved pass
///   bound_d same on the destandardized deconvolved pass
struct LossConfig {
    double lambda_bsp = 0.0;
    double lambda_rec = 0.0;
    double lambda_inv = 0.0;
    double lambda_inv_d = 0.0;
    double lambda_bound = 0.0;
    double lambda_bound_d = 0.0;
    double bound_min = 0.0;
    double bound_max = 1.0;

    /// Blind-spot term only.
    static LossConfig noise2self();
    /// rec + 2 inv + 0.1 bound.
    static LossConfig noise2same(double lambda_inv = 2.0, double lambda_bound = 0.1);
    /// rec + 2 inv_d + 0.1 bound_d.
    static LossConfig noise2same_d(double lambda_inv_d = 2.0, double lambda_bound_d = 0.1);
    /// Looks up "noise2self", "noise2same" or "noise2same_d".
    static LossConfig preset(const std::string& name);

    void validate() const;
    bool needs_unmasked_pass() const;
    bool needs_masked_pass() const;
};

struct LossBreakdown {
    double bsp = 0, rec = 0, inv = 0, inv_d = 0, bound = 0, bound_d = 0;
    double total = 0;
};

/// Mean over the masked elements of (y - x)^2. `mask` holds flat indices
/// into the (batched) tensors.
torch::Tensor blind_spot_loss(const torch::Tensor& y_masked_reconv, const torch::Tensor& x,
                              const torch::Tensor& mask);

/// Sum of squared differences divided by the element count.
torch::Tensor reconstruction_loss(const torch::Tensor& y_unmasked_reconv, const torch::Tensor& x);

/// sqrt of the mean squared difference at masked elements. Exactly zero
/// (with zero gradient) for identical inputs.
torch::Tensor invariance_loss(const torch::Tensor& y_unmasked, const torch::Tensor& y_masked,
                              const torch::Tensor& mask);

/// Mean of |lo - v| + |v - hi| on destandardized values; constant hi - lo
/// with zero gradient inside [lo, hi].
torch::Tensor boundary_loss(const torch::Tensor& y_destd, double lo, double hi);

/// Tensors produced by one training step. Masked-pass tensors may be left
/// undefined when no term needs them, likewise for the unmasked pass.
struct LossInputs {
    torch::Tensor x;               ///< standardized network input
    torch::Tensor f_unmasked;      ///< f(x)
    torch::Tensor f_masked;        ///< f(x_{J^c})
    torch::Tensor g_of_f_unmasked; ///< g(f(x))
    torch::Tensor g_of_f_masked;   ///< g(f(x_{J^c}))
    torch::Tensor mask;            ///< flat int64 indices of J over the batch
    NormStats stats;
};

/// Weighted sum of the enabled terms; terms with a zero weight are not
/// evaluated and report 0 in the breakdown.
std::pair<torch::Tensor, LossBreakdown> composite_loss(const LossInputs& in, const LossConfig& cfg);

}  // namespace siamdecon
