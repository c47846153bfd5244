#include "siamdecon/baselines.hpp"

#include <chrono>

namespace siamdecon {

namespace {

constexpr double kDivisionGuard = 1e-12;

torch::Tensor nonnegative_observation(const Image& y) {
    auto t = y.tensor().to(torch::kFloat64);
    if ((t < 0).any().item<bool>()) {
        warn("lucy_richardson: negative observations clipped to 0");
        t = t.clamp_min(0);
    }
    return t;
}

}  // namespace

Image lucy_richardson(const Image& y, const PSFKernel& psf, int n, const Image& x0, Padding padding) {
    if (n < 1) throw Error("lucy_richardson: iteration count must be >= 1");
    if (y.dims() != psf.dims()) throw Error("lucy_richardson: dimensionality mismatch between image and PSF");
    if (x0.shape() != y.shape()) throw Error("lucy_richardson: initial estimate shape mismatch");
    torch::NoGradGuard no_grad;
    auto obs = nonnegative_observation(y);
    auto adjoint = psf.flipped();
    auto x = x0.tensor().to(torch::kFloat64).clamp_min(0);
    for (int k = 0; k < n; ++k) {
        auto reblurred = convolve(x, psf, ConvBackend::Auto, padding);
        auto ratio = obs / (reblurred + kDivisionGuard);
        x = x * convolve(ratio, adjoint, ConvBackend::Auto, padding);
    }
    return Image(x.clamp_min(0).to(torch::kFloat32), y.value_range());
}

Image lucy_richardson(const Image& y, const PSFKernel& psf, int n, Padding padding) {
    return lucy_richardson(y, psf, n, Image(y.tensor().clamp_min(0), y.value_range()), padding);
}

std::vector<MetricRow> lr_sweep(const Image& y, const PSFKernel& psf, const std::vector<int>& ns, const Image& clean) {
    if (ns.empty()) throw Error("lr_sweep: need at least one iteration count");
    std::vector<MetricRow> rows;
    for (int n : ns) {
        auto t0 = std::chrono::steady_clock::now();
        auto restored = lucy_richardson(y, psf, n);
        auto t1 = std::chrono::steady_clock::now();
        auto row = evaluate(restored, clean, "LR n=" + std::to_string(n));
        row.set("Inference t (ms)", std::chrono::duration<double, std::milli>(t1 - t0).count());
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace siamdecon
