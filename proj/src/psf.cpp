#include "siamdecon/psf.hpp"

#include "siamdecon/io.hpp"

#include <cmath>

namespace siamdecon {

PSFKernel make_psf(const torch::Tensor& raw) {
    if (raw.dim() != 2 && raw.dim() != 3) {
        throw Error("psf: expected a 2D or 3D kernel, got " + std::to_string(raw.dim()) + " dimensions");
    }
    for (auto d : raw.sizes()) {
        if (d % 2 == 0) throw Error("psf: kernel sides must be odd (even-sided kernel has no center)");
    }
    auto k = raw.detach().to(torch::kFloat64);
    require_finite(k, "psf");
    double total_abs = k.abs().sum().item<double>();
    double negative_mass = (-k).clamp_min(0).sum().item<double>();
    k = k.clamp_min(0);
    double sum = k.sum().item<double>();
    if (!(sum > 0)) throw Error("psf: kernel is all zero after clipping negatives");
    if (negative_mass > 1e-3 * total_abs) {
        warn("psf: clipped negative entries carrying " + std::to_string(negative_mass / total_abs) +
             " of the kernel mass");
    }
    return PSFKernel((k / sum).to(torch::kFloat32));
}

PSFKernel load_psf(const std::filesystem::path& path) { return make_psf(io::read_array(path)); }

PSFKernel gaussian_psf(int dims, int side, double sigma) {
    if (dims != 2 && dims != 3) throw Error("gaussian_psf: dims must be 2 or 3");
    if (side < 3 || side % 2 == 0) throw Error("gaussian_psf: side must be odd and >= 3");
    if (!(sigma > 0)) throw Error("gaussian_psf: sigma must be positive");
    int half = side / 2;
    auto r = torch::arange(-half, half + 1, torch::kFloat64);
    auto profile = torch::exp(-(r * r) / (2 * sigma * sigma));
    torch::Tensor k;
    if (dims == 2) {
        k = profile.view({side, 1}) * profile.view({1, side});
    } else {
        k = profile.view({side, 1, 1}) * profile.view({1, side, 1}) * profile.view({1, 1, side});
    }
    return PSFKernel((k / k.sum()).to(torch::kFloat32));
}

}  // namespace siamdecon
