#include "siamdecon/degradation.hpp"

#include <cmath>

namespace siamdecon {

DegradeConfig DegradeConfig::defaults(int dims) {
    DegradeConfig cfg;
    if (dims == 3) cfg.sp_prob = 0.0;
    return cfg;
}

Image blur(const Image& img, const PSFKernel& psf, ConvBackend backend) {
    if (img.dims() != psf.dims()) {
        throw Error("blur: dimensionality mismatch between image and PSF");
    }
    return convolve(img, psf, backend, Padding::Reflect);
}

Image add_poisson(const Image& img, double alpha, SeededRng& rng) {
    if (alpha < 0) throw Error("add_poisson: alpha must be >= 0");
    if (alpha == 0) return img;
    auto t = img.tensor();
    if ((t < 0).any().item<bool>() || (t > 1).any().item<bool>()) {
        warn("add_poisson: input outside [0, 1] was clipped");
        t = t.clamp(0, 1);
    }
    auto out = t.clone().contiguous();
    float* p = out.data_ptr<float>();
    for (int64_t i = 0; i < out.numel(); ++i) {
        p[i] = static_cast<float>(alpha * static_cast<double>(rng.poisson(p[i] / alpha)));
    }
    return Image(out, img.value_range());
}

Image add_gaussian(const Image& img, double sigma, SeededRng& rng) {
    if (sigma < 0) throw Error("add_gaussian: sigma must be >= 0");
    if (sigma == 0) return img;
    auto out = img.tensor().clone();
    float* p = out.data_ptr<float>();
    for (int64_t i = 0; i < out.numel(); ++i) p[i] += static_cast<float>(rng.normal(0.0, sigma));
    return Image(out, img.value_range());
}

Image add_salt_pepper(const Image& img, double p, SeededRng& rng) {
    if (img.dims() != 2) throw Error("salt-and-pepper is 2D-only");
    if (p < 0 || p > 1) throw Error("add_salt_pepper: p must lie in [0, 1]");
    if (p == 0) return img;
    auto out = img.tensor().clone();
    float* v = out.data_ptr<float>();
    for (int64_t i = 0; i < out.numel(); ++i) {
        if (rng.uniform() < p) v[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    }
    return Image(out, img.value_range());
}

Image quantize(const Image& img, int bits) {
    if (bits < 1 || bits > 24) throw Error("quantize: bits must lie in [1, 24]");
    double levels = std::ldexp(1.0, bits) - 1.0;
    auto t = img.tensor().to(torch::kFloat64).clamp(0, 1);
    // Half-up rounding (values are non-negative), not torch's half-to-even.
    auto q = torch::floor(t * levels + 0.5) / levels;
    return Image(q.to(torch::kFloat32), img.value_range());
}

Image degrade(const Image& img, const PSFKernel& psf, const DegradeConfig& cfg) {
    if (img.dims() == 3 && cfg.sp_prob != 0) {
        throw Error("degrade: salt-and-pepper probability must be 0 for 3D images");
    }
    SeededRng root(cfg.seed);
    auto poisson_rng = root.derive("poisson");
    auto gaussian_rng = root.derive("gaussian");
    auto sp_rng = root.derive("salt-pepper");

    auto out = blur(img, psf);
    out = add_poisson(Image(out.tensor().clamp(0, 1), out.value_range()), cfg.poisson_alpha, poisson_rng);
    out = add_gaussian(out, cfg.gaussian_sigma, gaussian_rng);
    if (img.dims() == 2) out = add_salt_pepper(out, cfg.sp_prob, sp_rng);
    return quantize(out, cfg.quant_bits);
}

}  // namespace siamdecon
