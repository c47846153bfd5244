#pragma once

#include "siamdecon/core.hpp"
#include "siamdecon/fftconv.hpp"

namespace siamdecon {

/// Synthetic forward model parameters. Gaussian sigma is in units of the
/// [0, 1] intensity range. Salt-and-pepper must be zero for 3D images.
struct DegradeConfig {
    double poisson_alpha = 0.001;
    double gaussian_sigma = 0.1;
    double sp_prob = 0.01;
    int quant_bits = 10;
    uint64_t seed = 0;

    /// Published settings; 3D drops salt-and-pepper.
    static DegradeConfig defaults(int dims);
};

/// Same-shape PSF blur with reflect padding at the borders.
Image blur(const Image& img, const PSFKernel& psf, ConvBackend backend = ConvBackend::Auto);

/// Scaled-count shot noise: v -> alpha * Poisson(v / alpha). Mean preserving
/// with variance alpha * v. Values outside [0, 1] are clipped first.
Image add_poisson(const Image& img, double alpha, SeededRng& rng);

Image add_gaussian(const Image& img, double sigma, SeededRng& rng);

/// Each pixel independently with probability p becomes 0 or 1 (even odds).
/// 2D only.
Image add_salt_pepper(const Image& img, double p, SeededRng& rng);

/// Clip to [0, 1] and round to 2^bits - 1 levels.
Image quantize(const Image& img, int bits);

/// blur -> Poisson -> Gaussian -> salt-and-pepper (2D) -> quantize, with
/// every stage drawing from streams derived from cfg.seed.
Image degrade(const Image& img, const PSFKernel& psf, const DegradeConfig& cfg);

}  // namespace siamdecon
