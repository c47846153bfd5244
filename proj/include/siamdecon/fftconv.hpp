#pragma once

#include "siamdecon/core.hpp"

#include <map>
#include <shared_mutex>
#include <tuple>

namespace siamdecon {

enum class ConvBackend { Direct, Fft, Auto };
enum class Padding { Reflect, Zero };

std::string to_string(ConvBackend backend);
ConvBackend parse_backend(const std::string& name);

/// Size-based policy: FFT for 2D kernels wider than 25 and 3D kernels wider
/// than 9, direct sliding-window convolution otherwise.
ConvBackend choose_backend(int kernel_side, int dims);

/// "Same"-size convolution of `x` with `kernel` (true convolution, not
/// correlation). `x` is either a bare spatial tensor with the kernel's rank
/// or a batched tensor whose trailing dims are spatial, e.g. (N, C, H, W).
/// The input is padded by (side - 1) / 2 per axis before convolving.
/// Differentiable with respect to `x` through both backends.
torch::Tensor convolve(const torch::Tensor& x, const PSFKernel& kernel,
                       ConvBackend backend = ConvBackend::Auto, Padding padding = Padding::Reflect);

Image convolve(const Image& img, const PSFKernel& kernel,
               ConvBackend backend = ConvBackend::Auto, Padding padding = Padding::Reflect);

/// Number of convolve() calls since process start. Used to assert that code
/// paths such as inference never touch the forward operator.
uint64_t convolve_call_count();

/// Process-wide cache of kernel spectra keyed on (kernel id, padded shape,
/// dtype). Readers share a lock; inserts take it exclusively.
class SpectrumCache {
public:
    static SpectrumCache& instance();

    torch::Tensor get(const PSFKernel& kernel, const Shape& padded_shape, torch::ScalarType dtype);
    size_t size() const;
    void clear();

private:
    using Key = std::tuple<uint64_t, Shape, int>;
    mutable std::shared_mutex mutex_;
    std::map<Key, torch::Tensor> spectra_;
};

struct ConvBenchmark {
    Shape image_shape;
    int kernel_side = 0;
    int dims = 0;
    double direct_ms = 0;
    double fft_ms = 0;
    double speedup = 0;
};

/// Median wall time of each backend over `repeats` runs, after one warm-up
/// run per backend that also fills the spectrum cache.
ConvBenchmark benchmark_conv(const Shape& image_shape, int kernel_side, int repeats, uint64_t seed = 0);

}  // namespace siamdecon
