#include "siamdecon/fftconv.hpp"

#include "siamdecon/psf.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>

namespace siamdecon {

namespace F = torch::nn::functional;

namespace {

std::atomic<uint64_t> g_convolve_calls{0};

std::vector<int64_t> spatial_dims(int64_t rank, int k) {
    std::vector<int64_t> dims;
    for (int64_t d = rank - k; d < rank; ++d) dims.push_back(d);
    return dims;
}

torch::Tensor pad_input(const torch::Tensor& x, const Shape& half, Padding padding) {
    // F::pad takes pairs starting from the last dimension.
    std::vector<int64_t> pads;
    for (auto it = half.rbegin(); it != half.rend(); ++it) {
        pads.push_back(*it);
        pads.push_back(*it);
    }
    auto opts = F::PadFuncOptions(pads);
    if (padding == Padding::Reflect) {
        opts.mode(torch::kReflect);
    } else {
        opts.mode(torch::kConstant).value(0);
    }
    return F::pad(x, opts);
}

torch::Tensor convolve_direct(const torch::Tensor& xp, const PSFKernel& kernel) {
    int k = kernel.dims();
    auto w = kernel.flipped().tensor().to(xp.scalar_type());
    Shape wshape{1, 1};
    for (auto s : kernel.shape()) wshape.push_back(s);
    w = w.view(wshape);
    return k == 2 ? torch::conv2d(xp, w) : torch::conv3d(xp, w);
}

torch::Tensor convolve_fft(const torch::Tensor& xp, const PSFKernel& kernel, const Shape& half) {
    int k = kernel.dims();
    auto dims = spatial_dims(xp.dim(), k);
    Shape padded(xp.sizes().end() - k, xp.sizes().end());
    auto spectrum = SpectrumCache::instance().get(kernel, padded, xp.scalar_type());
    auto y = torch::fft::irfftn(torch::fft::rfftn(xp, padded, dims) * spectrum, padded, dims);
    for (int a = 0; a < k; ++a) {
        auto dim = dims[a];
        y = y.narrow(dim, half[a], padded[a] - 2 * half[a]);
    }
    return y;
}

}  // namespace

std::string to_string(ConvBackend backend) {
    switch (backend) {
        case ConvBackend::Direct: return "direct";
        case ConvBackend::Fft: return "fft";
        case ConvBackend::Auto: return "auto";
    }
    return "auto";
}

ConvBackend parse_backend(const std::string& name) {
    if (name == "direct") return ConvBackend::Direct;
    if (name == "fft") return ConvBackend::Fft;
    if (name == "auto") return ConvBackend::Auto;
    throw Error("unknown convolution backend '" + name + "' (expected direct, fft or auto)");
}

ConvBackend choose_backend(int kernel_side, int dims) {
    if (dims == 2 && kernel_side > 25) return ConvBackend::Fft;
    if (dims == 3 && kernel_side > 9) return ConvBackend::Fft;
    return ConvBackend::Direct;
}

SpectrumCache& SpectrumCache::instance() {
    static SpectrumCache cache;
    return cache;
}

torch::Tensor SpectrumCache::get(const PSFKernel& kernel, const Shape& padded_shape, torch::ScalarType dtype) {
    Key key{kernel.id(), padded_shape, static_cast<int>(dtype)};
    {
        std::shared_lock lock(mutex_);
        if (auto it = spectra_.find(key); it != spectra_.end()) return it->second;
    }
    int k = kernel.dims();
    auto embedded = torch::zeros(padded_shape, torch::TensorOptions().dtype(dtype));
    auto view = embedded;
    for (int a = 0; a < k; ++a) view = view.narrow(a, 0, kernel.side(a));
    view.copy_(kernel.tensor().to(dtype));
    // Move the kernel center to the origin so the product is a centered convolution.
    Shape shifts;
    std::vector<int64_t> dims;
    for (int a = 0; a < k; ++a) {
        shifts.push_back(-(kernel.side(a) / 2));
        dims.push_back(a);
    }
    embedded = torch::roll(embedded, shifts, dims);
    auto spectrum = torch::fft::rfftn(embedded, c10::nullopt, dims);

    std::unique_lock lock(mutex_);
    auto [it, inserted] = spectra_.emplace(key, spectrum);
    return it->second;
}

size_t SpectrumCache::size() const {
    std::shared_lock lock(mutex_);
    return spectra_.size();
}

void SpectrumCache::clear() {
    std::unique_lock lock(mutex_);
    spectra_.clear();
}

torch::Tensor convolve(const torch::Tensor& x, const PSFKernel& kernel, ConvBackend backend, Padding padding) {
    g_convolve_calls.fetch_add(1, std::memory_order_relaxed);
    int k = kernel.dims();
    if (k == 0) throw Error("convolve: empty kernel");
    if (x.dim() < k) throw Error("convolve: input has fewer dimensions than the kernel");
    Shape half;
    for (int a = 0; a < k; ++a) {
        auto side = kernel.side(a);
        if (side % 2 == 0) throw Error("convolve: even-sided kernel");
        auto n = x.size(x.dim() - k + a);
        if (side > n) {
            throw Error("convolve: kernel " + shape_string(kernel.shape()) + " is larger than the input along axis " +
                        std::to_string(a));
        }
        half.push_back(side / 2);
    }
    if (backend == ConvBackend::Auto) {
        auto side = *std::max_element(half.begin(), half.end()) * 2 + 1;
        backend = choose_backend(static_cast<int>(side), k);
    }

    auto original = x.sizes().vec();
    Shape batched{-1, 1};
    batched.insert(batched.end(), original.end() - k, original.end());
    auto xb = x.reshape(batched);
    if (!xb.is_floating_point()) xb = xb.to(torch::kFloat32);
    auto xp = pad_input(xb, half, padding);
    auto y = backend == ConvBackend::Fft ? convolve_fft(xp, kernel, half) : convolve_direct(xp, kernel);
    return y.reshape(original);
}

Image convolve(const Image& img, const PSFKernel& kernel, ConvBackend backend, Padding padding) {
    if (img.dims() != kernel.dims()) {
        throw Error("convolve: dimensionality mismatch between image (" + std::to_string(img.dims()) +
                    "D) and kernel (" + std::to_string(kernel.dims()) + "D)");
    }
    torch::NoGradGuard no_grad;
    return Image(convolve(img.tensor(), kernel, backend, padding), img.value_range());
}

uint64_t convolve_call_count() { return g_convolve_calls.load(); }

ConvBenchmark benchmark_conv(const Shape& image_shape, int kernel_side, int repeats, uint64_t seed) {
    if (repeats < 3) throw Error("benchmark_conv: repeats must be >= 3");
    int dims = static_cast<int>(image_shape.size());
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto x = torch::rand(image_shape, gen, torch::TensorOptions().dtype(torch::kFloat32));
    auto kernel = gaussian_psf(dims, kernel_side, std::max(1.0, kernel_side / 6.0));

    auto time_backend = [&](ConvBackend backend) {
        convolve(x, kernel, backend, Padding::Reflect);  // warm-up
        std::vector<double> ms;
        for (int r = 0; r < repeats; ++r) {
            auto t0 = std::chrono::steady_clock::now();
            auto y = convolve(x, kernel, backend, Padding::Reflect);
            (void)y.sum().item<float>();
            auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::nth_element(ms.begin(), ms.begin() + ms.size() / 2, ms.end());
        return ms[ms.size() / 2];
    };

    ConvBenchmark out;
    out.image_shape = image_shape;
    out.kernel_side = kernel_side;
    out.dims = dims;
    out.direct_ms = time_backend(ConvBackend::Direct);
    out.fft_ms = time_backend(ConvBackend::Fft);
    out.speedup = out.direct_ms / out.fft_ms;
    return out;
}

}  // namespace siamdecon
