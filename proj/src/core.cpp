#include "siamdecon/core.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <sstream>

namespace siamdecon {

namespace {

std::atomic<WarningSink> g_warning_sink{nullptr};
std::atomic<uint64_t> g_next_kernel_id{1};

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void warn(const std::string& message) {
    if (auto sink = g_warning_sink.load()) {
        sink(message);
        return;
    }
    std::cerr << "warning: " << message << '\n';
}

WarningSink set_warning_sink(WarningSink sink) { return g_warning_sink.exchange(sink); }

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

void require_finite(const torch::Tensor& t, std::string_view what) {
    if (!torch::isfinite(t).all().item<bool>()) {
        throw Error(std::string(what) + ": contains non-finite values");
    }
}

// ---------------------------------------------------------------- Image

Image::Image(torch::Tensor data, ValueRange range) : range_(range) {
    if (!data.defined()) throw Error("image: undefined tensor");
    if (data.dim() != 2 && data.dim() != 3) {
        throw Error("image: expected 2 or 3 dimensions, got " + std::to_string(data.dim()));
    }
    for (auto d : data.sizes()) {
        if (d < 1) throw Error("image: every dimension must be >= 1");
    }
    if (!(range.lo < range.hi)) throw Error("image: value range must satisfy lo < hi");
    data_ = data.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    require_finite(data_, "image");
}

Image Image::from_vector(const std::vector<float>& values, const Shape& shape, ValueRange range) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    if (n != static_cast<int64_t>(values.size())) {
        throw Error("image: buffer size does not match shape " + shape_string(shape));
    }
    auto t = torch::from_blob(const_cast<float*>(values.data()), shape, torch::kFloat32).clone();
    return Image(t, range);
}

std::vector<float> Image::to_vector() const {
    const float* p = data_.data_ptr<float>();
    return std::vector<float>(p, p + data_.numel());
}

float Image::at(std::initializer_list<int64_t> index) const {
    if (static_cast<int64_t>(index.size()) != data_.dim()) throw Error("image: bad index rank");
    int64_t offset = 0;
    int axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= data_.size(axis)) throw Error("image: index out of range");
        offset += i * data_.stride(axis);
        ++axis;
    }
    return data_.data_ptr<float>()[offset];
}

// ---------------------------------------------------------------- PSFKernel

PSFKernel::PSFKernel(torch::Tensor data) {
    if (!data.defined()) throw Error("psf: undefined tensor");
    if (data.dim() != 2 && data.dim() != 3) {
        throw Error("psf: expected 2 or 3 dimensions, got " + std::to_string(data.dim()));
    }
    for (auto d : data.sizes()) {
        if (d % 2 == 0) throw Error("psf: kernel sides must be odd, got " + shape_string(Shape(data.sizes().begin(), data.sizes().end())));
    }
    data_ = data.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    require_finite(data_, "psf");
    if ((data_ < 0).any().item<bool>()) throw Error("psf: negative entries");
    double sum = data_.sum(torch::kFloat64).item<double>();
    if (std::abs(sum - 1.0) > 1e-6 * std::max<double>(1.0, std::sqrt(static_cast<double>(data_.numel())))) {
        throw Error("psf: entries must sum to 1, got " + std::to_string(sum));
    }
    id_ = g_next_kernel_id.fetch_add(1);
}

PSFKernel PSFKernel::flipped() const {
    std::vector<int64_t> axes(data_.dim());
    for (int64_t i = 0; i < data_.dim(); ++i) axes[i] = i;
    return PSFKernel(data_.flip(axes));
}

// ---------------------------------------------------------------- SeededRng

SeededRng SeededRng::derive(std::string_view label) const {
    return SeededRng(splitmix64(seed_ ^ splitmix64(fnv1a(label))));
}

SeededRng SeededRng::derive(uint64_t a, uint64_t b, uint64_t c) const {
    uint64_t h = splitmix64(seed_);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (c + 0x3c6ef372fe94f82bULL));
    return SeededRng(h);
}

double SeededRng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double SeededRng::normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
}

int64_t SeededRng::uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
}

int64_t SeededRng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<int64_t>(mean)(engine_);
}

// ---------------------------------------------------------------- standardization

NormStats compute_norm_stats(const torch::Tensor& data, ValueRange range) {
    auto d = data.to(torch::kFloat64);
    double mean = d.mean().item<double>();
    double var = (d - mean).pow(2).mean().item<double>();
    double sd = std::sqrt(var);
    double threshold = 1e-8 * (range.hi - range.lo);
    if (!(sd > threshold)) throw Error("degenerate standardization: image is constant");
    return {mean, sd};
}

torch::Tensor standardize_with(const torch::Tensor& data, const NormStats& stats) {
    if (!(stats.std > 0)) throw Error("standardize: std must be positive");
    return (data - stats.mean) / stats.std;
}

std::pair<Image, NormStats> standardize(const Image& img) {
    auto stats = compute_norm_stats(img.tensor(), img.value_range());
    auto out = ((img.tensor().to(torch::kFloat64) - stats.mean) / stats.std).to(torch::kFloat32);
    double lo = (img.value_range().lo - stats.mean) / stats.std;
    double hi = (img.value_range().hi - stats.mean) / stats.std;
    return {Image(out, {lo, hi}), stats};
}

torch::Tensor destandardize(const torch::Tensor& data, const NormStats& stats) {
    if (!(stats.std > 0)) throw Error("destandardize: std must be positive");
    return data * stats.std + stats.mean;
}

Image destandardize(const Image& img, const NormStats& stats) {
    auto out = destandardize(img.tensor().to(torch::kFloat64), stats).to(torch::kFloat32);
    ValueRange r{img.value_range().lo * stats.std + stats.mean,
                 img.value_range().hi * stats.std + stats.mean};
    return Image(out, r);
}

}  // namespace siamdecon
