#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace siamdecon {

/// Raised for every contract violation in the library. Messages are meant
/// for humans and for tests that match on a substring.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

/// Emits a one-line warning on stderr. Tests may install a sink to capture
/// warnings instead.
void warn(const std::string& message);

using WarningSink = void (*)(const std::string&);
WarningSink set_warning_sink(WarningSink sink);

struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Single-channel 2D or 3D intensity grid. The payload is a contiguous
/// float32 tensor of shape (d1, ..., dk) with k in {2, 3}; all values are
/// finite. Instances are values: every operation returns a new Image.
class Image {
public:
    Image() = default;
    explicit Image(torch::Tensor data, ValueRange range = {});

    /// Builds an image from a raw buffer laid out in C order.
    static Image from_vector(const std::vector<float>& values, const Shape& shape,
                             ValueRange range = {});

    const torch::Tensor& tensor() const { return data_; }
    ValueRange value_range() const { return range_; }
    int dims() const { return static_cast<int>(data_.dim()); }
    Shape shape() const { return Shape(data_.sizes().begin(), data_.sizes().end()); }
    int64_t numel() const { return data_.numel(); }
    bool empty() const { return !data_.defined(); }

    std::vector<float> to_vector() const;
    float at(std::initializer_list<int64_t> index) const;

private:
    torch::Tensor data_;
    ValueRange range_;
};

/// Non-negative, odd-sided kernel summing to one. The fixed forward operator
/// of the deconvolution problem. Each constructed kernel carries a process
/// unique id used to key cached spectra.
class PSFKernel {
public:
    PSFKernel() = default;
    /// Validates and stores `data`. Does not renormalize; see psf.hpp for the
    /// constructors that clean up measured kernels.
    explicit PSFKernel(torch::Tensor data);

    const torch::Tensor& tensor() const { return data_; }
    int dims() const { return static_cast<int>(data_.dim()); }
    Shape shape() const { return Shape(data_.sizes().begin(), data_.sizes().end()); }
    int64_t side(int axis) const { return data_.size(axis); }
    uint64_t id() const { return id_; }

    /// Kernel mirrored along every axis (the adjoint operator).
    PSFKernel flipped() const;

private:
    torch::Tensor data_;
    uint64_t id_ = 0;
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

/// Deterministic random stream. Equal seeds give equal sequences on the same
/// build. Not thread-safe: one owner at a time.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Independent child stream identified by a label, e.g. "degrade".
    SeededRng derive(std::string_view label) const;
    /// Independent child stream identified by integer coordinates, e.g.
    /// (step, slot). Same coordinates always give the same stream.
    SeededRng derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) const;

    double uniform();                       // [0, 1)
    double normal(double mean = 0.0, double stddev = 1.0);
    int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds
    int64_t poisson(double mean);
    uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Returns (standardized image, statistics). Throws "degenerate
/// standardization" when the image is constant.
std::pair<Image, NormStats> standardize(const Image& img);
NormStats compute_norm_stats(const torch::Tensor& data, ValueRange range);

Image destandardize(const Image& img, const NormStats& stats);
torch::Tensor destandardize(const torch::Tensor& data, const NormStats& stats);
torch::Tensor standardize_with(const torch::Tensor& data, const NormStats& stats);

/// Throws if any value is NaN or infinite.
void require_finite(const torch::Tensor& t, std::string_view what);

std::string shape_string(const Shape& shape);

}  // namespace siamdecon
