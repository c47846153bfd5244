#include "siamdecon/metrics.hpp"

#include <cmath>
#include <limits>

namespace siamdecon {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw Error(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
    }
}

constexpr int kSsimWindow = 7;
constexpr double kSsimSigma = 1.5;

torch::Tensor ssim_window(int dims) {
    auto r = torch::arange(-(kSsimWindow / 2), kSsimWindow / 2 + 1, torch::kFloat64);
    auto g = torch::exp(-(r * r) / (2 * kSsimSigma * kSsimSigma));
    g = g / g.sum();
    if (dims == 2) return (g.view({kSsimWindow, 1}) * g.view({1, kSsimWindow})).view({1, 1, kSsimWindow, kSsimWindow});
    auto w = g.view({kSsimWindow, 1, 1}) * g.view({1, kSsimWindow, 1}) * g.view({1, 1, kSsimWindow});
    return w.view({1, 1, kSsimWindow, kSsimWindow, kSsimWindow});
}

torch::Tensor local_mean(const torch::Tensor& x, const torch::Tensor& w, int dims) {
    return dims == 2 ? torch::conv2d(x, w) : torch::conv3d(x, w);
}

// Bin index of each value in [0, bins), spanning the tensor's own range.
// Returns nullopt for a constant tensor.
std::optional<torch::Tensor> bin_indices(const torch::Tensor& x, int bins) {
    auto d = x.to(torch::kFloat64).flatten();
    double lo = d.min().item<double>();
    double hi = d.max().item<double>();
    if (!(hi > lo)) return std::nullopt;
    auto idx = torch::floor((d - lo) / (hi - lo) * bins).to(torch::kInt64).clamp(0, bins - 1);
    return idx;
}

double mi_from_tensors(const torch::Tensor& a, const torch::Tensor& b, int bins) {
    if (bins < 2) throw Error("mutual_information: bins must be >= 2");
    auto ia = bin_indices(a, bins);
    auto ib = bin_indices(b, bins);
    if (!ia || !ib) return 0.0;
    const double n = static_cast<double>(ia->numel());
    auto joint = torch::bincount(*ia * bins + *ib, {}, static_cast<int64_t>(bins) * bins)
                     .to(torch::kFloat64)
                     .view({bins, bins}) /
                 n;
    auto pa = joint.sum(1, true);
    auto pb = joint.sum(0, true);
    auto nz = joint > 0;
    auto ratio = joint / (pa * pb);
    auto terms = torch::where(nz, joint * torch::log(torch::where(nz, ratio, torch::ones_like(ratio))),
                              torch::zeros_like(joint));
    return terms.sum().item<double>();
}

}  // namespace

double rmse(const Image& a, const Image& b) {
    require_same_shape(a, b, "rmse");
    auto diff = a.tensor().to(torch::kFloat64) - b.tensor().to(torch::kFloat64);
    return std::sqrt(diff.pow(2).mean().item<double>());
}

double psnr(const Image& a, const Image& b, double data_range) {
    if (!(data_range > 0)) throw Error("psnr: data range must be positive");
    double e = rmse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(data_range) - 20.0 * std::log10(e);
}

double ssim(const Image& a, const Image& b, double data_range) {
    require_same_shape(a, b, "ssim");
    for (auto d : a.shape()) {
        if (d < kSsimWindow) throw Error("ssim: image smaller than the 7-pixel window");
    }
    const int dims = a.dims();
    auto w = ssim_window(dims);
    auto x = a.tensor().to(torch::kFloat64).unsqueeze(0).unsqueeze(0);
    auto y = b.tensor().to(torch::kFloat64).unsqueeze(0).unsqueeze(0);
    const double c1 = std::pow(0.01 * data_range, 2);
    const double c2 = std::pow(0.03 * data_range, 2);

    auto mx = local_mean(x, w, dims);
    auto my = local_mean(y, w, dims);
    auto sxx = local_mean(x * x, w, dims) - mx * mx;
    auto syy = local_mean(y * y, w, dims) - my * my;
    auto sxy = local_mean(x * y, w, dims) - mx * my;
    auto num = (2 * mx * my + c1) * (2 * sxy + c2);
    auto den = (mx * mx + my * my + c1) * (sxx + syy + c2);
    return (num / den).mean().item<double>();
}

double mutual_information(const Image& a, const Image& b, int bins) {
    require_same_shape(a, b, "mutual_information");
    return mi_from_tensors(a.tensor(), b.tensor(), bins);
}

double histogram_entropy(const Image& a, int bins) {
    auto idx = bin_indices(a.tensor(), bins);
    if (!idx) return 0.0;
    auto p = torch::bincount(*idx, {}, bins).to(torch::kFloat64) / static_cast<double>(idx->numel());
    auto nz = p > 0;
    auto terms = torch::where(nz, -p * torch::log(torch::where(nz, p, torch::ones_like(p))), torch::zeros_like(p));
    return terms.sum().item<double>();
}

torch::Tensor log_spectrum(const Image& a) {
    auto x = a.tensor().to(torch::kFloat64);
    auto spectrum = torch::fft::fftshift(torch::fft::fftn(x));
    return torch::log1p(spectrum.abs());
}

double spectral_mutual_information(const Image& a, const Image& b, int bins) {
    require_same_shape(a, b, "spectral_mutual_information");
    return mi_from_tensors(log_spectrum(a), log_spectrum(b), bins);
}

std::optional<double> MetricRow::get(const std::string& column) const {
    for (const auto& [name, value] : values) {
        if (name == column) return value;
    }
    return std::nullopt;
}

void MetricRow::set(const std::string& column, double value) {
    for (auto& [name, v] : values) {
        if (name == column) {
            v = value;
            return;
        }
    }
    values.emplace_back(column, value);
}

bool higher_is_better(const std::string& column) { return column != "RMSE"; }

MetricRow evaluate(const Image& pred, const Image& clean, const std::string& method) {
    require_same_shape(pred, clean, "evaluate");
    MetricRow row;
    row.method = method;
    row.set("PSNR", std::min(psnr(pred, clean), kPsnrCap));
    row.set("SSIM", ssim(pred, clean));
    if (pred.dims() == 2) {
        row.set("MI", mutual_information(pred, clean));
        row.set("SMI", spectral_mutual_information(pred, clean));
    }
    row.set("RMSE", rmse(pred, clean));
    return row;
}

MetricRow evaluate(const std::vector<Image>& preds, const std::vector<Image>& cleans, const std::string& method) {
    if (preds.size() != cleans.size() || preds.empty()) {
        throw Error("evaluate: need equally many (>= 1) predictions and references");
    }
    MetricRow mean;
    mean.method = method;
    for (size_t i = 0; i < preds.size(); ++i) {
        auto row = evaluate(preds[i], cleans[i], method);
        for (const auto& [name, value] : row.values) {
            auto prev = mean.get(name).value_or(0.0);
            mean.set(name, prev + value / static_cast<double>(preds.size()));
        }
    }
    return mean;
}

}  // namespace siamdecon
