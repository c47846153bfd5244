#pragma once

#include "siamdecon/core.hpp"

#include <optional>

namespace siamdecon {

/// PSNR reported for identical images in tables.
inline constexpr double kPsnrCap = 99.0;

double rmse(const Image& a, const Image& b);

/// 20 log10(range) - 20 log10(rmse). Returns +infinity for identical images.
double psnr(const Image& a, const Image& b, double data_range = 1.0);

/// Mean local SSIM over the valid region, Gaussian window of width 7 and
/// sigma 1.5 (a 3D window for volumes), C1 = (0.01 R)^2, C2 = (0.03 R)^2.
double ssim(const Image& a, const Image& b, double data_range = 1.0);

/// Mutual information (nats) of the joint intensity histogram, `bins`
/// equal-width bins spanning each image's own min..max. A constant image
/// has MI 0.
double mutual_information(const Image& a, const Image& b, int bins = 256);

/// Shannon entropy (nats) of the same single-image histogram used by
/// mutual_information.
double histogram_entropy(const Image& a, int bins = 256);

/// log(1 + |centered DFT|) of each image, then mutual_information.
double spectral_mutual_information(const Image& a, const Image& b, int bins = 256);

/// Log-magnitude spectrum used by spectral_mutual_information.
torch::Tensor log_spectrum(const Image& a);

/// One named row of a results table. Column order is the table order.
struct MetricRow {
    std::string method;
    std::vector<std::pair<std::string, double>> values;

    std::optional<double> get(const std::string& column) const;
    void set(const std::string& column, double value);
};

/// Whether larger is better for a metric column.
bool higher_is_better(const std::string& column);

/// PSNR, SSIM, RMSE for 3D; PSNR, SSIM, MI, SMI, RMSE for 2D. PSNR is capped
/// at kPsnrCap.
MetricRow evaluate(const Image& pred, const Image& clean, const std::string& method = "");

/// Per-image rows averaged column-wise (not pooled over pixels).
MetricRow evaluate(const std::vector<Image>& preds, const std::vector<Image>& cleans,
                   const std::string& method = "");

}  // namespace siamdecon
