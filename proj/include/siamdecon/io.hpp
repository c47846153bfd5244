#pragma once

#include "siamdecon/core.hpp"

#include <filesystem>

namespace siamdecon::io {

/// Reads a single-channel 2D or 3D real array from `.npy` or `.tif/.tiff`.
/// Any real sample type is accepted and converted to float32. Multi-page
/// TIFFs are read as (pages, height, width).
torch::Tensor read_array(const std::filesystem::path& path);

/// Writes a float32 array; format chosen by extension (`.npy`, `.tif`,
/// `.tiff`). 3D arrays become multi-page TIFFs.
void write_array(const std::filesystem::path& path, const torch::Tensor& data);

Image read_image(const std::filesystem::path& path, ValueRange range = {});
void write_image(const std::filesystem::path& path, const Image& img);

// Format-specific entry points, exposed for tests.
torch::Tensor read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const torch::Tensor& data);
torch::Tensor read_tiff(const std::filesystem::path& path);
void write_tiff(const std::filesystem::path& path, const torch::Tensor& data);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace siamdecon::io
