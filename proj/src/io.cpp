#include "siamdecon/io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace siamdecon::io {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

torch::ScalarType npy_dtype(const std::string& descr) {
    if (descr.size() < 3) throw Error("npy: unsupported dtype '" + descr + "'");
    char order = descr[0];
    if (order == '>') throw Error("npy: big-endian arrays are not supported");
    std::string kind = descr.substr(1);
    if (kind == "f4") return torch::kFloat32;
    if (kind == "f8") return torch::kFloat64;
    if (kind == "f2") return torch::kFloat16;
    if (kind == "u1") return torch::kUInt8;
    if (kind == "i1") return torch::kInt8;
    if (kind == "i2") return torch::kInt16;
    if (kind == "u2") return torch::kUInt16;
    if (kind == "i4") return torch::kInt32;
    if (kind == "u4") return torch::kUInt32;
    if (kind == "i8") return torch::kInt64;
    if (kind == "b1") return torch::kBool;
    throw Error("npy: unsupported dtype '" + descr + "'");
}

}  // namespace

torch::Tensor read_npy(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
        throw Error("npy: '" + path.string() + "' is not an NPY file");
    }
    unsigned char version[2];
    in.read(reinterpret_cast<char*>(version), 2);
    uint32_t header_len = 0;
    if (version[0] == 1) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        header_len = b[0] | (b[1] << 8);
    } else {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw Error("npy: truncated header in '" + path.string() + "'");

    std::smatch m;
    if (!std::regex_search(header, m, std::regex("'descr'\\s*:\\s*'([^']+)'"))) {
        throw Error("npy: missing descr");
    }
    auto dtype = npy_dtype(m[1]);
    if (std::regex_search(header, m, std::regex("'fortran_order'\\s*:\\s*True"))) {
        throw Error("npy: Fortran-ordered arrays are not supported");
    }
    if (!std::regex_search(header, m, std::regex("'shape'\\s*:\\s*\\(([^)]*)\\)"))) {
        throw Error("npy: missing shape");
    }
    Shape shape;
    std::string dims = m[1];
    std::regex num("\\d+");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it) {
        shape.push_back(std::stoll(it->str()));
    }

    auto out = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    auto nbytes = static_cast<std::streamsize>(out.numel() * out.element_size());
    in.read(static_cast<char*>(out.data_ptr()), nbytes);
    if (in.gcount() != nbytes) throw Error("npy: truncated data in '" + path.string() + "'");
    return out.to(torch::kFloat32);
}

void write_npy(const fs::path& path, const torch::Tensor& data) {
    auto t = data.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    std::ostringstream dict;
    dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (int64_t i = 0; i < t.dim(); ++i) dict << t.size(i) << (t.dim() == 1 || i + 1 < t.dim() ? ", " : "");
    dict << "), }";
    std::string header = dict.str();
    // magic(6) + version(2) + len(2) + header + '\n' padded to 64 bytes
    size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write("\x93NUMPY\x01\x00", 8);
    uint16_t len = static_cast<uint16_t>(header.size());
    char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
    out.write(lb, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * 4));
}

namespace {

struct TiffCloser {
    void operator()(TIFF* t) const {
        if (t) TIFFClose(t);
    }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

torch::ScalarType tiff_dtype(uint16_t format, uint16_t bits) {
    if (format == SAMPLEFORMAT_IEEEFP) {
        if (bits == 32) return torch::kFloat32;
        if (bits == 64) return torch::kFloat64;
    } else if (format == SAMPLEFORMAT_INT) {
        if (bits == 8) return torch::kInt8;
        if (bits == 16) return torch::kInt16;
        if (bits == 32) return torch::kInt32;
    } else {
        if (bits == 8) return torch::kUInt8;
        if (bits == 16) return torch::kUInt16;
        if (bits == 32) return torch::kUInt32;
    }
    throw Error("tiff: unsupported sample format/bit depth");
}

}  // namespace

torch::Tensor read_tiff(const fs::path& path) {
    TIFFSetWarningHandler(nullptr);
    TiffHandle tif(TIFFOpen(path.c_str(), "r"));
    if (!tif) throw Error("cannot open '" + path.string() + "'");

    std::vector<torch::Tensor> pages;
    do {
        uint32_t width = 0, height = 0;
        uint16_t spp = 1, bits = 8, format = SAMPLEFORMAT_UINT;
        TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
        TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
        if (spp != 1) throw Error("tiff: multichannel images are not supported");
        if (TIFFIsTiled(tif.get())) throw Error("tiff: tiled TIFF layout is not supported");

        auto dtype = tiff_dtype(format, bits);
        auto page = torch::empty({height, width}, torch::TensorOptions().dtype(dtype));
        auto row_bytes = static_cast<size_t>(width) * (bits / 8);
        if (static_cast<size_t>(TIFFScanlineSize(tif.get())) != row_bytes) {
            throw Error("tiff: unexpected scanline size");
        }
        auto* base = static_cast<char*>(page.data_ptr());
        for (uint32_t row = 0; row < height; ++row) {
            if (TIFFReadScanline(tif.get(), base + row * row_bytes, row) < 0) {
                throw Error("tiff: read error in '" + path.string() + "'");
            }
        }
        pages.push_back(page.to(torch::kFloat32));
    } while (TIFFReadDirectory(tif.get()));

    if (pages.size() == 1) return pages.front();
    return torch::stack(pages);
}

void write_tiff(const fs::path& path, const torch::Tensor& data) {
    auto t = data.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    if (t.dim() == 2) t = t.unsqueeze(0);
    if (t.dim() != 3) throw Error("tiff: only 2D or 3D arrays can be written");
    TiffHandle tif(TIFFOpen(path.c_str(), "w"));
    if (!tif) throw Error("cannot write '" + path.string() + "'");
    auto depth = t.size(0);
    auto height = static_cast<uint32_t>(t.size(1));
    auto width = static_cast<uint32_t>(t.size(2));
    for (int64_t z = 0; z < depth; ++z) {
        TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, width);
        TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, height);
        TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
        TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, 32);
        TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
        TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
        TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
        TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, height);
        if (depth > 1) {
            TIFFSetField(tif.get(), TIFFTAG_SUBFILETYPE, FILETYPE_PAGE);
            TIFFSetField(tif.get(), TIFFTAG_PAGENUMBER, static_cast<uint16_t>(z), static_cast<uint16_t>(depth));
        }
        auto slice = t[z];
        auto* base = static_cast<char*>(slice.data_ptr());
        for (uint32_t row = 0; row < height; ++row) {
            if (TIFFWriteScanline(tif.get(), base + static_cast<size_t>(row) * width * 4, row, 0) < 0) {
                throw Error("tiff: write error in '" + path.string() + "'");
            }
        }
        TIFFWriteDirectory(tif.get());
    }
}

torch::Tensor read_array(const fs::path& path) {
    if (!fs::exists(path)) throw Error("cannot open '" + path.string() + "': no such file");
    auto ext = lower_ext(path);
    if (ext == ".npy") return read_npy(path);
    if (ext == ".tif" || ext == ".tiff") return read_tiff(path);
    throw Error("unsupported array format '" + ext + "' (expected .npy, .tif or .tiff)");
}

void write_array(const fs::path& path, const torch::Tensor& data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto ext = lower_ext(path);
    if (ext == ".npy") return write_npy(path, data);
    if (ext == ".tif" || ext == ".tiff") return write_tiff(path, data);
    throw Error("unsupported array format '" + ext + "' (expected .npy, .tif or .tiff)");
}

Image read_image(const fs::path& path, ValueRange range) {
    auto t = read_array(path);
    if (t.dim() != 2 && t.dim() != 3) {
        throw Error("image file '" + path.string() + "' must hold a 2D or 3D single-channel array");
    }
    return Image(t, range);
}

void write_image(const fs::path& path, const Image& img) { write_array(path, img.tensor()); }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace siamdecon::io
