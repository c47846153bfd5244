#include "siamdecon/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace siamdecon {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 normalized(Vec3 v) {
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 random_direction(SeededRng& rng) {
    for (;;) {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (n > 1e-6) return {v[0] / n, v[1] / n, v[2] / n};
    }
}

// Paints a soft-edged ball: full intensity inside `radius`, linear falloff
// over the next voxel.
void stamp_ball(float* vol, const Shape& shape, const Vec3& center, double radius, float intensity) {
    const int64_t reach = static_cast<int64_t>(std::ceil(radius + 1));
    std::array<int64_t, 3> c{static_cast<int64_t>(std::lround(center[0])),
                             static_cast<int64_t>(std::lround(center[1])),
                             static_cast<int64_t>(std::lround(center[2]))};
    for (int64_t z = c[0] - reach; z <= c[0] + reach; ++z) {
        if (z < 0 || z >= shape[0]) continue;
        for (int64_t y = c[1] - reach; y <= c[1] + reach; ++y) {
            if (y < 0 || y >= shape[1]) continue;
            for (int64_t x = c[2] - reach; x <= c[2] + reach; ++x) {
                if (x < 0 || x >= shape[2]) continue;
                double dz = z - center[0], dy = y - center[1], dx = x - center[2];
                double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
                double cover = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
                if (cover <= 0) continue;
                float v = static_cast<float>(intensity * cover);
                float& dst = vol[(z * shape[1] + y) * shape[2] + x];
                dst = std::max(dst, v);
            }
        }
    }
}

}  // namespace

Image microtubules_phantom(const Shape& shape, int n_fibers, SeededRng& rng) {
    if (shape.size() != 3) throw Error("microtubules_phantom: shape must be 3D");
    for (auto d : shape) {
        if (d < 32) throw Error("microtubules_phantom: every side must be >= 32");
    }
    if (n_fibers < 1) throw Error("microtubules_phantom: need at least one fiber");

    auto vol = torch::zeros(shape, torch::kFloat32);
    float* p = vol.data_ptr<float>();
    const double length = static_cast<double>(shape[0] + shape[1] + shape[2]);

    for (int f = 0; f < n_fibers; ++f) {
        Vec3 pos{rng.uniform() * (shape[0] - 1), rng.uniform() * (shape[1] - 1), rng.uniform() * (shape[2] - 1)};
        Vec3 dir = random_direction(rng);
        const double radius = 1.0 + rng.uniform();
        const float intensity = static_cast<float>(0.5 + 0.5 * rng.uniform());
        // Persistent random walk with half-voxel steps; bends stay gentle.
        for (double travelled = 0; travelled < length; travelled += 0.5) {
            stamp_ball(p, shape, pos, radius, intensity);
            Vec3 kick{rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.05)};
            dir = normalized({dir[0] + kick[0], dir[1] + kick[1], dir[2] + kick[2]});
            for (int a = 0; a < 3; ++a) {
                pos[a] += 0.5 * dir[a];
                const double hi = static_cast<double>(shape[a] - 1);
                if (pos[a] < 0) {
                    pos[a] = -pos[a];
                    dir[a] = -dir[a];
                } else if (pos[a] > hi) {
                    pos[a] = 2 * hi - pos[a];
                    dir[a] = -dir[a];
                }
            }
        }
    }
    return Image(vol.clamp(0, 1));
}

Image texture_phantom_2d(const Shape& shape, SeededRng& rng) {
    if (shape.size() != 2) throw Error("texture_phantom_2d: shape must be 2D");
    if (shape[0] < 64 || shape[1] < 64) throw Error("texture_phantom_2d: sides must be >= 64");
    const int64_t h = shape[0], w = shape[1];

    // Band-limited texture: white noise low-passed in the Fourier domain.
    auto noise = torch::empty({h, w}, torch::kFloat64);
    double* n = noise.data_ptr<double>();
    for (int64_t i = 0; i < h * w; ++i) n[i] = rng.normal();
    auto fy = torch::fft::fftfreq(h, torch::TensorOptions().dtype(torch::kFloat64)).view({h, 1});
    auto fx = torch::fft::fftfreq(w, torch::TensorOptions().dtype(torch::kFloat64)).view({1, w});
    const double cutoff = 0.04;
    auto lowpass = torch::exp(-(fy * fy + fx * fx) / (2 * cutoff * cutoff));
    auto texture = torch::real(torch::fft::ifftn(torch::fft::fftn(noise) * lowpass));
    texture = (texture - texture.min()) / (texture.max() - texture.min());
    auto img = 0.1 + 0.3 * texture;

    auto yy = torch::arange(h, torch::kFloat64).view({h, 1}).expand({h, w});
    auto xx = torch::arange(w, torch::kFloat64).view({1, w}).expand({h, w});

    // Flat-shaded discs and rectangles give sharp edges.
    const int n_shapes = 6 + static_cast<int>(rng.uniform_int(0, 4));
    for (int s = 0; s < n_shapes; ++s) {
        double cy = rng.uniform() * h, cx = rng.uniform() * w;
        double level = 0.15 + 0.35 * rng.uniform();
        torch::Tensor inside;
        if (rng.uniform() < 0.5) {
            double r = (0.04 + 0.08 * rng.uniform()) * std::min(h, w);
            inside = (yy - cy).pow(2) + (xx - cx).pow(2) < r * r;
        } else {
            double hy = (0.03 + 0.1 * rng.uniform()) * h, hx = (0.03 + 0.1 * rng.uniform()) * w;
            inside = ((yy - cy).abs() < hy).logical_and((xx - cx).abs() < hx);
        }
        img = img + inside.to(torch::kFloat64) * level;
    }

    // Thin bright curves, a few pixels wide.
    const int n_lines = 4;
    for (int l = 0; l < n_lines; ++l) {
        double cy = rng.uniform() * h, cx = rng.uniform() * w;
        double angle = rng.uniform() * std::numbers::pi;
        double amp = 0.1 * std::min(h, w) * rng.uniform();
        auto along = (xx - cx) * std::cos(angle) + (yy - cy) * std::sin(angle);
        auto across = -(xx - cx) * std::sin(angle) + (yy - cy) * std::cos(angle);
        auto dist = (across - amp * torch::sin(along / (0.1 * w))).abs();
        img = img + 0.3 * torch::clamp(1.5 - dist, 0.0, 1.0);
    }

    // Point sources.
    auto out = img.clamp(0, 1).contiguous();
    double* o = out.data_ptr<double>();
    const int n_points = static_cast<int>(h * w / 2048);
    for (int i = 0; i < n_points; ++i) {
        int64_t y = rng.uniform_int(0, h - 1), x = rng.uniform_int(0, w - 1);
        o[y * w + x] = 0.8 + 0.2 * rng.uniform();
    }
    return Image(out.clamp(0, 1).to(torch::kFloat32));
}

}  // namespace siamdecon
