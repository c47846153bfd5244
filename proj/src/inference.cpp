#include "siamdecon/inference.hpp"

#include <chrono>

namespace siamdecon {

namespace F = torch::nn::functional;

TileConfig TileConfig::defaults(int dims) {
    TileConfig t;
    t.enabled = dims == 3;
    return t;
}

void TileConfig::validate(int64_t size_multiple) const {
    if (overlap < 0 || 2 * overlap >= tile_size) throw Error("tiles: need 0 <= 2 * overlap < tile_size");
    if (context < -1) throw Error("tiles: context must be >= 0, or -1 for automatic");
    if (tile_size % size_multiple != 0) {
        throw Error("tiles: tile_size must be divisible by " + std::to_string(size_multiple));
    }
}

torch::Tensor pyramid_weights(const Shape& shape) {
    torch::Tensor w;
    for (size_t a = 0; a < shape.size(); ++a) {
        const int64_t n = shape[a];
        if (n < 2) throw Error("pyramid_weights: every side must be >= 2");
        auto i = torch::arange(n, torch::kFloat64);
        auto tent = torch::minimum(i + 1, n - i);
        tent = tent / tent.max();
        Shape view(shape.size(), 1);
        view[a] = n;
        w = a == 0 ? tent.view(view) : w * tent.view(view);
    }
    return w.to(torch::kFloat32);
}

namespace {

int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

// Reflect-pads the trailing spatial axes of a (1, 1, spatial...) tensor at
// the high end, in as many rounds as needed for large pads.
torch::Tensor pad_end(torch::Tensor x, const Shape& target) {
    const int k = static_cast<int>(target.size());
    for (;;) {
        std::vector<int64_t> pads;
        bool done = true;
        for (int a = k - 1; a >= 0; --a) {
            int64_t cur = x.size(a + 2);
            int64_t need = target[a] - cur;
            int64_t step = std::min<int64_t>(need, cur - 1);
            if (need > 0) done = false;
            pads.push_back(0);
            pads.push_back(std::max<int64_t>(step, 0));
        }
        if (done) return x;
        x = F::pad(x, F::PadFuncOptions(pads).mode(torch::kReflect));
    }
}

torch::Tensor crop_to(torch::Tensor x, const Shape& shape) {
    for (size_t a = 0; a < shape.size(); ++a) x = x.narrow(static_cast<int64_t>(a) + 2, 0, shape[a]);
    return x;
}

Prediction finish(const torch::Tensor& out_std, const Image& img, const NormStats& stats,
                  std::chrono::steady_clock::time_point t0) {
    Prediction p;
    p.raw = destandardize(out_std.to(torch::kFloat64), stats).to(torch::kFloat32).contiguous();
    p.image = Image(p.raw.clamp(0, 1), img.value_range());
    p.milliseconds = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return p;
}

}  // namespace

Prediction predict(const Network& net, int64_t size_multiple, const Image& img, const NormStats& stats,
                   const TileConfig& tiles, int64_t auto_context) {
    auto t0 = std::chrono::steady_clock::now();
    torch::NoGradGuard no_grad;
    const Shape shape = img.shape();
    const int k = img.dims();
    auto x = standardize_with(img.tensor(), stats).to(torch::kFloat32).unsqueeze(0).unsqueeze(0);

    Shape tile(k), count(k), padded(k);
    bool single = true;
    if (tiles.enabled) {
        tiles.validate(size_multiple);
        const int64_t stride = tiles.tile_size - tiles.overlap;
        for (int a = 0; a < k; ++a) {
            if (shape[a] <= tiles.tile_size) {
                tile[a] = std::min<int64_t>(tiles.tile_size, round_up(shape[a], size_multiple));
                count[a] = 1;
            } else {
                tile[a] = tiles.tile_size;
                count[a] = (shape[a] - tiles.tile_size + stride - 1) / stride + 1;
                single = false;
            }
            padded[a] = (count[a] - 1) * stride + tile[a];
        }
    }

    if (single) {
        Shape target(k);
        for (int a = 0; a < k; ++a) target[a] = round_up(shape[a], size_multiple);
        auto y = crop_to(net(pad_end(x, target)), shape);
        return finish(y.squeeze(0).squeeze(0), img, stats, t0);
    }

    const int64_t stride = tiles.tile_size - tiles.overlap;
    const int64_t context = tiles.context < 0 ? auto_context : tiles.context;
    auto xp = pad_end(x, padded);
    auto accum = torch::zeros(padded, torch::kFloat64);
    auto wsum = torch::zeros(padded, torch::kFloat64);
    auto weights = pyramid_weights(tile).to(torch::kFloat64);

    Shape index(k, 0);
    for (;;) {
        auto in = xp;
        auto acc_view = accum;
        auto w_view = wsum;
        Shape lo(k);
        for (int a = 0; a < k; ++a) {
            const int64_t start = index[a] * stride;
            lo[a] = std::min(context, start) / size_multiple * size_multiple;
            int64_t hi = std::min(context, padded[a] - start - tile[a]) / size_multiple * size_multiple;
            in = in.narrow(a + 2, start - lo[a], tile[a] + lo[a] + hi);
            acc_view = acc_view.narrow(a, start, tile[a]);
            w_view = w_view.narrow(a, start, tile[a]);
        }
        auto y = net(in.contiguous()).squeeze(0).squeeze(0);
        for (int a = 0; a < k; ++a) y = y.narrow(a, lo[a], tile[a]);
        y = y.to(torch::kFloat64);
        acc_view.add_(y * weights);
        w_view.add_(weights);

        int a = k - 1;
        while (a >= 0 && ++index[a] == count[a]) index[a--] = 0;
        if (a < 0) break;
    }
    auto out = accum / wsum;
    for (int a = 0; a < k; ++a) out = out.narrow(a, 0, shape[a]);
    return finish(out, img, stats, t0);
}

Prediction predict(UNet model, const Image& img, const NormStats& stats, const TileConfig& tiles) {
    if (img.dims() != model->config().dims) {
        throw Error("predict: model expects " + std::to_string(model->config().dims) + "D input, got " +
                    std::to_string(img.dims()) + "D");
    }
    model->eval();
    return predict([&](const torch::Tensor& t) { return model->forward(t); }, model->config().size_multiple(), img,
                   stats, tiles, model->config().receptive_radius());
}

}  // namespace siamdecon
