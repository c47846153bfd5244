#include "siamdecon/baselines.hpp"
#include "siamdecon/experiment.hpp"
#include "siamdecon/io.hpp"
#include "siamdecon/phantom.hpp"
#include "siamdecon/psf.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace siamdecon;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Arrays cross the boundary by copy in both directions.
torch::Tensor to_tensor(const FloatArray& a) {
    std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

py::array_t<float> to_array(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat32).contiguous();
    py::array_t<float> out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
    std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * c.numel());
    return out;
}

Image to_image(const FloatArray& a) { return Image(to_tensor(a)); }
PSFKernel to_psf(const FloatArray& a) { return make_psf(to_tensor(a)); }

py::dict row_to_dict(const MetricRow& row) {
    py::dict d;
    for (const auto& [k, v] : row.values) d[py::str(k)] = v;
    return d;
}

TileConfig tile_config(int dims, std::optional<bool> enabled, int tile_size, int overlap, int context) {
    auto t = TileConfig::defaults(dims);
    if (enabled) t.enabled = *enabled;
    t.tile_size = tile_size;
    t.overlap = overlap;
    t.context = context;
    return t;
}

// A trained network together with the statistics it was trained under.
struct Model {
    Checkpoint checkpoint;
    double train_seconds = 0;

    py::array_t<float> predict(const FloatArray& img, std::optional<bool> tiles, int tile_size, int overlap,
                               int context) const {
        auto image = to_image(img);
        auto cfg = tile_config(image.dims(), tiles, tile_size, overlap, context);
        return to_array(siamdecon::predict(checkpoint.model, image, checkpoint.stats, cfg).image.tensor());
    }
};

}  // namespace

PYBIND11_MODULE(_siamdecon, m) {
    m.doc() = "Self-supervised PSF-aware deconvolution (C++ core).";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    m.def("gaussian_psf", [](int dims, int side, double sigma) { return to_array(gaussian_psf(dims, side, sigma).tensor()); },
          py::arg("dims"), py::arg("side"), py::arg("sigma"));
    m.def("normalize_psf", [](const FloatArray& k) { return to_array(to_psf(k).tensor()); }, py::arg("kernel"),
          "Clip negatives and renormalize a measured kernel.");

    m.def(
        "convolve",
        [](const FloatArray& x, const FloatArray& k, const std::string& backend, const std::string& padding) {
            if (padding != "reflect" && padding != "zero") throw Error("padding must be 'reflect' or 'zero'");
            auto pad = padding == "reflect" ? Padding::Reflect : Padding::Zero;
            return to_array(convolve(to_tensor(x), to_psf(k), parse_backend(backend), pad));
        },
        py::arg("x"), py::arg("kernel"), py::arg("backend") = "auto", py::arg("padding") = "reflect");

    m.def(
        "texture_phantom",
        [](const Shape& shape, uint64_t seed) {
            SeededRng rng(seed);
            return to_array(texture_phantom_2d(shape, rng).tensor());
        },
        py::arg("shape") = Shape{256, 256}, py::arg("seed") = 0);
    m.def(
        "microtubules_phantom",
        [](const Shape& shape, int n_fibers, uint64_t seed) {
            SeededRng rng(seed);
            return to_array(microtubules_phantom(shape, n_fibers, rng).tensor());
        },
        py::arg("shape") = Shape{64, 96, 96}, py::arg("n_fibers") = 10, py::arg("seed") = 0);

    m.def(
        "degrade",
        [](const FloatArray& img, const FloatArray& psf, std::optional<double> poisson_alpha,
           std::optional<double> gaussian_sigma, std::optional<double> sp_prob, std::optional<int> quant_bits,
           uint64_t seed) {
            auto image = to_image(img);
            auto cfg = DegradeConfig::defaults(image.dims());
            if (poisson_alpha) cfg.poisson_alpha = *poisson_alpha;
            if (gaussian_sigma) cfg.gaussian_sigma = *gaussian_sigma;
            if (sp_prob) cfg.sp_prob = *sp_prob;
            if (quant_bits) cfg.quant_bits = *quant_bits;
            cfg.seed = seed;
            return to_array(degrade(image, to_psf(psf), cfg).tensor());
        },
        py::arg("image"), py::arg("psf"), py::arg("poisson_alpha") = py::none(),
        py::arg("gaussian_sigma") = py::none(), py::arg("sp_prob") = py::none(), py::arg("quant_bits") = py::none(),
        py::arg("seed") = 0);

    m.def(
        "lucy_richardson",
        [](const FloatArray& y, const FloatArray& psf, int n) {
            return to_array(lucy_richardson(to_image(y), to_psf(psf), n).tensor());
        },
        py::arg("observed"), py::arg("psf"), py::arg("iterations"));

    m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(to_image(a), to_image(b)); });
    m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(to_image(a), to_image(b)); });
    m.def("rmse", [](const FloatArray& a, const FloatArray& b) { return rmse(to_image(a), to_image(b)); });
    m.def("mutual_information",
          [](const FloatArray& a, const FloatArray& b) { return mutual_information(to_image(a), to_image(b)); });
    m.def("spectral_mutual_information", [](const FloatArray& a, const FloatArray& b) {
        return spectral_mutual_information(to_image(a), to_image(b));
    });
    m.def(
        "evaluate", [](const FloatArray& pred, const FloatArray& clean) { return row_to_dict(evaluate(to_image(pred), to_image(clean))); },
        py::arg("prediction"), py::arg("clean"));

    m.def("read_image", [](const std::filesystem::path& p) { return to_array(io::read_image(p).tensor()); });
    m.def("write_image", [](const std::filesystem::path& p, const FloatArray& a) { io::write_image(p, to_image(a)); });

    py::class_<Model>(m, "Model")
        .def_property_readonly("step", [](const Model& mdl) { return mdl.checkpoint.step; })
        .def_property_readonly("train_seconds", [](const Model& mdl) { return mdl.train_seconds; })
        .def_property_readonly("norm", [](const Model& mdl) {
            return py::make_tuple(mdl.checkpoint.stats.mean, mdl.checkpoint.stats.std);
        })
        .def("predict", &Model::predict, py::arg("image"), py::arg("tiles") = py::none(), py::arg("tile_size") = 128,
             py::arg("overlap") = 32, py::arg("context") = -1)
        .def("save", [](const Model& mdl, const std::filesystem::path& p) { save_checkpoint(p, mdl.checkpoint); });

    m.def("load_model", [](const std::filesystem::path& p) { return Model{load_checkpoint(p), 0.0}; });

    // `config` is the JSON text of a "train" section.
    m.def(
        "train",
        [](const FloatArray& img, const FloatArray& psf, const std::string& config, uint64_t seed,
           const std::filesystem::path& output_dir) {
            auto image = to_image(img);
            auto cfg = TrainConfig::defaults(image.dims());
            apply_train_section(nlohmann::json::parse(config, nullptr, true, true), cfg);
            cfg.seed = seed;
            TrainOutputs outputs;
            outputs.directory = output_dir;
            TrainResult result;
            {
                py::gil_scoped_release release;
                result = train(image, to_psf(psf), cfg, outputs);
            }
            return Model{result.checkpoint, result.train_seconds};
        },
        py::arg("image"), py::arg("psf"), py::arg("config") = "{}", py::arg("seed") = 0,
        py::arg("output_dir") = std::filesystem::path());

    // Returns the report as JSON text; the Python wrapper decodes it.
    m.def(
        "run_experiment_json",
        [](const std::string& config) {
            auto cfg = parse_experiment_config(nlohmann::json::parse(config, nullptr, true, true));
            py::gil_scoped_release release;
            return run_experiment(cfg).json.dump();
        },
        py::arg("config"));
    m.def("report_render", [](const std::string& report) { return report_render(nlohmann::json::parse(report)); });
}
