// siamdecon command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

#include "siamdecon/baselines.hpp"
#include "siamdecon/experiment.hpp"
#include "siamdecon/io.hpp"
#include "siamdecon/metrics.hpp"
#include "siamdecon/phantom.hpp"
#include "siamdecon/psf.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace siamdecon;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Labels used to fan the top-level seed out per stage; they match the ones
// run_experiment uses so that partial pipelines reproduce a full run.
SeededRng stage_rng(uint64_t seed, const char* label) { return SeededRng(seed).derive(label); }

struct PsfOptions {
    std::string path;
    int side = 0;
    double sigma = 0;

    void add(CLI::App* app) {
        app->add_option("--psf", path, "PSF file (.tif/.npy); omit for a Gaussian stand-in");
        app->add_option("--psf-side", side, "Gaussian PSF side (default 17 in 2D, 9 in 3D)");
        app->add_option("--psf-sigma", sigma, "Gaussian PSF sigma (default 2.0 in 2D, 1.5 in 3D)");
    }

    PSFKernel load(int dims) const {
        if (!path.empty()) return load_psf(path);
        return gaussian_psf(dims, side > 0 ? side : (dims == 3 ? 9 : 17), sigma > 0 ? sigma : (dims == 3 ? 1.5 : 2.0));
    }
};

fs::path sidecar_path(const fs::path& output) {
    auto p = output;
    p += ".json";
    return p;
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(io::read_text(path), nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: cannot parse '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------- phantom

struct PhantomCmd {
    std::string kind = "texture2d";
    std::vector<int64_t> shape;
    int fibers = 10;
    uint64_t seed = 0;
    std::string output;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("phantom", "Generate a synthetic clean image");
        app->add_option("--kind", kind, "texture2d or microtubules")->check(CLI::IsMember({"texture2d", "microtubules"}));
        app->add_option("--shape", shape, "Image shape (default 256 256, or 64 96 96 for microtubules)");
        app->add_option("--fibers", fibers, "Number of fibers (microtubules)");
        app->add_option("--seed", seed, "Top-level seed");
        app->add_option("-o,--output", output, "Output .tif/.npy")->required();
        app->callback([this] { run(); });
    }

    void run() {
        auto rng = stage_rng(seed, "phantom");
        Image img;
        if (kind == "microtubules") {
            img = microtubules_phantom(shape.empty() ? Shape{64, 96, 96} : shape, fibers, rng);
        } else {
            img = texture_phantom_2d(shape.empty() ? Shape{256, 256} : shape, rng);
        }
        io::write_image(output, img);
        std::cout << "wrote " << output << " " << shape_string(img.shape()) << "\n";
    }
};

// ---------------------------------------------------------------- degrade

struct DegradeCmd {
    std::string input, output;
    PsfOptions psf;
    std::optional<double> alpha, sigma, sp;
    std::optional<int> bits;
    uint64_t seed = 0;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("degrade", "Blur, add noise and quantize a clean image");
        app->add_option("input", input, "Clean image")->required()->check(CLI::ExistingFile);
        app->add_option("-o,--output", output, "Degraded image (.tif/.npy)")->required();
        psf.add(app);
        app->add_option("--poisson-alpha", alpha, "Poisson scale (counts = x / alpha)");
        app->add_option("--gaussian-sigma", sigma, "Gaussian noise std");
        app->add_option("--sp-prob", sp, "Salt-and-pepper probability (2D only)");
        app->add_option("--quant-bits", bits, "Quantization bit depth");
        app->add_option("--seed", seed, "Top-level seed");
        app->callback([this] { run(); });
    }

    void run() {
        auto clean = io::read_image(input);
        auto cfg = DegradeConfig::defaults(clean.dims());
        if (alpha) cfg.poisson_alpha = *alpha;
        if (sigma) cfg.gaussian_sigma = *sigma;
        if (sp) cfg.sp_prob = *sp;
        if (bits) cfg.quant_bits = *bits;
        cfg.seed = stage_rng(seed, "degrade").seed();
        auto kernel = psf.load(clean.dims());
        auto out = degrade(clean, kernel, cfg);
        io::write_image(output, out);
        json side{{"input", input},
                  {"output", output},
                  {"seed", seed},
                  {"psf", psf.path.empty() ? json("gaussian") : json(psf.path)},
                  {"psf_shape", kernel.shape()},
                  {"degrade", to_json(cfg)},
                  {"psnr_vs_clean", psnr(out, clean)}};
        io::write_text(sidecar_path(output), side.dump(2) + "\n");
        std::cout << "wrote " << output << " (PSNR " << psnr(out, clean) << " dB)\n";
    }
};

// ---------------------------------------------------------------- train

struct TrainCmd {
    std::string input, config, out_dir = "train_out";
    PsfOptions psf;
    uint64_t seed = 0;
    std::optional<int> steps, batch, patch, base, depth, log_every, checkpoint_every;
    std::optional<double> lr, mask_fraction;
    std::optional<std::string> loss, skip, backend;
    bool resume = false, verbose = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("train", "Train a network on a single degraded image");
        app->add_option("input", input, "Degraded image")->required()->check(CLI::ExistingFile);
        psf.add(app);
        app->add_option("--config", config, "JSON file with train keys (or a 'train' section)")
            ->check(CLI::ExistingFile);
        app->add_option("--out-dir", out_dir, "Directory for checkpoint.pt and train_log.csv");
        app->add_option("--seed", seed, "Top-level seed");
        app->add_option("--steps", steps, "Total optimizer steps");
        app->add_option("--batch-size", batch);
        app->add_option("--patch-size", patch);
        app->add_option("--lr", lr, "Initial learning rate");
        app->add_option("--mask-fraction", mask_fraction);
        app->add_option("--loss", loss, "Loss preset")->check(CLI::IsMember({"noise2self", "noise2same", "noise2same_d"}));
        app->add_option("--base-features", base);
        app->add_option("--depth", depth, "Resolution levels");
        app->add_option("--skip", skip)->check(CLI::IsMember({"concat", "add"}));
        app->add_option("--backend", backend)->check(CLI::IsMember({"direct", "fft", "auto"}));
        app->add_option("--log-every", log_every);
        app->add_option("--checkpoint-every", checkpoint_every);
        app->add_flag("--resume", resume, "Continue from <out-dir>/checkpoint.pt");
        app->add_flag("-v,--verbose", verbose);
        app->callback([this] { run(); });
    }

    void run() {
        auto img = io::read_image(input);
        auto cfg = TrainConfig::defaults(img.dims());
        if (!config.empty()) {
            auto j = read_json_file(config);
            apply_train_section(j.contains("train") ? j.at("train") : j, cfg);
        }
        if (steps) cfg.total_steps = *steps;
        if (batch) cfg.batch_size = *batch;
        if (patch) cfg.patch_size = *patch;
        if (lr) cfg.lr0 = *lr;
        if (mask_fraction) cfg.mask_fraction = *mask_fraction;
        if (loss) cfg.loss = LossConfig::preset(*loss);
        if (base) cfg.model.base_features = *base;
        if (depth) cfg.model.depth = *depth;
        if (skip) cfg.model.skip_mode = parse_skip_mode(*skip);
        if (backend) cfg.backend = parse_backend(*backend);
        if (log_every) cfg.log_every = *log_every;
        if (checkpoint_every) cfg.checkpoint_every = *checkpoint_every;
        cfg.seed = stage_rng(seed, "train").seed();
        try {
            cfg.validate();
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }

        TrainOutputs outputs{out_dir, resume, verbose};
        auto result = train(img, psf.load(img.dims()), cfg, outputs);
        json side{{"input", input}, {"seed", seed}, {"train", to_json(cfg)}, {"train_s", result.train_seconds}};
        io::write_text(fs::path(out_dir) / "train_config.json", side.dump(2) + "\n");
        std::cout << "trained " << result.checkpoint.step << " steps in " << result.train_seconds << " s -> "
                  << (fs::path(out_dir) / "checkpoint.pt").string() << "\n";
    }
};

// ---------------------------------------------------------------- predict

struct PredictCmd {
    std::string checkpoint, input, output;
    std::optional<int> tile_size, overlap, context;
    std::optional<bool> tiles;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("predict", "Restore an image with a trained checkpoint");
        app->add_option("checkpoint", checkpoint, "checkpoint.pt")->required()->check(CLI::ExistingFile);
        app->add_option("input", input, "Degraded image")->required()->check(CLI::ExistingFile);
        app->add_option("-o,--output", output, "Restored image (.tif/.npy)")->required();
        app->add_option("--tile-size", tile_size);
        app->add_option("--overlap", overlap);
        app->add_option("--context", context, "Extra context per tile side; -1 = receptive radius");
        app->add_flag("--tiles,!--no-tiles", tiles, "Force tiling on or off");
        app->callback([this] { run(); });
    }

    void run() {
        auto ckpt = load_checkpoint(checkpoint);
        auto img = io::read_image(input);
        auto cfg = TileConfig::defaults(img.dims());
        if (tile_size) cfg.tile_size = *tile_size;
        if (overlap) cfg.overlap = *overlap;
        if (context) cfg.context = *context;
        if (tiles) cfg.enabled = *tiles;
        auto pred = predict(ckpt.model, img, ckpt.stats, cfg);
        io::write_image(output, pred.image);
        json side{{"checkpoint", checkpoint},
                  {"input", input},
                  {"output", output},
                  {"tiles", to_json(cfg)},
                  {"inference_ms", pred.milliseconds},
                  {"norm", {{"mean", ckpt.stats.mean}, {"std", ckpt.stats.std}}}};
        io::write_text(sidecar_path(output), side.dump(2) + "\n");
        std::cout << "wrote " << output << " in " << pred.milliseconds << " ms\n";
    }
};

// ---------------------------------------------------------------- lr

struct LrCmd {
    std::string input, output;
    PsfOptions psf;
    int iterations = 5;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("lr", "Richardson-Lucy deconvolution");
        app->add_option("input", input, "Degraded image")->required()->check(CLI::ExistingFile);
        app->add_option("-o,--output", output, "Restored image (.tif/.npy)")->required();
        psf.add(app);
        app->add_option("-n,--iterations", iterations)->check(CLI::PositiveNumber);
        app->callback([this] { run(); });
    }

    void run() {
        auto img = io::read_image(input);
        auto out = lucy_richardson(img, psf.load(img.dims()), iterations);
        io::write_image(output, out);
        std::cout << "wrote " << output << "\n";
    }
};

// ---------------------------------------------------------------- evaluate

struct EvaluateCmd {
    std::vector<std::string> preds;
    std::string clean, json_out, csv_out;
    std::vector<std::string> labels;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("evaluate", "Score restored images against a clean reference");
        app->add_option("--clean", clean, "Clean reference")->required()->check(CLI::ExistingFile);
        app->add_option("predictions", preds, "Images to score")->required()->check(CLI::ExistingFile);
        app->add_option("--label", labels, "Row labels (default: file stems)");
        app->add_option("--json", json_out, "Write the JSON report here");
        app->add_option("--csv", csv_out, "Write the CSV table here");
        app->callback([this] { run(); });
    }

    void run() {
        if (!labels.empty() && labels.size() != preds.size()) throw ConfigError("evaluate: one --label per prediction");
        auto ref = io::read_image(clean);
        auto report = make_report("evaluate", ref.dims(), 0);
        for (size_t i = 0; i < preds.size(); ++i) {
            auto label = labels.empty() ? fs::path(preds[i]).stem().string() : labels[i];
            add_report_row(report, evaluate(io::read_image(preds[i]), ref, label), std::nullopt, std::nullopt,
                           std::nullopt);
        }
        if (!json_out.empty()) io::write_text(json_out, report.dump(2) + "\n");
        if (!csv_out.empty()) io::write_text(csv_out, report_csv(report));
        std::cout << report_render(report);
    }
};

// ---------------------------------------------------------------- bench-conv

struct BenchCmd {
    std::vector<int64_t> shape{64, 64, 64};
    std::vector<int> kernels{9, 17, 31};
    int repeats = 5;
    uint64_t seed = 0;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("bench-conv", "Time direct vs FFT convolution, CSV on stdout");
        app->add_option("--shape", shape, "Image shape");
        app->add_option("--kernels", kernels, "Kernel sides (odd)");
        app->add_option("--repeats", repeats)->check(CLI::Range(3, 1000));
        app->add_option("--seed", seed);
        app->callback([this] { run(); });
    }

    void run() {
        std::cout << "shape,kernel,direct_ms,fft_ms,speedup\n";
        for (int k : kernels) {
            auto b = benchmark_conv(shape, k, repeats, seed);
            std::string s;
            for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
            std::cout << s << ',' << k << ',' << b.direct_ms << ',' << b.fft_ms << ',' << b.speedup << std::endl;
        }
    }
};

// ---------------------------------------------------------------- run

struct RunCmd {
    std::string config, output_dir;
    std::optional<uint64_t> seed;
    std::optional<int> steps;
    std::vector<std::string> methods;
    bool verbose = false;
    int exit_code = 0;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("run", "Degrade, train, predict and evaluate from one config");
        app->add_option("config", config, "Experiment JSON config")->required()->check(CLI::ExistingFile);
        app->add_option("--output-dir", output_dir, "Overrides output_dir and SIAMDECON_OUTPUT_DIR");
        app->add_option("--seed", seed, "Overrides the config seed");
        app->add_option("--steps", steps, "Overrides train.total_steps");
        app->add_option("--methods", methods, "Overrides the method list");
        app->add_flag("-v,--verbose", verbose);
        app->callback([this] { run(); });
    }

    void run() {
        auto j = read_json_file(config);
        if (seed) j["seed"] = *seed;
        if (!output_dir.empty()) j["output_dir"] = output_dir;
        if (steps) j["train"]["total_steps"] = *steps;
        if (!methods.empty()) j["methods"] = methods;
        if (verbose) j["verbose"] = true;
        auto cfg = parse_experiment_config(j);
        auto report = run_experiment(cfg);
        std::cout << report_render(report.json);
        exit_code = report.all_succeeded() ? 0 : 1;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised PSF-aware deconvolution of one image at a time"};
    app.require_subcommand(1);
    PhantomCmd phantom;
    DegradeCmd degrade_cmd;
    TrainCmd train_cmd;
    PredictCmd predict_cmd;
    LrCmd lr;
    EvaluateCmd evaluate_cmd;
    BenchCmd bench;
    RunCmd run;
    phantom.add(app);
    degrade_cmd.add(app);
    train_cmd.add(app);
    predict_cmd.add(app);
    lr.add(app);
    evaluate_cmd.add(app);
    bench.add(app);
    run.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return run.exit_code;
}
