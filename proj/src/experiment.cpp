#include "siamdecon/experiment.hpp"

#include "siamdecon/baselines.hpp"
#include "siamdecon/io.hpp"
#include "siamdecon/metrics.hpp"
#include "siamdecon/phantom.hpp"
#include "siamdecon/psf.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <iostream>
#include <set>
#include <sstream>

namespace siamdecon {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
    if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) {
            throw ConfigError("config: unknown key '" + key + "' in section '" + section + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + section + "." + key + "'");
    }
}

Shape read_shape(const json& j, const std::string& where) {
    try {
        auto s = j.get<Shape>();
        if (s.size() != 2 && s.size() != 3) throw ConfigError("config: '" + where + "' must have 2 or 3 entries");
        return s;
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + where + "'");
    }
}

std::string slug(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

}  // namespace

// ---------------------------------------------------------------- sections

LossConfig parse_loss_section(const json& j) {
    check_keys(j,
               {"preset", "lambda_bsp", "lambda_rec", "lambda_inv", "lambda_inv_d", "lambda_bound", "lambda_bound_d",
                "bound_min", "bound_max"},
               "loss");
    LossConfig cfg = LossConfig::noise2same_d();
    if (j.contains("preset")) {
        try {
            cfg = LossConfig::preset(j.at("preset").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        } catch (const json::exception&) {
            throw ConfigError("config: bad value for 'loss.preset'");
        }
    }
    read(j, "lambda_bsp", cfg.lambda_bsp, "loss");
    read(j, "lambda_rec", cfg.lambda_rec, "loss");
    read(j, "lambda_inv", cfg.lambda_inv, "loss");
    read(j, "lambda_inv_d", cfg.lambda_inv_d, "loss");
    read(j, "lambda_bound", cfg.lambda_bound, "loss");
    read(j, "lambda_bound_d", cfg.lambda_bound_d, "loss");
    read(j, "bound_min", cfg.bound_min, "loss");
    read(j, "bound_max", cfg.bound_max, "loss");
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

void apply_train_section(const json& j, TrainConfig& cfg) {
    check_keys(j,
               {"dims", "patch_size", "batch_size", "total_steps", "lr0", "lr_decay", "lr_decay_every", "mask_fraction",
                "mask_sigma", "mask_mode", "backend", "seed", "log_every", "checkpoint_every", "model", "loss"},
               "train");
    if (j.contains("dims")) {
        int dims = 0;
        read(j, "dims", dims, "train");
        if (dims != cfg.dims) {
            throw ConfigError("config: train.dims is " + std::to_string(dims) + " but the image has " +
                              std::to_string(cfg.dims) + " dimensions");
        }
    }
    read(j, "seed", cfg.seed, "train");
    read(j, "patch_size", cfg.patch_size, "train");
    read(j, "batch_size", cfg.batch_size, "train");
    read(j, "total_steps", cfg.total_steps, "train");
    read(j, "lr0", cfg.lr0, "train");
    read(j, "lr_decay", cfg.lr_decay, "train");
    read(j, "lr_decay_every", cfg.lr_decay_every, "train");
    read(j, "mask_fraction", cfg.mask_fraction, "train");
    read(j, "mask_sigma", cfg.mask_sigma, "train");
    read(j, "log_every", cfg.log_every, "train");
    read(j, "checkpoint_every", cfg.checkpoint_every, "train");
    if (j.contains("mask_mode")) {
        std::string mode;
        read(j, "mask_mode", mode, "train");
        if (mode == "additive") {
            cfg.mask_mode = MaskMode::Additive;
        } else if (mode == "replace") {
            cfg.mask_mode = MaskMode::Replace;
        } else {
            throw ConfigError("config: train.mask_mode must be 'additive' or 'replace'");
        }
    }
    if (j.contains("backend")) {
        std::string name;
        read(j, "backend", name, "train");
        try {
            cfg.backend = parse_backend(name);
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"depth", "base_features", "skip_mode"}, "train.model");
        read(m, "depth", cfg.model.depth, "train.model");
        read(m, "base_features", cfg.model.base_features, "train.model");
        if (m.contains("skip_mode")) {
            std::string mode;
            read(m, "skip_mode", mode, "train.model");
            try {
                cfg.model.skip_mode = parse_skip_mode(mode);
            } catch (const Error& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
        }
    }
    if (j.contains("loss")) cfg.loss = parse_loss_section(j.at("loss"));
}

void apply_degrade_section(const json& j, DegradeConfig& cfg) {
    check_keys(j, {"poisson_alpha", "gaussian_sigma", "sp_prob", "quant_bits", "seed"}, "degrade");
    read(j, "poisson_alpha", cfg.poisson_alpha, "degrade");
    read(j, "gaussian_sigma", cfg.gaussian_sigma, "degrade");
    read(j, "sp_prob", cfg.sp_prob, "degrade");
    read(j, "quant_bits", cfg.quant_bits, "degrade");
    read(j, "seed", cfg.seed, "degrade");
    if (cfg.poisson_alpha < 0 || cfg.gaussian_sigma < 0 || cfg.sp_prob < 0 || cfg.sp_prob > 1 || cfg.quant_bits < 1) {
        throw ConfigError("config: degrade parameters out of range");
    }
}

void apply_tiles_section(const json& j, TileConfig& cfg) {
    check_keys(j, {"tile_size", "overlap", "enabled", "context"}, "tiles");
    read(j, "context", cfg.context, "tiles");
    read(j, "tile_size", cfg.tile_size, "tiles");
    read(j, "overlap", cfg.overlap, "tiles");
    read(j, "enabled", cfg.enabled, "tiles");
}

json to_json(const DegradeConfig& c) {
    return {{"poisson_alpha", c.poisson_alpha},
            {"gaussian_sigma", c.gaussian_sigma},
            {"sp_prob", c.sp_prob},
            {"quant_bits", c.quant_bits},
            {"seed", c.seed}};
}

json to_json(const LossConfig& c) {
    return {{"lambda_bsp", c.lambda_bsp},     {"lambda_rec", c.lambda_rec},         {"lambda_inv", c.lambda_inv},
            {"lambda_inv_d", c.lambda_inv_d}, {"lambda_bound", c.lambda_bound},     {"lambda_bound_d", c.lambda_bound_d},
            {"bound_min", c.bound_min},       {"bound_max", c.bound_max}};
}

json to_json(const TrainConfig& c) {
    return {{"dims", c.dims},
            {"patch_size", c.patch_size},
            {"batch_size", c.batch_size},
            {"total_steps", c.total_steps},
            {"lr0", c.lr0},
            {"lr_decay", c.lr_decay},
            {"lr_decay_every", c.lr_decay_every},
            {"mask_fraction", c.mask_fraction},
            {"mask_sigma", c.mask_sigma},
            {"mask_mode", c.mask_mode == MaskMode::Additive ? "additive" : "replace"},
            {"backend", to_string(c.backend)},
            {"seed", c.seed},
            {"log_every", c.log_every},
            {"checkpoint_every", c.checkpoint_every},
            {"model",
             {{"depth", c.model.depth}, {"base_features", c.model.base_features}, {"skip_mode", to_string(c.model.skip_mode)}}},
            {"loss", to_json(c.loss)}};
}

json to_json(const TileConfig& c) {
    return {{"tile_size", c.tile_size}, {"overlap", c.overlap}, {"enabled", c.enabled}, {"context", c.context}};
}

// ---------------------------------------------------------------- config

MethodSpec MethodSpec::parse(const std::string& text) {
    MethodSpec m;
    if (text == "input") {
        m.kind = Kind::Input;
        m.label = "input";
        return m;
    }
    if (text.rfind("lr:", 0) == 0) {
        m.kind = Kind::LucyRichardson;
        try {
            size_t used = 0;
            m.iterations = std::stoi(text.substr(3), &used);
            if (used != text.size() - 3) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("config: bad method '" + text + "' (expected lr:<iterations>)");
        }
        if (m.iterations < 1) throw ConfigError("config: LR iterations must be >= 1");
        m.label = "LR n=" + std::to_string(m.iterations);
        return m;
    }
    if (text == "ours" || text.rfind("ours:", 0) == 0) {
        m.kind = Kind::Network;
        if (text == "ours") {
            m.label = "ours";
        } else {
            auto preset = text.substr(5);
            try {
                m.loss = LossConfig::preset(preset);
            } catch (const Error& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
            m.label = "ours (" + preset + ")";
        }
        return m;
    }
    throw ConfigError("config: unknown method '" + text + "' (expected input, lr:<n>, ours or ours:<preset>)");
}

ExperimentConfig parse_experiment_config(const json& j) {
    check_keys(j, {"name", "seed", "output_dir", "image", "phantom", "psf", "degrade", "train", "tiles", "methods",
                   "save_images", "verbose"},
               "root");
    ExperimentConfig cfg;
    read(j, "name", cfg.name, "root");
    read(j, "seed", cfg.seed, "root");
    read(j, "save_images", cfg.save_images, "root");
    read(j, "verbose", cfg.verbose, "root");
    if (j.contains("output_dir")) {
        std::string dir;
        read(j, "output_dir", dir, "root");
        cfg.output_dir = dir;
    }

    int dims = 2;
    if (j.contains("image") && j.contains("phantom")) {
        throw ConfigError("config: give either 'image' or 'phantom', not both");
    }
    if (j.contains("image")) {
        std::string path;
        read(j, "image", path, "root");
        cfg.image_path = path;
        dims = static_cast<int>(io::read_array(cfg.image_path).dim());
    } else if (j.contains("phantom")) {
        const auto& p = j.at("phantom");
        check_keys(p, {"kind", "shape", "n_fibers"}, "phantom");
        read(p, "kind", cfg.phantom.kind, "phantom");
        if (p.contains("shape")) cfg.phantom.shape = read_shape(p.at("shape"), "phantom.shape");
        read(p, "n_fibers", cfg.phantom.n_fibers, "phantom");
        if (cfg.phantom.kind == "microtubules") {
            if (!p.contains("shape")) cfg.phantom.shape = {64, 96, 96};
            if (cfg.phantom.shape.size() != 3) throw ConfigError("config: microtubules phantom must be 3D");
        } else if (cfg.phantom.kind == "texture2d") {
            if (cfg.phantom.shape.size() != 2) throw ConfigError("config: texture2d phantom must be 2D");
        } else {
            throw ConfigError("config: phantom.kind must be 'texture2d' or 'microtubules'");
        }
        dims = static_cast<int>(cfg.phantom.shape.size());
    }

    cfg.psf.side = dims == 3 ? 9 : 17;
    cfg.psf.sigma = dims == 3 ? 1.5 : 2.0;
    if (j.contains("psf")) {
        const auto& p = j.at("psf");
        check_keys(p, {"path", "side", "sigma"}, "psf");
        std::string path;
        read(p, "path", path, "psf");
        cfg.psf.path = path;
        read(p, "side", cfg.psf.side, "psf");
        read(p, "sigma", cfg.psf.sigma, "psf");
    }

    cfg.degrade = DegradeConfig::defaults(dims);
    if (j.contains("degrade")) apply_degrade_section(j.at("degrade"), cfg.degrade);
    if (dims == 3 && cfg.degrade.sp_prob != 0) throw ConfigError("config: salt-and-pepper is 2D-only");

    cfg.train = TrainConfig::defaults(dims);
    if (j.contains("train")) apply_train_section(j.at("train"), cfg.train);
    cfg.tiles = TileConfig::defaults(dims);
    if (j.contains("tiles")) apply_tiles_section(j.at("tiles"), cfg.tiles);
    try {
        cfg.train.validate();
        if (cfg.tiles.enabled) cfg.tiles.validate(cfg.train.model.size_multiple());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    std::vector<std::string> methods{"input", "lr:2", "lr:5", "lr:10", "lr:20", "ours"};
    read(j, "methods", methods, "root");
    for (const auto& m : methods) cfg.methods.push_back(MethodSpec::parse(m));
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path), nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: cannot parse '" + path.string() + "': " + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------- report

std::vector<std::string> metric_columns(int dims) {
    if (dims == 2) return {"PSNR", "SSIM", "MI", "SMI", "RMSE"};
    return {"PSNR", "SSIM", "RMSE"};
}

json make_report(const std::string& name, int dims, uint64_t seed) {
    json cols = json::array();
    for (const auto& c : metric_columns(dims)) cols.push_back(c);
    return {{"name", name}, {"dims", dims}, {"seed", seed}, {"columns", cols}, {"rows", json::array()}};
}

void add_report_row(json& report, const MetricRow& row, std::optional<double> train_s,
                    std::optional<double> inference_ms, const std::optional<LossConfig>& lambdas) {
    json metrics = json::object();
    for (const auto& col : report.at("columns")) {
        auto v = row.get(col.get<std::string>());
        metrics[col.get<std::string>()] = v ? json(*v) : json(nullptr);
    }
    json r{{"method", row.method}, {"metrics", metrics}, {"error", nullptr}};
    r["train_s"] = train_s ? json(*train_s) : json(nullptr);
    r["inference_ms"] = inference_ms ? json(*inference_ms) : json(nullptr);
    r["lambdas"] = lambdas ? to_json(*lambdas) : json(nullptr);
    report["rows"].push_back(r);
}

bool ExperimentReport::all_succeeded() const {
    for (const auto& r : json.at("rows")) {
        if (!r.at("error").is_null()) return false;
    }
    return true;
}

std::map<std::string, std::vector<size_t>> best_rows(const json& report) {
    std::map<std::string, std::vector<size_t>> best;
    const auto& rows = report.at("rows");
    for (const auto& c : report.at("columns")) {
        const auto col = c.get<std::string>();
        const bool higher = higher_is_better(col);
        std::optional<double> top;
        for (const auto& r : rows) {
            const auto& v = r.at("metrics").value(col, json(nullptr));
            if (!v.is_number()) continue;
            double x = v.get<double>();
            if (!top || (higher ? x > *top : x < *top)) top = x;
        }
        auto& idx = best[col];
        if (!top) continue;
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto& v = rows[i].at("metrics").value(col, json(nullptr));
            if (v.is_number() && v.get<double>() == *top) idx.push_back(i);
        }
    }
    return best;
}

namespace {

const std::vector<std::pair<std::string, std::string>> kLambdaColumns{
    {"lambda_bsp", "λbsp"},         {"lambda_rec", "λrec"},     {"lambda_inv_d", "λinv(d)"},
    {"lambda_inv", "λinv"},         {"lambda_bound_d", "λbound(d)"}, {"lambda_bound", "λbound"}};

int precision_for(const std::string& col) {
    if (col == "PSNR") return 2;
    if (col == "RMSE") return 4;
    return 3;
}

std::string fixed(double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

size_t display_width(const std::string& s) {
    size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string pad_right(const std::string& s, size_t width) {
    auto w = display_width(s);
    return w >= width ? s : s + std::string(width - w, ' ');
}

std::string pad_left(const std::string& s, size_t width) {
    auto w = display_width(s);
    return w >= width ? s : std::string(width - w, ' ') + s;
}

bool any_row_has(const json& rows, const char* key) {
    for (const auto& r : rows) {
        if (!r.at(key).is_null()) return true;
    }
    return false;
}

}  // namespace

std::string report_render(const json& report) {
    const auto& rows = report.at("rows");
    std::vector<std::string> metric_cols;
    for (const auto& c : report.at("columns")) metric_cols.push_back(c.get<std::string>());
    const bool has_lambdas = any_row_has(rows, "lambdas");
    const bool has_train = any_row_has(rows, "train_s");
    const bool has_infer = any_row_has(rows, "inference_ms");
    auto best = best_rows(report);

    std::vector<std::string> header{"method"};
    if (has_lambdas) {
        for (const auto& [key, title] : kLambdaColumns) header.push_back(title);
    }
    for (const auto& c : metric_cols) header.push_back(c + (higher_is_better(c) ? " ↑" : " ↓"));
    if (has_train) header.push_back("Train t (s)");
    if (has_infer) header.push_back("Inference t (ms)");

    std::vector<std::vector<std::string>> cells;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::vector<std::string> line{r.at("method").get<std::string>()};
        if (has_lambdas) {
            for (const auto& [key, title] : kLambdaColumns) {
                line.push_back(r.at("lambdas").is_null() ? "" : fixed(r.at("lambdas").at(key).get<double>(), 1));
            }
        }
        for (const auto& c : metric_cols) {
            const auto& v = r.at("metrics").value(c, json(nullptr));
            if (!v.is_number()) {
                line.push_back("-");
                continue;
            }
            const auto& winners = best[c];
            bool is_best = std::find(winners.begin(), winners.end(), i) != winners.end();
            line.push_back(fixed(v.get<double>(), precision_for(c)) + (is_best ? "*" : " "));
        }
        if (has_train) line.push_back(r.at("train_s").is_null() ? "-" : fixed(r.at("train_s").get<double>(), 1));
        if (has_infer) {
            line.push_back(r.at("inference_ms").is_null() ? "-" : fixed(r.at("inference_ms").get<double>(), 1));
        }
        if (!r.at("error").is_null()) line.push_back("error: " + r.at("error").get<std::string>());
        cells.push_back(std::move(line));
    }

    std::vector<size_t> widths(header.size());
    for (size_t c = 0; c < header.size(); ++c) {
        widths[c] = display_width(header[c]);
        for (const auto& line : cells) {
            if (c < line.size()) widths[c] = std::max(widths[c], display_width(line[c]));
        }
    }
    std::ostringstream os;
    for (size_t c = 0; c < header.size(); ++c) {
        os << (c == 0 ? pad_right(header[c], widths[c]) : "  " + pad_left(header[c], widths[c]));
    }
    os << '\n';
    for (const auto& line : cells) {
        for (size_t c = 0; c < line.size(); ++c) {
            if (c == 0) {
                os << pad_right(line[c], widths[c]);
            } else if (c < widths.size()) {
                os << "  " << pad_left(line[c], widths[c]);
            } else {
                os << "  " << line[c];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string report_csv(const json& report) {
    std::ostringstream os;
    os.precision(10);
    std::vector<std::string> metric_cols;
    for (const auto& c : report.at("columns")) metric_cols.push_back(c.get<std::string>());
    os << "method";
    for (const auto& c : metric_cols) os << ',' << c;
    os << ",train_s,inference_ms";
    for (const auto& [key, title] : kLambdaColumns) os << ',' << key;
    os << ",error\n";
    auto quoted = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += "\"\"";
            else out.push_back(c);
        }
        return out + "\"";
    };
    for (const auto& r : report.at("rows")) {
        os << quoted(r.at("method").get<std::string>());
        for (const auto& c : metric_cols) {
            const auto& v = r.at("metrics").value(c, json(nullptr));
            os << ',';
            if (v.is_number()) os << v.get<double>();
        }
        for (const char* key : {"train_s", "inference_ms"}) {
            os << ',';
            if (r.at(key).is_number()) os << r.at(key).get<double>();
        }
        for (const auto& [key, title] : kLambdaColumns) {
            os << ',';
            if (!r.at("lambdas").is_null()) os << r.at("lambdas").at(key).get<double>();
        }
        os << ',';
        if (!r.at("error").is_null()) os << quoted(r.at("error").get<std::string>());
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------- run

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const SeededRng root(cfg.seed);
    fs::path out_dir = cfg.output_dir;
    if (out_dir.empty()) {
        if (const char* env = std::getenv("SIAMDECON_OUTPUT_DIR")) out_dir = fs::path(env) / slug(cfg.name);
    }
    const bool persist = !out_dir.empty();
    if (persist) fs::create_directories(out_dir);

    Image clean;
    if (!cfg.image_path.empty()) {
        clean = io::read_image(cfg.image_path);
    } else {
        auto rng = root.derive("phantom");
        clean = cfg.phantom.kind == "microtubules" ? microtubules_phantom(cfg.phantom.shape, cfg.phantom.n_fibers, rng)
                                                   : texture_phantom_2d(cfg.phantom.shape, rng);
    }
    const int dims = clean.dims();
    PSFKernel psf = cfg.psf.path.empty() ? gaussian_psf(dims, cfg.psf.side, cfg.psf.sigma) : load_psf(cfg.psf.path);

    auto degrade_cfg = cfg.degrade;
    degrade_cfg.seed = root.derive("degrade").seed();
    auto degraded = degrade(clean, psf, degrade_cfg);
    if (persist && cfg.save_images) {
        io::write_image(out_dir / "clean.tif", clean);
        io::write_image(out_dir / "degraded.tif", degraded);
    }

    ExperimentReport report{make_report(cfg.name, dims, cfg.seed)};
    report.json["degrade"] = to_json(degrade_cfg);
    report.json["train"] = to_json(cfg.train);
    report.json["tiles"] = to_json(cfg.tiles);

    for (const auto& method : cfg.methods) {
        try {
            switch (method.kind) {
                case MethodSpec::Kind::Input: {
                    add_report_row(report.json, evaluate(degraded, clean, method.label), std::nullopt, std::nullopt,
                                   std::nullopt);
                    break;
                }
                case MethodSpec::Kind::LucyRichardson: {
                    auto t0 = std::chrono::steady_clock::now();
                    auto restored = lucy_richardson(degraded, psf, method.iterations);
                    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                    add_report_row(report.json, evaluate(restored, clean, method.label), std::nullopt, ms, std::nullopt);
                    if (persist && cfg.save_images) io::write_image(out_dir / (slug(method.label) + ".tif"), restored);
                    break;
                }
                case MethodSpec::Kind::Network: {
                    auto train_cfg = cfg.train;
                    if (method.loss) train_cfg.loss = *method.loss;
                    train_cfg.seed = root.derive("train").seed();
                    TrainOutputs outputs;
                    if (persist) outputs.directory = out_dir / slug(method.label);
                    outputs.verbose = cfg.verbose;
                    auto trained = train(degraded, psf, train_cfg, outputs);
                    auto pred = predict(trained.checkpoint.model, degraded, trained.checkpoint.stats, cfg.tiles);
                    add_report_row(report.json, evaluate(pred.image, clean, method.label), trained.train_seconds,
                                   pred.milliseconds, train_cfg.loss);
                    if (persist && cfg.save_images) io::write_image(out_dir / (slug(method.label) + ".tif"), pred.image);
                    break;
                }
            }
        } catch (const std::exception& e) {
            json r{{"method", method.label}, {"metrics", json::object()}, {"train_s", nullptr},
                   {"inference_ms", nullptr}, {"lambdas", nullptr}, {"error", e.what()}};
            report.json["rows"].push_back(r);
        }
    }

    if (persist) {
        io::write_text(out_dir / "report.json", report.json.dump(2) + "\n");
        io::write_text(out_dir / "report.csv", report_csv(report.json));
        io::write_text(out_dir / "report.txt", report_render(report.json));
    }
    return report;
}

}  // namespace siamdecon
