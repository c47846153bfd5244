#pragma once

#include "siamdecon/degradation.hpp"
#include "siamdecon/inference.hpp"
#include "siamdecon/metrics.hpp"
#include "siamdecon/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>

namespace siamdecon {

/// Invalid or unknown configuration keys. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct PhantomSpec {
    std::string kind = "texture2d";  ///< "texture2d" or "microtubules"
    Shape shape{256, 256};
    int n_fibers = 10;
};

struct PsfSpec {
    std::filesystem::path path;  ///< measured kernel; empty selects the Gaussian
    int side = 17;
    double sigma = 2.0;
};

/// A method to evaluate: the degraded input itself, Richardson-Lucy with a
/// fixed iteration count, or the trained network under a loss setting.
struct MethodSpec {
    enum class Kind { Input, LucyRichardson, Network } kind = Kind::Input;
    int iterations = 0;
    std::optional<LossConfig> loss;  ///< network override; default = train.loss
    std::string label;

    static MethodSpec parse(const std::string& text);
};

struct ExperimentConfig {
    std::string name = "experiment";
    uint64_t seed = 0;
    std::filesystem::path output_dir;
    std::filesystem::path image_path;  ///< clean reference; empty selects the phantom
    PhantomSpec phantom;
    PsfSpec psf;
    DegradeConfig degrade;
    TrainConfig train;
    TileConfig tiles;
    std::vector<MethodSpec> methods;
    bool save_images = true;
    bool verbose = false;
};

/// Strict parsing: unknown keys and malformed values raise ConfigError.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Applies a "train" section onto `cfg` (keys absent keep their value).
void apply_train_section(const nlohmann::json& j, TrainConfig& cfg);
void apply_degrade_section(const nlohmann::json& j, DegradeConfig& cfg);
void apply_tiles_section(const nlohmann::json& j, TileConfig& cfg);
LossConfig parse_loss_section(const nlohmann::json& j);

nlohmann::json to_json(const DegradeConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const TileConfig& cfg);
nlohmann::json to_json(const LossConfig& cfg);

/// Machine-readable report; the CSV and text renderings derive from it.
///
///   { "name", "dims", "seed", "columns": [...],
///     "rows": [ { "method", "metrics": {...}, "train_s", "inference_ms",
///                 "lambdas": {...} | null, "error": null | "..." } ] }
struct ExperimentReport {
    nlohmann::json json;
    bool all_succeeded() const;
};

/// Degrade -> (train) -> predict -> evaluate for every requested method.
/// Methods run sequentially; a failing method records its error in the
/// report and the remaining methods still run.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Metric columns for an image rank: PSNR, SSIM, (MI, SMI,) RMSE.
std::vector<std::string> metric_columns(int dims);

/// Row indices holding the best value of each metric column (ties share).
std::map<std::string, std::vector<size_t>> best_rows(const nlohmann::json& report);

/// Aligned plain-text table with direction markers and '*' on best values.
std::string report_render(const nlohmann::json& report);
std::string report_csv(const nlohmann::json& report);

/// Builds a report skeleton (for callers assembling rows themselves).
nlohmann::json make_report(const std::string& name, int dims, uint64_t seed);
void add_report_row(nlohmann::json& report, const MetricRow& row, std::optional<double> train_s,
                    std::optional<double> inference_ms, const std::optional<LossConfig>& lambdas);

}  // namespace siamdecon
