#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "avaccel/dataset.hpp"
#include "avaccel/synth.hpp"
#include "avaccel/train.hpp"

namespace avaccel {

inline constexpr std::size_t kSegmentsPerTar = 25;

/// Process exit codes of the command-line verbs.
enum ExitCode : int {
    exit_ok = 0,
    exit_config_error = 2,
    exit_data_error = 3,
    exit_numeric_error = 4,
};

/// Maps a caught exception to an exit code (anything unexpected counts as a
/// data error, which covers I/O).
int exit_code_for(const std::exception& e);

/*
 * JSON configs. Every key is optional unless marked required; unknown keys
 * are rejected with ConfigError.
 *
 * gen:   {"out": dir (required), "tars": 1, "seed": 42, "image_size": 64,
 *         "duration_s": 20, "lead_probability": 0.7}
 *
 * train: {"model": kind (required), "dataset": dir (required), "out": dir (required),
 *         "tars": 1, "val_tar": index, "epochs": 10, "batch_size": 16,
 *         "optimizer": "adam", "learning_rate": 0.001, "image_size": 64,
 *         "window": 5, "sample_stride": 1, "seed": 42,
 *         "base_model": path, "base_epochs": epochs}
 *
 * eval:  {"model_file": path (required), "dataset": dir (required),
 *         "tars": 1, "val_tar": index, "split": "val", "sample_stride": 1, "out": dir}
 *
 * plot:  {"inputs": [csv paths] (required), "out": svg path (required), "title": text}
 *
 * bench: {"dataset": dir (required), "out": dir (required), "sizes": [1, 10],
 *         "seeds": 3, "seed": 42, "epochs": 10, "batch_size": 16,
 *         "learning_rate": 0.001, "image_size": 16, "sample_stride": 4,
 *         "threads": 1, "models": [all five]}
 */

struct GenConfig {
    std::string out;
    std::size_t tars = 1;
    std::uint64_t seed = 42;
    ScenarioConfig scenario;

    void validate() const;
};

/// Training tars 0..tars-1. Validation is tar `val_tar` when set; otherwise
/// the dataset's last tar when it lies beyond the training tars; otherwise
/// the last fifth of the training segments.
struct SplitConfig {
    std::string dataset;
    std::size_t tars = 1;
    std::optional<std::size_t> val_tar;
    std::size_t image_size = kDefaultImageSize;
    std::size_t window = kDefaultWindow;
    std::size_t sample_stride = 1;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::baseline;
    SplitConfig split;
    std::string out;
    TrainConfig train;
    std::optional<std::string> base_model;
    std::optional<std::size_t> base_epochs;

    void validate() const;
};

struct EvalConfig {
    std::string model_file;
    SplitConfig split;
    std::string which = "val";  // "train" or "val"
    std::string out;            // optional; writes eval.json when set

    void validate() const;
};

struct PlotConfig {
    std::vector<std::string> inputs;
    std::string out;
    std::string title = "Model loss";

    void validate() const;
};

struct BenchConfig {
    std::string dataset;
    std::string out;
    std::vector<std::size_t> sizes = {1, 10};
    std::size_t seeds = 3;
    std::uint64_t seed = 42;
    TrainConfig train;
    std::size_t image_size = 16;
    std::size_t sample_stride = 4;
    std::size_t threads = 1;
    std::vector<ModelKind> models = {kAllModelKinds.begin(), kAllModelKinds.end()};

    void validate() const;
};

/// Parse and validate; throw ConfigError.
GenConfig parse_gen_config(const std::string& json_text);
ExperimentConfig parse_experiment_config(const std::string& json_text);
EvalConfig parse_eval_config(const std::string& json_text);
PlotConfig parse_plot_config(const std::string& json_text);
BenchConfig parse_bench_config(const std::string& json_text);

/// Whole-file read; DataError when missing.
std::string read_text_file(const std::string& path);

struct SplitData {
    Dataset train;
    Dataset val;
};
SplitData load_split(const SplitConfig& cfg);

/// Seed of segment s in tar t: root ^ fnv1a64("segment:t:s").
std::uint64_t segment_seed(std::uint64_t root, std::size_t tar, std::size_t segment);

struct GenSummary {
    std::size_t files = 0;
    std::uint64_t dataset_hash = 0;
    DatasetStats stats;
};
GenSummary cmd_gen(const GenConfig& cfg, std::ostream& log);

struct ResultRow {
    ModelKind model;
    std::size_t data_size = 0;
    Real train_mae = 0;
    Real val_mae = 0;
    double train_seconds = 0;
};

/// "Baseline,1,0.5086,0.6634,3 mins"
std::string format_result_row(const ResultRow& row);
/// "45 secs" under a minute, otherwise whole minutes ("1 min", "3 mins").
std::string format_duration(double seconds);

/// Writes the history as `epoch,train_mae,val_mae` rows with 17 significant
/// digits.
std::string format_loss_csv(const std::vector<LossReport>& history);

struct TrainOutcome {
    ModelGraph model;
    std::vector<LossReport> history;
    ResultRow row;
};

/// Trains per `cfg`, writing model.avnm and loss.csv into cfg.out and
/// appending to cfg.out/results.csv.
TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log);

struct EvalReport {
    ModelKind model;
    EvalResult result;
};
EvalReport cmd_eval(const EvalConfig& cfg, std::ostream& log);

struct LossSeries {
    std::string label;
    std::vector<double> epochs;
    std::vector<double> values;
};
/// Reads a loss.csv; DataError names the file and line on malformed input.
std::vector<LossSeries> read_loss_csv(const std::string& path);
/// Self-contained SVG with axes, a legend and one polyline per series.
std::string render_loss_svg(const std::vector<LossSeries>& series, const std::string& title);
void cmd_plot(const PlotConfig& cfg, std::ostream& log);

struct BenchCell {
    ModelKind model;
    std::size_t data_size = 0;
    std::size_t seed_index = 0;
    std::uint64_t cell_seed = 0;
    Real train_mae = 0;
    Real val_mae = 0;            // current-frame val MAE, the ranking metric
    Real val_mae_all_steps = 0;  // differs from val_mae only for windowed models
    double train_seconds = 0;
};

struct TrendFlags {
    /// (a) per model: largest size beats smallest in a majority of seeds.
    std::vector<std::pair<ModelKind, bool>> more_data_helps;
    bool more_data_helps_all = false;
    /// (b) CNN+NN below both CNN and baseline at the largest size.
    bool fusion_beats_single = false;
    /// (c) advanced lowest of all models at the largest size.
    bool advanced_best = false;
};

/// cell seed = root ^ fnv1a64("<model>:<size>:<seed index>").
std::uint64_t bench_cell_seed(std::uint64_t root, ModelKind model, std::size_t size,
                              std::size_t seed_index);
/// Majority rule: a flag holds when it holds for at least 2/3 of the seeds.
TrendFlags compute_trends(const std::vector<BenchCell>& cells, std::size_t seeds);

struct BenchReport {
    std::vector<BenchCell> cells;
    TrendFlags trends;
};
/// Writes bench_report.csv and bench_report.md into cfg.out.
BenchReport cmd_bench(const BenchConfig& cfg, std::ostream& log);

}  // namespace avaccel
