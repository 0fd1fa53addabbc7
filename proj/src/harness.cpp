#include "avaccel/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace avaccel {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// --------------------------------------------------------------------- JSON

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        if (!has(key)) return require(key, fallback);
        if (!j_[key].is_string()) throw type_error(key, "a string");
        return j_[key].get<std::string>();
    }

    std::uint64_t u64(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
        if (!has(key)) return require(key, fallback);
        if (!j_[key].is_number_unsigned()) throw type_error(key, "a non-negative integer");
        return j_[key].get<std::uint64_t>();
    }

    std::size_t size(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
        return static_cast<std::size_t>(u64(key, fallback));
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        if (!has(key)) return require(key, fallback);
        if (!j_[key].is_number()) throw type_error(key, "a number");
        return j_[key].get<double>();
    }

    std::vector<std::string> texts(const std::string& key,
                                   std::optional<std::vector<std::string>> fallback = std::nullopt) {
        if (!has(key)) return require(key, fallback);
        if (!j_[key].is_array()) throw type_error(key, "an array of strings");
        std::vector<std::string> out;
        for (const auto& v : j_[key]) {
            if (!v.is_string()) throw type_error(key, "an array of strings");
            out.push_back(v.get<std::string>());
        }
        return out;
    }

    std::vector<std::size_t> sizes(const std::string& key, std::vector<std::size_t> fallback) {
        if (!has(key)) return fallback;
        if (!j_[key].is_array()) throw type_error(key, "an array of integers");
        std::vector<std::size_t> out;
        for (const auto& v : j_[key]) {
            if (!v.is_number_unsigned()) throw type_error(key, "an array of non-negative integers");
            out.push_back(v.get<std::size_t>());
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key \"" + key + "\"");
        }
    }

private:
    template <class T>
    T require(const std::string& key, const std::optional<T>& fallback) const {
        if (!fallback) throw ConfigError(where_ + ": missing required key \"" + key + "\"");
        return *fallback;
    }
    ConfigError type_error(const std::string& key, const char* what) const {
        return ConfigError(where_ + ": \"" + key + "\" must be " + what);
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json parse_json(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(where + ": invalid JSON: " + e.what());
    }
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer \"" + name + "\" (expected adam or sgd)");
}

void validate_split(const SplitConfig& s, const char* where) {
    if (s.dataset.empty()) throw ConfigError(std::string(where) + ": dataset path is empty");
    if (s.tars == 0) throw ConfigError(std::string(where) + ": tars must be at least 1");
    if (s.window == 0) throw ConfigError(std::string(where) + ": window must be at least 1");
    if (s.sample_stride == 0) throw ConfigError(std::string(where) + ": sample_stride must be at least 1");
    if (s.val_tar && *s.val_tar < s.tars) {
        throw ConfigError(std::string(where) + ": val_tar " + std::to_string(*s.val_tar) +
                          " overlaps the training tars 0.." + std::to_string(s.tars - 1));
    }
}

void validate_image_size(std::size_t size, const char* where) {
    if (size == 0 || size % 8 != 0) {
        throw ConfigError(std::string(where) + ": image_size must be a positive multiple of 8");
    }
}

// ---------------------------------------------------------------------- I/O

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Stats do not look at pixels, so keep only the numeric fields in memory.
Segment without_images(Segment seg) {
    for (FrameRecord& f : seg.frames) f.image = Tensor();
    return seg;
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
        return exit_config_error;
    }
    if (dynamic_cast<const NumericError*>(&e)) return exit_numeric_error;
    return exit_data_error;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ------------------------------------------------------------------ configs

void GenConfig::validate() const {
    if (out.empty()) throw ConfigError("gen: out path is empty");
    if (tars == 0) throw ConfigError("gen: tars must be at least 1");
    if (tars > 1000) throw ConfigError("gen: at most 1000 tars");
    scenario.validate();
}

void ExperimentConfig::validate() const {
    validate_split(split, "train");
    if (uses_images(model)) validate_image_size(split.image_size, "train");
    if (out.empty()) throw ConfigError("train: out path is empty");
    if (base_model && model != ModelKind::advanced) {
        throw ConfigError("train: base_model only applies to the advanced model");
    }
    if (base_epochs && *base_epochs == 0) throw ConfigError("train: base_epochs must be at least 1");
    if (train.epochs == 0) throw ConfigError("train: epochs must be at least 1");
    if (train.batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
}

void EvalConfig::validate() const {
    if (model_file.empty()) throw ConfigError("eval: model_file is empty");
    validate_split(split, "eval");
    if (which != "train" && which != "val") {
        throw ConfigError("eval: split must be \"train\" or \"val\", got \"" + which + "\"");
    }
}

void PlotConfig::validate() const {
    if (inputs.empty()) throw ConfigError("plot: inputs must list at least one loss CSV");
    if (out.empty()) throw ConfigError("plot: out path is empty");
}

void BenchConfig::validate() const {
    if (dataset.empty()) throw ConfigError("bench: dataset path is empty");
    if (out.empty()) throw ConfigError("bench: out path is empty");
    if (sizes.empty()) throw ConfigError("bench: sizes must not be empty");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0 || (i > 0 && sizes[i] <= sizes[i - 1])) {
            throw ConfigError("bench: sizes must be positive and strictly increasing");
        }
    }
    if (seeds == 0) throw ConfigError("bench: seeds must be at least 1");
    if (threads == 0) throw ConfigError("bench: threads must be at least 1");
    if (sample_stride == 0) throw ConfigError("bench: sample_stride must be at least 1");
    if (models.empty()) throw ConfigError("bench: models must not be empty");
    validate_image_size(image_size, "bench");
    if (train.epochs == 0) throw ConfigError("bench: epochs must be at least 1");
    if (train.batch_size < 2) throw ConfigError("bench: batch_size must be at least 2");
}

GenConfig parse_gen_config(const std::string& text) {
    const json j = parse_json(text, "gen config");
    Fields f(j, "gen config");
    GenConfig c;
    c.out = f.text("out");
    c.tars = f.size("tars", 1);
    c.seed = f.u64("seed", 42);
    const std::size_t image = f.size("image_size", kDefaultImageSize);
    c.scenario.image_h = c.scenario.image_w = image;
    c.scenario.duration_s = f.number("duration_s", c.scenario.duration_s);
    c.scenario.lead_probability = f.number("lead_probability", c.scenario.lead_probability);
    f.finish();
    c.validate();
    return c;
}

namespace {

SplitConfig parse_split(Fields& f, bool with_image) {
    SplitConfig s;
    s.dataset = f.text("dataset");
    s.tars = f.size("tars", 1);
    if (f.has("val_tar")) s.val_tar = f.size("val_tar");
    if (with_image) s.image_size = f.size("image_size", kDefaultImageSize);
    s.window = f.size("window", kDefaultWindow);
    s.sample_stride = f.size("sample_stride", 1);
    return s;
}

void parse_train_fields(Fields& f, TrainConfig& t) {
    t.epochs = f.size("epochs", 10);
    t.batch_size = f.size("batch_size", 16);
    t.optimizer.kind = parse_optimizer(f.text("optimizer", "adam"));
    t.optimizer.learning_rate = static_cast<Real>(f.number("learning_rate", 1e-3));
    t.seed = f.u64("seed", 42);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    const json j = parse_json(text, "train config");
    Fields f(j, "train config");
    ExperimentConfig c;
    c.model = parse_model_kind(f.text("model"));
    c.split = parse_split(f, true);
    c.out = f.text("out");
    parse_train_fields(f, c.train);
    if (f.has("base_model")) c.base_model = f.text("base_model");
    if (f.has("base_epochs")) c.base_epochs = f.size("base_epochs");
    f.finish();
    c.validate();
    return c;
}

EvalConfig parse_eval_config(const std::string& text) {
    const json j = parse_json(text, "eval config");
    Fields f(j, "eval config");
    EvalConfig c;
    c.model_file = f.text("model_file");
    c.split = parse_split(f, false);
    c.which = f.text("split", "val");
    c.out = f.text("out", "");
    f.finish();
    c.validate();
    return c;
}

PlotConfig parse_plot_config(const std::string& text) {
    const json j = parse_json(text, "plot config");
    Fields f(j, "plot config");
    PlotConfig c;
    c.inputs = f.texts("inputs");
    c.out = f.text("out");
    c.title = f.text("title", c.title);
    f.finish();
    c.validate();
    return c;
}

BenchConfig parse_bench_config(const std::string& text) {
    const json j = parse_json(text, "bench config");
    Fields f(j, "bench config");
    BenchConfig c;
    c.dataset = f.text("dataset");
    c.out = f.text("out");
    c.sizes = f.sizes("sizes", c.sizes);
    c.seeds = f.size("seeds", c.seeds);
    c.seed = f.u64("seed", c.seed);
    c.train.epochs = f.size("epochs", 10);
    c.train.batch_size = f.size("batch_size", 16);
    c.train.optimizer.learning_rate = static_cast<Real>(f.number("learning_rate", 1e-3));
    c.image_size = f.size("image_size", c.image_size);
    c.sample_stride = f.size("sample_stride", c.sample_stride);
    c.threads = f.size("threads", c.threads);
    if (f.has("models")) {
        c.models.clear();
        for (const std::string& name : f.texts("models")) c.models.push_back(parse_model_kind(name));
    }
    f.finish();
    c.validate();
    return c;
}

// -------------------------------------------------------------------- split

SplitData load_split(const SplitConfig& cfg) {
    const std::size_t available = count_tars(cfg.dataset);
    if (available == 0) throw DataError(cfg.dataset + ": no tar_000 directory (run gen first)");
    if (cfg.tars > available) {
        throw DataError(cfg.dataset + ": " + std::to_string(cfg.tars) + " training tars requested, " +
                        std::to_string(available) + " available");
    }
    std::vector<std::string> train_paths, val_paths;
    for (std::size_t t = 0; t < cfg.tars; ++t) {
        for (auto& p : tar_segment_paths(cfg.dataset, t)) train_paths.push_back(std::move(p));
    }
    std::optional<std::size_t> val_tar = cfg.val_tar;
    if (!val_tar && available > cfg.tars) val_tar = available - 1;
    if (val_tar) {
        if (*val_tar >= available) {
            throw DataError(cfg.dataset + ": val_tar " + std::to_string(*val_tar) + " does not exist");
        }
        val_paths = tar_segment_paths(cfg.dataset, *val_tar);
    } else {
        if (train_paths.size() < 2) throw DataError(cfg.dataset + ": too few segments to hold out validation data");
        const std::size_t held = std::max<std::size_t>(1, train_paths.size() / 5);
        val_paths.assign(train_paths.end() - static_cast<std::ptrdiff_t>(held), train_paths.end());
        train_paths.resize(train_paths.size() - held);
    }
    SplitData d{Dataset(cfg.image_size, cfg.image_size, cfg.window),
                Dataset(cfg.image_size, cfg.image_size, cfg.window)};
    for (const auto& p : train_paths) d.train.add_segment(load_segment(p), cfg.sample_stride);
    for (const auto& p : val_paths) d.val.add_segment(load_segment(p), cfg.sample_stride);
    return d;
}

// ---------------------------------------------------------------------- gen

std::uint64_t segment_seed(std::uint64_t root, std::size_t tar, std::size_t segment) {
    return root ^ fnv1a64("segment:" + std::to_string(tar) + ":" + std::to_string(segment));
}

GenSummary cmd_gen(const GenConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_directory(cfg.out);
    const std::size_t existing = count_tars(cfg.out);
    if (existing > cfg.tars) {
        throw DataError(cfg.out + " already holds " + std::to_string(existing) +
                        " tars; generate into an empty directory");
    }
    GenSummary summary;
    std::vector<Segment> numeric;
    for (std::size_t t = 0; t < cfg.tars; ++t) {
        const std::string dir = tar_directory(cfg.out, t);
        ensure_directory(dir);
        for (std::size_t s = 0; s < kSegmentsPerTar; ++s) {
            const std::uint64_t id = t * kSegmentsPerTar + s;
            Segment seg = generate_synthetic_segment(cfg.scenario, segment_seed(cfg.seed, t, s), id);
            char name[32];
            std::snprintf(name, sizeof name, "/%06llu.avsg", static_cast<unsigned long long>(id));
            save_segment(seg, dir + name);
            numeric.push_back(without_images(std::move(seg)));
            ++summary.files;
        }
        log << "tar " << t << ": " << kSegmentsPerTar << " segments written to " << dir << "\n";
    }
    summary.stats = dataset_stats(numeric);
    summary.dataset_hash = dataset_hash(cfg.out);
    log << format_stats(summary.stats);
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(summary.dataset_hash));
    log << "dataset hash: " << hash << "\n";
    return summary;
}

// -------------------------------------------------------------------- train

std::string format_duration(double seconds) {
    if (seconds < 60) {
        const long s = std::lround(seconds);
        return std::to_string(s) + (s == 1 ? " sec" : " secs");
    }
    const long m = std::lround(seconds / 60);
    return std::to_string(m) + (m == 1 ? " min" : " mins");
}

std::string format_result_row(const ResultRow& row) {
    return std::string(model_display_name(row.model)) + "," + std::to_string(row.data_size) + "," +
           fixed(row.train_mae, 4) + "," + fixed(row.val_mae, 4) + "," +
           format_duration(row.train_seconds);
}

std::string format_loss_csv(const std::vector<LossReport>& history) {
    std::string out = "epoch,train_mae,val_mae\n";
    for (const LossReport& r : history) {
        out += std::to_string(r.epoch) + "," + g17(r.train_mae) + "," + g17(r.val_mae) + "\n";
    }
    return out;
}

namespace {

void append_result(const std::string& path, const ResultRow& row) {
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot open " + path + " for appending");
    if (fresh) out << "model,data_size,train_mae,val_mae,train_time\n";
    out << format_result_row(row) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

ModelGraph obtain_base_cnn(const ExperimentConfig& cfg, std::ostream& log) {
    if (cfg.base_model) {
        ModelGraph base = load_model(*cfg.base_model);
        if (base.kind != ModelKind::cnn) {
            throw ConfigError(*cfg.base_model + ": base model is " +
                              std::string(model_kind_name(base.kind)) + ", expected cnn");
        }
        if (base.image_h != cfg.split.image_size || base.image_w != cfg.split.image_size) {
            throw ConfigError(*cfg.base_model + ": base model image size " +
                              std::to_string(base.image_h) + " differs from image_size " +
                              std::to_string(cfg.split.image_size));
        }
        log << "using base CNN " << *cfg.base_model << "\n";
        return base;
    }
    ExperimentConfig base_cfg = cfg;
    base_cfg.model = ModelKind::cnn;
    base_cfg.out = (fs::path(cfg.out) / "base_cnn").string();
    base_cfg.train.epochs = cfg.base_epochs.value_or(cfg.train.epochs);
    base_cfg.base_model.reset();
    base_cfg.base_epochs.reset();
    log << "training base CNN into " << base_cfg.out << "\n";
    return cmd_train(base_cfg, log).model;
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_directory(cfg.out);
    SplitConfig split = cfg.split;
    if (!uses_images(cfg.model)) split.image_size = 0;
    const SplitData data = load_split(split);
    log << model_display_name(cfg.model) << ": " << data.train.sample_count() << " training and "
        << data.val.sample_count() << " validation samples\n";

    // Separate streams for initialization and shuffling.
    Rng init(cfg.train.seed ^ fnv1a64("init"));
    ModelGraph g;
    if (cfg.model == ModelKind::advanced) {
        const ModelGraph base = obtain_base_cnn(cfg, log);
        g = build_advanced(base, init, split.window);
    } else {
        g = build_model(cfg.model, init, split.image_size, split.image_size, split.window);
    }
    g.norm = fit_norm_stats(data.train.frames());
    g.target_scale = fit_target_scale(data.train.frames());

    const auto start = std::chrono::steady_clock::now();
    auto history = fit(g, data.train, data.val, cfg.train, [&](const LossReport& r) {
        log << "epoch " << r.epoch << "/" << cfg.train.epochs << "  train_mae " << fixed(r.train_mae, 6)
            << "  val_mae " << fixed(r.val_mae, 6) << "\n";
        return true;
    });
    const double seconds = seconds_since(start);

    const std::string out = fs::path(cfg.out).string();
    save_model(g, (fs::path(out) / "model.avnm").string());
    write_text_file((fs::path(out) / "loss.csv").string(), format_loss_csv(history));
    ResultRow row{cfg.model, cfg.split.tars, history.back().train_mae, history.back().val_mae, seconds};
    append_result((fs::path(out) / "results.csv").string(), row);
    log << "result: " << format_result_row(row) << "\n";
    return {std::move(g), std::move(history), row};
}

// --------------------------------------------------------------------- eval

EvalReport cmd_eval(const EvalConfig& cfg, std::ostream& log) {
    cfg.validate();
    const ModelGraph g = load_model(cfg.model_file);
    SplitConfig split = cfg.split;
    split.image_size = uses_images(g.kind) ? g.image_h : 0;
    if (is_windowed(g.kind)) split.window = g.window;
    const SplitData data = load_split(split);
    const Dataset& ds = cfg.which == "train" ? data.train : data.val;
    EvalReport report{g.kind, evaluate_mae(g, ds)};
    log << model_kind_name(g.kind) << " on " << cfg.which << " split (" << report.result.samples
        << " samples): mae " << g17(report.result.all_steps);
    if (is_windowed(g.kind)) log << "  last_step_mae " << g17(report.result.last_step);
    log << "\n";
    if (!cfg.out.empty()) {
        ensure_directory(cfg.out);
        json j = {{"model", std::string(model_kind_name(g.kind))},
                  {"split", cfg.which},
                  {"samples", report.result.samples},
                  {"mae_all_steps", report.result.all_steps},
                  {"mae_last_step", report.result.last_step}};
        write_text_file((fs::path(cfg.out) / "eval.json").string(), j.dump(2) + "\n");
    }
    return report;
}

// --------------------------------------------------------------------- plot

namespace {

std::string trim_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

double parse_number(const std::string& field, const std::string& where) {
    if (field.empty()) throw DataError(where + ": empty field");
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw DataError(where + ": \"" + field + "\" is not a number");
    }
    if (used != field.size()) throw DataError(where + ": \"" + field + "\" is not a number");
    if (!std::isfinite(v)) throw DataError(where + ": non-finite value");
    return v;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string series_stem(const std::string& path) {
    const fs::path p(path);
    if (p.filename() == "loss.csv" && p.has_parent_path() && !p.parent_path().filename().empty()) {
        return p.parent_path().filename().string();
    }
    return p.stem().string();
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

std::vector<LossSeries> read_loss_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError(path + ":1: empty file (expected a header)");
    ++line_no;
    if (trim_cr(line) != "epoch,train_mae,val_mae") {
        throw DataError(path + ":1: header must be epoch,train_mae,val_mae");
    }
    const std::string stem = series_stem(path);
    LossSeries train{stem + " train", {}, {}}, val{stem + " val", {}, {}};
    while (std::getline(in, line)) {
        ++line_no;
        line = trim_cr(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (fields.size() != 3) {
            throw DataError(where + ": expected 3 fields, found " + std::to_string(fields.size()));
        }
        const double epoch = parse_number(fields[0], where);
        if (epoch != std::floor(epoch) || epoch < 1) throw DataError(where + ": epoch must be a positive integer");
        if (!train.epochs.empty() && epoch <= train.epochs.back()) {
            throw DataError(where + ": epochs must increase");
        }
        train.epochs.push_back(epoch);
        val.epochs.push_back(epoch);
        train.values.push_back(parse_number(fields[1], where));
        val.values.push_back(parse_number(fields[2], where));
    }
    if (train.epochs.empty()) throw DataError(path + ": no data rows after the header");
    return {train, val};
}

std::string render_loss_svg(const std::vector<LossSeries>& series, const std::string& title) {
    if (series.empty()) throw DataError("plot: nothing to draw");
    constexpr double W = 800, H = 480, left = 70, right = 190, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    double x0 = series[0].epochs.front(), x1 = x0, y0 = series[0].values.front(), y1 = y0;
    for (const auto& s : series) {
        for (double e : s.epochs) x0 = std::min(x0, e), x1 = std::max(x1, e);
        for (double v : s.values) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    const double pad = y1 > y0 ? 0.05 * (y1 - y0) : std::max(std::abs(y0) * 0.05, 1e-3);
    y0 -= pad;
    y1 += pad;
    const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    const auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };
    static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                     "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << xml_escape(title) << "</text>\n";
    svg << "<g stroke=\"black\">\n<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\""
        << left + pw << "\" y2=\"" << top + ph << "\"/>\n<line x1=\"" << left << "\" y1=\"" << top
        << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n</g>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = x0 + (x1 - x0) * i / 5.0;
        const double yv = y0 + (y1 - y0) * i / 5.0;
        svg << "<text x=\"" << fixed(px(xv), 2) << "\" y=\"" << top + ph + 18
            << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(yv) + 4, 2)
            << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
        << "\" text-anchor=\"middle\">epoch</text>\n";
    svg << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << top + ph / 2 << ")\">MAE</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kPalette[i % 10];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
            << (s.label.size() >= 4 && s.label.compare(s.label.size() - 4, 4, " val") == 0
                    ? " stroke-dasharray=\"6 3\""
                    : "")
            << " points=\"";
        for (std::size_t k = 0; k < s.epochs.size(); ++k) {
            svg << (k ? " " : "") << fixed(px(s.epochs[k]), 2) << "," << fixed(py(s.values[k]), 2);
        }
        svg << "\"/>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(i);
        svg << "<rect x=\"" << left + pw + 15 << "\" y=\"" << ly - 6 << "\" width=\"14\" height=\"4\" fill=\""
            << color << "\"/>\n";
        svg << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly << "\">" << xml_escape(s.label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void cmd_plot(const PlotConfig& cfg, std::ostream& log) {
    cfg.validate();
    std::vector<LossSeries> all;
    for (const std::string& path : cfg.inputs) {
        for (auto& s : read_loss_csv(path)) all.push_back(std::move(s));
    }
    const fs::path out(cfg.out);
    if (out.has_parent_path()) ensure_directory(out.parent_path().string());
    write_text_file(cfg.out, render_loss_svg(all, cfg.title));
    log << "wrote " << cfg.out << " with " << all.size() << " series\n";
}

// -------------------------------------------------------------------- bench

std::uint64_t bench_cell_seed(std::uint64_t root, ModelKind model, std::size_t size,
                              std::size_t seed_index) {
    return root ^ fnv1a64(std::string(model_kind_name(model)) + ":" + std::to_string(size) + ":" +
                          std::to_string(seed_index));
}

TrendFlags compute_trends(const std::vector<BenchCell>& cells, std::size_t seeds) {
    std::map<std::tuple<ModelKind, std::size_t, std::size_t>, Real> val;
    std::set<std::size_t> sizes;
    std::vector<ModelKind> models;
    for (const BenchCell& c : cells) {
        val[{c.model, c.data_size, c.seed_index}] = c.val_mae;
        sizes.insert(c.data_size);
        if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
    }
    TrendFlags t;
    if (sizes.empty()) return t;
    const std::size_t small = *sizes.begin(), large = *sizes.rbegin();
    const auto majority = [&](std::size_t hits) { return 3 * hits >= 2 * seeds; };
    const auto lookup = [&](ModelKind m, std::size_t size, std::size_t s) -> std::optional<Real> {
        const auto it = val.find({m, size, s});
        if (it == val.end()) return std::nullopt;
        return it->second;
    };

    t.more_data_helps_all = sizes.size() > 1;
    for (ModelKind m : models) {
        std::size_t hits = 0;
        for (std::size_t s = 0; s < seeds; ++s) {
            const auto a = lookup(m, small, s), b = lookup(m, large, s);
            if (a && b && *b <= *a) ++hits;
        }
        const bool ok = sizes.size() > 1 && majority(hits);
        t.more_data_helps.emplace_back(m, ok);
        t.more_data_helps_all = t.more_data_helps_all && ok;
    }

    std::size_t fusion = 0, best = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
        const auto nn = lookup(ModelKind::cnn_nn, large, s);
        const auto cnn = lookup(ModelKind::cnn, large, s);
        const auto base = lookup(ModelKind::baseline, large, s);
        if (nn && cnn && base && *nn < std::min(*cnn, *base)) ++fusion;
        const auto adv = lookup(ModelKind::advanced, large, s);
        if (adv && models.size() > 1) {
            bool lowest = true;
            for (ModelKind m : models) {
                if (m == ModelKind::advanced) continue;
                const auto other = lookup(m, large, s);
                lowest = lowest && other && *adv < *other;
            }
            if (lowest) ++best;
        }
    }
    t.fusion_beats_single = majority(fusion);
    t.advanced_best = majority(best);
    return t;
}

namespace {

struct CellJob {
    std::size_t size_index;
    std::size_t seed_index;
};

std::string flag(bool ok) { return ok ? "PASS" : "FAIL"; }

void write_bench_outputs(const BenchConfig& cfg, const BenchReport& report) {
    std::string csv = "model,data_size,seed_index,cell_seed,train_mae,val_mae,val_mae_all_steps,train_seconds\n";
    for (const BenchCell& c : report.cells) {
        csv += std::string(model_kind_name(c.model)) + "," + std::to_string(c.data_size) + "," +
               std::to_string(c.seed_index) + "," + std::to_string(c.cell_seed) + "," +
               g17(c.train_mae) + "," + g17(c.val_mae) + "," + g17(c.val_mae_all_steps) + "," +
               fixed(c.train_seconds, 1) + "\n";
    }
    // Aggregates: mean over seeds per (model, size).
    std::ostringstream md;
    md << "# Trend report\n\n";
    md << "Synthetic data, " << cfg.seeds << " seeds, sizes";
    for (std::size_t s : cfg.sizes) md << " " << s;
    md << " tar(s) of " << kSegmentsPerTar << " segments. Validation uses tar " << cfg.sizes.back()
       << " for every cell.\n\n";
    md << "Every cell trains on the same tars for its size, and the advanced "
          "model is not given extra data: its frozen trunk comes from the CNN cell with the same "
          "size and seed.\n\n";
    md << "val MAE is measured on the current frame of every validation window, so per-frame and "
          "windowed models are scored on the same frames.\n\n";
    md << "| Model | Data size | mean train MAE | mean val MAE | mean time |\n";
    md << "|---|---|---|---|---|\n";
    for (ModelKind m : cfg.models) {
        for (std::size_t size : cfg.sizes) {
            double tr = 0, va = 0, va_all = 0, secs = 0;
            std::size_t n = 0;
            for (const BenchCell& c : report.cells) {
                if (c.model != m || c.data_size != size) continue;
                tr += c.train_mae, va += c.val_mae, va_all += c.val_mae_all_steps, secs += c.train_seconds;
                ++n;
            }
            if (n == 0) continue;
            const double k = static_cast<double>(n);
            csv += std::string(model_kind_name(m)) + "," + std::to_string(size) + ",mean,," +
                   g17(tr / k) + "," + g17(va / k) + "," + g17(va_all / k) + "," + fixed(secs / k, 1) + "\n";
            md << "| " << model_display_name(m) << " | " << size << " | " << fixed(tr / k, 5) << " | "
               << fixed(va / k, 5) << " | " << format_duration(secs / k) << " |\n";
        }
    }
    md << "\n## Per-seed val MAE\n\n| Model | Data size |";
    for (std::size_t s = 0; s < cfg.seeds; ++s) md << " seed " << s << " |";
    md << "\n|---|---|";
    for (std::size_t s = 0; s < cfg.seeds; ++s) md << "---|";
    md << "\n";
    for (ModelKind m : cfg.models) {
        for (std::size_t size : cfg.sizes) {
            md << "| " << model_display_name(m) << " | " << size << " |";
            for (std::size_t s = 0; s < cfg.seeds; ++s) {
                for (const BenchCell& c : report.cells) {
                    if (c.model == m && c.data_size == size && c.seed_index == s) md << " " << fixed(c.val_mae, 5) << " |";
                }
            }
            md << "\n";
        }
    }
    const TrendFlags& t = report.trends;
    md << "\n## Trends (majority of seeds)\n\n";
    for (const auto& [m, ok] : t.more_data_helps) {
        md << "- " << flag(ok) << ": " << model_display_name(m) << " val MAE at " << cfg.sizes.back()
           << " tar(s) <= at " << cfg.sizes.front() << " tar(s)\n";
    }
    md << "- " << flag(t.fusion_beats_single) << ": CNN+NN val MAE below both CNN and Baseline\n";
    md << "- " << flag(t.advanced_best) << ": Advanced has the lowest val MAE\n";
    write_text_file((fs::path(cfg.out) / "bench_report.csv").string(), csv);
    write_text_file((fs::path(cfg.out) / "bench_report.md").string(), md.str());
}

}  // namespace

BenchReport cmd_bench(const BenchConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_directory(cfg.out);
    const std::size_t available = count_tars(cfg.dataset);
    const std::size_t val_tar = cfg.sizes.back();
    if (available <= val_tar) {
        throw DataError(cfg.dataset + ": bench needs " + std::to_string(val_tar + 1) + " tars (" +
                        std::to_string(val_tar) + " for training and one for validation), found " +
                        std::to_string(available));
    }
    DatasetOptions opts;
    opts.image_h = opts.image_w = cfg.image_size;
    opts.sample_stride = cfg.sample_stride;
    const std::size_t vt[] = {val_tar};
    const Dataset val = load_dataset(cfg.dataset, vt, opts);
    std::vector<Dataset> train_sets;
    for (std::size_t size : cfg.sizes) {
        std::vector<std::size_t> tars(size);
        for (std::size_t t = 0; t < size; ++t) tars[t] = t;
        train_sets.push_back(load_dataset(cfg.dataset, tars, opts));
    }

    // Cells of one (size, seed) run in model order so the advanced model can
    // reuse that group's CNN; groups are independent.
    std::vector<ModelKind> order = cfg.models;
    std::stable_sort(order.begin(), order.end(), [](ModelKind a, ModelKind b) {
        return a == ModelKind::cnn && b == ModelKind::advanced;
    });
    std::vector<CellJob> jobs;
    for (std::size_t si = 0; si < cfg.sizes.size(); ++si)
        for (std::size_t s = 0; s < cfg.seeds; ++s) jobs.push_back({si, s});
    std::vector<std::vector<BenchCell>> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    std::exception_ptr failure;

    const auto run_job = [&](const CellJob& job) {
        const std::size_t size = cfg.sizes[job.size_index];
        const Dataset& train = train_sets[job.size_index];
        const NormStats norm = fit_norm_stats(train.frames());
        const Vec3 scale = fit_target_scale(train.frames());
        std::optional<ModelGraph> cnn;
        std::vector<BenchCell> out;
        const auto train_cell = [&](ModelKind m) {
            const std::uint64_t seed = bench_cell_seed(cfg.seed, m, size, job.seed_index);
            Rng init(seed ^ fnv1a64("init"));
            ModelGraph g;
            if (m == ModelKind::advanced) {
                if (!cnn) throw Error("bench: advanced cell has no CNN base");
                g = build_advanced(*cnn, init, kDefaultWindow);
            } else {
                g = build_model(m, init, cfg.image_size, cfg.image_size, kDefaultWindow);
            }
            g.norm = norm;
            g.target_scale = scale;
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            const auto start = std::chrono::steady_clock::now();
            const auto history = fit(g, train, val, tc);
            const double secs = seconds_since(start);
            const EvalResult v = evaluate_mae(g, val);
            BenchCell c{m, size, job.seed_index, seed, history.back().train_mae, v.last_step, v.all_steps, secs};
            {
                std::lock_guard lock(log_mutex);
                log << model_display_name(m) << " size " << size << " seed " << job.seed_index
                    << ": train " << fixed(c.train_mae, 5) << " val " << fixed(c.val_mae, 5) << " ("
                    << format_duration(secs) << ")\n";
                log.flush();
            }
            if (m == ModelKind::cnn) cnn = g;
            return c;
        };
        const bool want_advanced =
            std::find(order.begin(), order.end(), ModelKind::advanced) != order.end();
        const bool want_cnn = std::find(order.begin(), order.end(), ModelKind::cnn) != order.end();
        if (want_advanced && !want_cnn) train_cell(ModelKind::cnn);  // base only, not reported
        for (ModelKind m : order) out.push_back(train_cell(m));
        return out;
    };

    const auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                results[i] = run_job(jobs[i]);
            } catch (...) {
                std::lock_guard lock(log_mutex);
                if (!failure) failure = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const std::size_t n_threads = std::min(cfg.threads, jobs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    BenchReport report;
    // Report order: model, size, seed.
    for (ModelKind m : cfg.models)
        for (std::size_t si = 0; si < cfg.sizes.size(); ++si)
            for (std::size_t s = 0; s < cfg.seeds; ++s)
                for (const BenchCell& c : results[si * cfg.seeds + s])
                    if (c.model == m) report.cells.push_back(c);
    report.trends = compute_trends(report.cells, cfg.seeds);
    write_bench_outputs(cfg, report);
    log << "trend more-data: " << flag(report.trends.more_data_helps_all)
        << "  fusion: " << flag(report.trends.fusion_beats_single)
        << "  advanced-best: " << flag(report.trends.advanced_best) << "\n";
    return report;
}

}  // namespace avaccel
