#include "avaccel/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "avaccel/bytes.hpp"

namespace avaccel {

namespace fs = std::filesystem;

Dataset::Dataset(std::size_t image_h, std::size_t image_w, std::size_t window)
    : image_h_(image_h), image_w_(image_w), window_(window) {
    if (window == 0) throw ConfigError("dataset window must be at least 1");
    if ((image_h == 0) != (image_w == 0)) {
        throw ConfigError("dataset image size must be 0x0 or fully positive");
    }
}

void Dataset::add_segment(const Segment& seg, std::size_t sample_stride) {
    if (sample_stride == 0) throw ConfigError("sample_stride must be at least 1");
    const auto features = segment_features(seg);
    if (features.size() < window_) return;
    const std::size_t base = frames_.size();
    const std::size_t pixels_per_frame = image_h_ * image_w_ * 3;
    if (pixels_per_frame > 0) {
        pixels_.reserve(pixels_.size() + features.size() * pixels_per_frame);
        for (std::size_t i = 1; i < seg.frames.size(); ++i) {
            const Tensor img = downsample_image(seg.frames[i].image, image_h_, image_w_);
            for (Real v : img.values()) pixels_.push_back(static_cast<float>(v));
        }
    }
    frames_.insert(frames_.end(), features.begin(), features.end());
    const auto starts = window_starts(features.size(), window_);
    for (std::size_t i = 0; i < starts.size(); i += sample_stride) {
        starts_.push_back(base + starts[i]);
    }
}

void Dataset::copy_image(std::size_t f, Real* dst) const {
    const std::size_t n = image_h_ * image_w_ * 3;
    if (n == 0 || f >= frames_.size()) {
        throw ShapeError("dataset: no image stored for frame " + std::to_string(f));
    }
    const float* src = pixels_.data() + f * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<Real>(src[i]);
}

Tensor Dataset::frame_image(std::size_t f) const {
    Tensor img({image_h_, image_w_, 3});
    copy_image(f, img.data());
    return img;
}

Dataset Dataset::subset(std::span<const std::size_t> samples) const {
    Dataset out = *this;
    out.starts_.clear();
    for (std::size_t i : samples) out.starts_.push_back(starts_.at(i));
    return out;
}

Batch gather_batch(const Dataset& data, ModelKind kind, std::span<const std::size_t> samples) {
    if (samples.empty()) throw ShapeError("gather_batch: no samples");
    const bool windowed = is_windowed(kind);
    const std::size_t b = samples.size();
    const std::size_t t = windowed ? data.window() : 1;
    const std::size_t skip = data.window() - t;  // per-frame models read the last frame
    const std::size_t h = data.image_h(), w = data.image_w();
    const std::size_t pixels = h * w * 3;

    Batch batch;
    if (uses_images(kind)) {
        if (pixels == 0) throw ShapeError("gather_batch: dataset holds no images");
        batch.input.images = windowed ? Tensor({b, t, h, w, 3}) : Tensor({b, h, w, 3});
    }
    if (uses_features(kind)) {
        batch.input.features =
            windowed ? Tensor({b, t, kFeatureCount}) : Tensor({b, kFeatureCount});
    }
    batch.targets = windowed ? Tensor({b, t, kTargetCount}) : Tensor({b, kTargetCount});
    const auto frames = data.frames();
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t first = data.sample_start(samples[i]) + skip;
        for (std::size_t s = 0; s < t; ++s) {
            const std::size_t row = i * t + s;
            const FeatureVector& fv = frames[first + s];
            if (uses_images(kind)) data.copy_image(first + s, batch.input.images.data() + row * pixels);
            if (uses_features(kind)) {
                for (std::size_t k = 0; k < kFeatureCount; ++k) {
                    batch.input.features[row * kFeatureCount + k] =
                        fv.values[static_cast<Eigen::Index>(k)];
                }
            }
            for (std::size_t k = 0; k < kTargetCount; ++k) {
                batch.targets[row * kTargetCount + k] = fv.target[static_cast<Eigen::Index>(k)];
            }
        }
    }
    return batch;
}

EvalResult evaluate_mae(const ModelGraph& g, const Dataset& data, std::size_t batch_size) {
    if (data.empty()) throw DataError("evaluate_mae: empty dataset");
    if (batch_size == 0) throw ConfigError("evaluate_mae: batch size must be positive");
    double all_sum = 0, last_sum = 0;
    std::size_t all_n = 0, last_n = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < data.sample_count(); begin += batch_size) {
        const std::size_t end = std::min(data.sample_count(), begin + batch_size);
        idx.clear();
        for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
        const Batch batch = gather_batch(data, g.kind, idx);
        const Tensor out = predict(g, batch.input);
        if (out.shape() != batch.targets.shape()) {
            throw ShapeError("evaluate_mae: output " + shape_string(out.shape()) + " vs target " +
                             shape_string(batch.targets.shape()));
        }
        const std::size_t t = out.rank() == 3 ? out.extent(1) : 1;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t s = 0; s < t; ++s) {
                for (std::size_t k = 0; k < kTargetCount; ++k) {
                    const std::size_t e = (r * t + s) * kTargetCount + k;
                    const double d = std::abs(static_cast<double>(out[e]) -
                                              static_cast<double>(batch.targets[e]));
                    all_sum += d;
                    if (s + 1 == t) last_sum += d;
                }
            }
        }
        all_n += idx.size() * t * kTargetCount;
        last_n += idx.size() * kTargetCount;
    }
    EvalResult r;
    r.all_steps = static_cast<Real>(all_sum / static_cast<double>(all_n));
    r.last_step = static_cast<Real>(last_sum / static_cast<double>(last_n));
    r.samples = data.sample_count();
    if (!std::isfinite(r.all_steps)) throw NumericError("evaluate_mae: non-finite MAE");
    return r;
}

// ---------------------------------------------------------------- on-disk datasets

std::string tar_directory(const std::string& root, std::size_t tar) {
    char name[32];
    std::snprintf(name, sizeof name, "tar_%03zu", tar);
    return (fs::path(root) / name).string();
}

std::size_t count_tars(const std::string& root) {
    std::size_t n = 0;
    while (fs::is_directory(tar_directory(root, n))) ++n;
    return n;
}

std::vector<std::string> tar_segment_paths(const std::string& root, std::size_t tar) {
    const std::string dir = tar_directory(root, tar);
    if (!fs::is_directory(dir)) throw DataError(dir + ": no such tar directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".avsg") {
            paths.push_back(entry.path().string());
        }
    }
    if (paths.empty()) throw DataError(dir + ": contains no .avsg segments");
    std::sort(paths.begin(), paths.end());
    return paths;
}

Dataset load_dataset(const std::string& root, std::span<const std::size_t> tars,
                     const DatasetOptions& opts) {
    Dataset data(opts.image_h, opts.image_w, opts.window);
    for (std::size_t tar : tars) {
        for (const std::string& path : tar_segment_paths(root, tar)) {
            data.add_segment(load_segment(path), opts.sample_stride);
        }
    }
    if (data.empty()) {
        throw DataError(root + ": selected tars yield no " + std::to_string(opts.window) +
                        "-frame samples");
    }
    return data;
}

std::uint64_t dataset_hash(const std::string& root) {
    if (!fs::is_directory(root)) throw DataError(root + ": no such dataset directory");
    std::vector<std::string> rel;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) {
            rel.push_back(fs::relative(entry.path(), root).generic_string());
        }
    }
    std::sort(rel.begin(), rel.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::string& r : rel) {
        h = fnv1a64(r, h);
        const auto bytes = read_file((fs::path(root) / r).string());
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                    h);
    }
    return h;
}

// ---------------------------------------------------------------- statistics

DatasetStats dataset_stats(std::span<const Segment> segments, std::size_t window,
                           std::size_t histogram_bins) {
    if (segments.empty()) throw DataError("dataset_stats: no segments");
    if (window == 0 || histogram_bins == 0) {
        throw ConfigError("dataset_stats: window and bin count must be positive");
    }
    DatasetStats s;
    constexpr Real inf = std::numeric_limits<Real>::infinity();
    s.feature_min.setConstant(inf);
    s.feature_max.setConstant(-inf);
    s.feature_mean.setZero();
    s.accel_min.setConstant(inf);
    s.accel_max.setConstant(-inf);
    std::size_t lead_frames = 0, feature_rows = 0;
    std::vector<Real> ax;
    for (const Segment& seg : segments) {
        ++s.segments;
        const std::size_t n = seg.frames.size();
        s.frames += n;
        if (n >= window) s.windows += n - window + 1;
        if (n > window) s.training_windows += n - window;
        for (const FrameRecord& f : seg.frames) lead_frames += f.front_present ? 1 : 0;
        for (const FeatureVector& fv : segment_features(seg)) {
            s.feature_min = s.feature_min.cwiseMin(fv.values);
            s.feature_max = s.feature_max.cwiseMax(fv.values);
            s.feature_mean += fv.values;
            s.accel_min = s.accel_min.cwiseMin(fv.target);
            s.accel_max = s.accel_max.cwiseMax(fv.target);
            ax.push_back(fv.target.x());
            ++feature_rows;
        }
    }
    if (s.frames == 0) throw DataError("dataset_stats: segments hold no frames");
    s.lead_fraction = static_cast<double>(lead_frames) / static_cast<double>(s.frames);
    if (feature_rows > 0) {
        s.feature_mean /= static_cast<Real>(feature_rows);
        s.accel_x_histogram.assign(histogram_bins, 0);
        const Real lo = s.accel_min.x(), span = s.accel_max.x() - lo;
        for (Real a : ax) {
            std::size_t bin = span > 0 ? static_cast<std::size_t>((a - lo) / span *
                                                                  static_cast<Real>(histogram_bins))
                                       : 0;
            s.accel_x_histogram[std::min(bin, histogram_bins - 1)]++;
        }
    } else {
        s.feature_min.setZero();
        s.feature_max.setZero();
        s.accel_min.setZero();
        s.accel_max.setZero();
    }
    return s;
}

std::string format_stats(const DatasetStats& s) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line,
                  "segments %zu\nframes %zu\nwindows %zu\ntraining_windows %zu\n"
                  "lead_fraction %.4f\n",
                  s.segments, s.frames, s.windows, s.training_windows, s.lead_fraction);
    out += line;
    out += "feature min mean max\n";
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        std::snprintf(line, sizeof line, "  %-4s %12.6g %12.6g %12.6g\n",
                      std::string(kFeatureNames[k]).c_str(),
                      static_cast<double>(s.feature_min[i]),
                      static_cast<double>(s.feature_mean[i]),
                      static_cast<double>(s.feature_max[i]));
        out += line;
    }
    static constexpr const char* axes[] = {"ax", "ay", "az"};
    out += "acceleration min max\n";
    for (int k = 0; k < 3; ++k) {
        std::snprintf(line, sizeof line, "  %-4s %12.6g %12.6g\n", axes[k],
                      static_cast<double>(s.accel_min[k]), static_cast<double>(s.accel_max[k]));
        out += line;
    }
    out += "ax histogram";
    for (std::size_t c : s.accel_x_histogram) out += " " + std::to_string(c);
    out += "\n";
    return out;
}

}  // namespace avaccel
