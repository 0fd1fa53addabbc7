#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avaccel/model.hpp"
#include "avaccel/segment.hpp"

namespace avaccel {

/**
 * Training samples drawn from segments. Every sample is a window of
 * `window` consecutive feature frames (frames 1..n-1 of a segment, since
 * frame 0 has no target); per-frame models read only its last frame, so all
 * models are scored on the same frames.
 *
 * Images are stored once per frame, already resized to the model size, as
 * 32-bit floats. A dataset with image size 0x0 keeps no images.
 */
class Dataset {
public:
    Dataset(std::size_t image_h, std::size_t image_w, std::size_t window = kDefaultWindow);

    /// Keeps every `sample_stride`-th window start of the segment.
    void add_segment(const Segment& seg, std::size_t sample_stride = 1);

    std::size_t image_h() const noexcept { return image_h_; }
    std::size_t image_w() const noexcept { return image_w_; }
    std::size_t window() const noexcept { return window_; }
    std::size_t sample_count() const noexcept { return starts_.size(); }
    bool empty() const noexcept { return starts_.empty(); }
    std::size_t frame_count() const noexcept { return frames_.size(); }

    /// Every stored feature frame, in segment order.
    std::span<const FeatureVector> frames() const noexcept { return frames_; }
    /// Index into frames() of the first frame of sample i.
    std::size_t sample_start(std::size_t i) const { return starts_.at(i); }
    /// Image of stored frame f as [h, w, 3].
    Tensor frame_image(std::size_t f) const;

    /// Writes the h*w*3 pixels of stored frame f to dst.
    void copy_image(std::size_t f, Real* dst) const;

    /// Samples restricted to the given indices, in that order.
    Dataset subset(std::span<const std::size_t> samples) const;

private:
    std::size_t image_h_, image_w_, window_;
    std::vector<FeatureVector> frames_;
    std::vector<float> pixels_;
    std::vector<std::size_t> starts_;
};

struct Batch {
    ModelInput input;
    Tensor targets;  // [b, 3] or, windowed, [b, t, 3]
};

/// Assembles the inputs `kind` consumes for the listed samples.
Batch gather_batch(const Dataset& data, ModelKind kind, std::span<const std::size_t> samples);

struct EvalResult {
    Real all_steps = 0;  // mean |error| over every output element
    Real last_step = 0;  // same, current frame only
    std::size_t samples = 0;
};

/// Eval-mode MAE over the whole dataset in fixed batches of `batch_size`.
EvalResult evaluate_mae(const ModelGraph& g, const Dataset& data, std::size_t batch_size = 64);

// ---------------------------------------------------------------- on-disk datasets

/// "<root>/tar_NNN".
std::string tar_directory(const std::string& root, std::size_t tar);
/// Number of consecutive tar_NNN directories starting at tar_000.
std::size_t count_tars(const std::string& root);
/// Sorted `.avsg` paths of one tar. Throws DataError when the tar is missing.
std::vector<std::string> tar_segment_paths(const std::string& root, std::size_t tar);

struct DatasetOptions {
    std::size_t image_h = kDefaultImageSize;  // 0 keeps no images
    std::size_t image_w = kDefaultImageSize;
    std::size_t window = kDefaultWindow;
    std::size_t sample_stride = 1;
};

Dataset load_dataset(const std::string& root, std::span<const std::size_t> tars,
                     const DatasetOptions& opts);

/// FNV-1a over the sorted relative paths and contents of every file below root.
std::uint64_t dataset_hash(const std::string& root);

// ---------------------------------------------------------------- statistics

struct DatasetStats {
    std::size_t segments = 0;
    std::size_t frames = 0;
    /// Windows of `window` consecutive frames: frames - window + 1 per segment.
    std::size_t windows = 0;
    /// Windows whose every frame has a target: frames - window per segment.
    std::size_t training_windows = 0;
    double lead_fraction = 0;  // fraction of frames with a front vehicle
    FeatureValues feature_min, feature_mean, feature_max;
    Vec3 accel_min, accel_max;
    /// Longitudinal acceleration histogram over [accel_min.x, accel_max.x].
    std::vector<std::size_t> accel_x_histogram;
};

/// Throws DataError on an empty input.
DatasetStats dataset_stats(std::span<const Segment> segments, std::size_t window = kDefaultWindow,
                           std::size_t histogram_bins = 10);
std::string format_stats(const DatasetStats& stats);

}  // namespace avaccel
