#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "avaccel/tensor.hpp"

namespace avaccel {

using Vec2 = Eigen::Matrix<Real, 2, 1>;
using Vec3 = Eigen::Matrix<Real, 3, 1>;

inline constexpr std::size_t kFeatureCount = 11;
inline constexpr std::size_t kTargetCount = 3;
inline constexpr std::size_t kDefaultWindow = 5;

using FeatureValues = Eigen::Matrix<Real, kFeatureCount, 1>;

/// Feature order inside every FeatureValues vector.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "vx", "vy", "vz", "dx", "dy", "vfx", "vfy", "vfz", "afx", "afy", "afz"};

/// Index of the first front-vehicle entry (dx); entries from here on are
/// zero when no vehicle is ahead.
inline constexpr std::size_t kFirstFrontFeature = 3;

/// One timestep of driving data.
///
/// Velocities are m/s; front_accel is the front vehicle's velocity change
/// between consecutive frames; rel_distance is the front vehicle's position
/// minus the AV's (m). When front_present is false all front fields are zero.
struct FrameRecord {
    std::uint32_t frame_index = 0;
    Vec3 av_velocity = Vec3::Zero();
    bool front_present = false;
    Vec3 front_velocity = Vec3::Zero();
    Vec3 front_accel = Vec3::Zero();
    Vec2 rel_distance = Vec2::Zero();
    Tensor image;  // [h, w, 3], values in [0, 1]
};

struct FeatureVector {
    FeatureValues values = FeatureValues::Zero();
    Vec3 target = Vec3::Zero();  // AV acceleration, m/s per frame
};

/// a_curr = v_curr - v_prev (per frame, not divided by the frame period).
inline Vec3 compute_acceleration(const Vec3& v_curr, const Vec3& v_prev) {
    return v_curr - v_prev;
}

/// Requires curr.frame_index == prev.frame_index + 1.
FeatureVector build_feature_vector(const FrameRecord& curr, const FrameRecord& prev);

/// Area-averaging (box filter) resize to a size no larger than the input.
Tensor downsample_image(const Tensor& img, std::size_t out_h, std::size_t out_w);

/// Start offsets of every stride-1 window of `window` items over `length`
/// items. Throws when length < window.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window = kDefaultWindow);

struct WindowSample {
    std::vector<FeatureVector> frames;
    std::vector<Tensor> images;

    /// Per-timestep targets as [window, 3].
    Tensor targets() const;
};

/// Sliding windows (stride 1) over one segment's feature/image sequence.
std::vector<WindowSample> make_windows(std::span<const FeatureVector> features,
                                       std::span<const Tensor> images,
                                       std::size_t window = kDefaultWindow);

/// Per-feature z-score statistics from the training split.
struct NormStats {
    FeatureValues mean = FeatureValues::Zero();
    FeatureValues std = FeatureValues::Ones();
};

/// Population statistics. A feature that is constant over the training set
/// keeps its mean but gets std 1.
NormStats fit_norm_stats(std::span<const FeatureVector> train);
/// Per-component population std of the targets, 1 where a component is
/// constant.
Vec3 fit_target_scale(std::span<const FeatureVector> train);
FeatureValues apply_norm(const FeatureValues& v, const NormStats& stats);
FeatureValues denormalize(const FeatureValues& z, const NormStats& stats);

}  // namespace avaccel
