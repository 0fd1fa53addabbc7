#pragma once

#include <cstdint>
#include <optional>

#include "avaccel/rng.hpp"
#include "avaccel/segment.hpp"

namespace avaccel {

/// Intelligent Driver Model parameters (SI units).
struct IdmParams {
    double desired_speed = 15.0;     // v0, m/s
    double time_headway = 1.5;       // T, s
    double min_gap = 2.0;            // s0, m
    double max_accel = 1.5;          // a_max, m/s^2
    double comfortable_decel = 2.0;  // b, m/s^2
    double exponent = 4.0;           // delta
};

/// Lead-vehicle speed: base + amplitude*sin(2 pi t / period + phase) + noise,
/// where the noise is an AR(1) process with stationary deviation noise_sigma.
struct LeadProfile {
    double base_speed = 10.0;
    double amplitude = 4.0;
    double period_s = 12.0;
    double noise_sigma = 0.3;
};

/// Lane keeping of both vehicles: a damped spring pulling the lateral offset
/// back to the lane centre, excited by occasional random lateral kicks.
struct LateralParams {
    double stiffness = 0.8;     // 1/s^2
    double damping = 0.6;       // 1/s
    double kick_rate_hz = 0.2;  // expected kicks per second
    double kick_sigma = 0.35;   // m/s, lateral velocity change per kick
    double initial_offset = 0.6;  // |y0| bound, m
    double vertical_sigma = 0.01;  // m/s, per-frame vertical velocity noise
};

/// Pinhole camera looking down the lane; the focal length equals the image
/// width in pixels.
struct CameraParams {
    double height_m = 1.5;
    double lane_half_width_m = 1.75;
    double vehicle_width_m = 1.8;
    double shoulder_value = 0.55;  // ground outside the lane
    double pixel_noise = 0.02;  // amplitude of uniform per-pixel noise
};

struct ScenarioConfig {
    double duration_s = 20.0;
    double lead_probability = 0.7;
    double vehicle_length_m = 4.5;
    /// White noise (m/s^2) added to the AV's IDM acceleration each step.
    double accel_noise_sigma = 0.3;
    IdmParams idm;
    LeadProfile lead;
    LateralParams lateral;
    CameraParams camera;
    std::size_t image_h = 64;
    std::size_t image_w = 64;

    std::size_t frame_count() const;
    /// Throws ConfigError on non-positive physical values or odd image sizes.
    void validate() const;
};

/// IDM acceleration (m/s^2). Without a leader the interaction term is absent.
///   a = a_max [1 - (v/v0)^delta - (s*/s)^2],
///   s* = s0 + v T + v dv / (2 sqrt(a_max b)),  dv = v - v_lead
double idm_acceleration(const IdmParams& p, double v, std::optional<double> gap,
                        double lead_speed);

struct LeadView {
    double distance_m;        // longitudinal, front minus AV
    double lateral_offset_m;  // lateral, front minus AV
};

/// Lead-vehicle width in pixels before clamping: f * vehicle_width / distance.
double lead_width_px_unclamped(double distance_m, const ScenarioConfig& cfg);
/// clamp(unclamped, 2, w/2).
double lead_width_px(double distance_m, const ScenarioConfig& cfg);

/// Deterministic scene: sky (0.8) above the horizon row h/2, road (0.3)
/// below with the shoulder outside the lane, lane edges (0.9) in perspective
/// shifted by the AV's lane offset, the lead vehicle as a dark (0.1)
/// rectangle, then uniform pixel noise, clamped to [0, 1].
Tensor render_frame_image(const std::optional<LeadView>& lead, double ego_lane_offset_m,
                          const ScenarioConfig& cfg, Rng& noise);

/// Car-following drive at 10 Hz. Recorded velocities and distances are
/// quantized to multiples of 2^-20 so that per-frame velocity differences
/// and their sums are exact in double precision.
Segment generate_synthetic_segment(const ScenarioConfig& cfg, std::uint64_t seed,
                                   std::uint64_t segment_id);

/// A generated segment with the simulated bumper-to-bumper gap per frame.
struct GeneratedTrace {
    Segment segment;
    std::vector<double> gaps;  // empty when no lead vehicle
};
GeneratedTrace generate_synthetic_trace(const ScenarioConfig& cfg, std::uint64_t seed,
                                        std::uint64_t segment_id);

}  // namespace avaccel
