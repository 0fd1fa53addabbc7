#include "avaccel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace avaccel {

namespace {

constexpr double kDt = 1.0 / kFrameRateHz;
constexpr double kMaxBraking = 9.0;  // m/s^2, physical limit on IDM output

double quantize(double v) { return std::ldexp(std::nearbyint(std::ldexp(v, 20)), -20); }

struct LateralState {
    double offset = 0.0;
    double velocity = 0.0;

    void step(const LateralParams& p, Rng& rng) {
        if (rng.uniform() < p.kick_rate_hz * kDt) velocity += rng.normal(0.0, p.kick_sigma);
        velocity += (-p.stiffness * offset - p.damping * velocity) * kDt;
        offset += velocity * kDt;
    }
};

class LeadSpeed {
public:
    LeadSpeed(const LeadProfile& p, Rng& rng)
        : p_(p),
          base_(p.base_speed * rng.uniform(0.7, 1.3)),
          phase_(rng.uniform(0.0, 2.0 * std::numbers::pi)),
          noise_(rng.normal(0.0, p.noise_sigma)) {}

    double at(double t) const {
        return std::max(0.0, base_ + p_.amplitude * std::sin(2.0 * std::numbers::pi * t /
                                                                 p_.period_s + phase_) +
                                 noise_);
    }
    void advance(Rng& rng) {
        constexpr double rho = 0.95;
        noise_ = rho * noise_ + rng.normal(0.0, p_.noise_sigma * std::sqrt(1.0 - rho * rho));
    }

private:
    LeadProfile p_;
    double base_;
    double phase_;
    double noise_;
};

}  // namespace

std::size_t ScenarioConfig::frame_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * kFrameRateHz));
}

void ScenarioConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v)) {
            throw ConfigError(std::string("scenario: ") + name + " must be positive");
        }
    };
    positive(duration_s, "duration_s");
    positive(vehicle_length_m, "vehicle_length_m");
    positive(idm.desired_speed, "idm.desired_speed");
    positive(idm.time_headway, "idm.time_headway");
    positive(idm.min_gap, "idm.min_gap");
    positive(idm.max_accel, "idm.max_accel");
    positive(idm.comfortable_decel, "idm.comfortable_decel");
    positive(idm.exponent, "idm.exponent");
    positive(lead.base_speed, "lead.base_speed");
    positive(lead.period_s, "lead.period_s");
    positive(lateral.stiffness, "lateral.stiffness");
    positive(lateral.damping, "lateral.damping");
    positive(camera.height_m, "camera.height_m");
    positive(camera.lane_half_width_m, "camera.lane_half_width_m");
    positive(camera.vehicle_width_m, "camera.vehicle_width_m");
    if (lead_probability < 0 || lead_probability > 1) {
        throw ConfigError("scenario: lead_probability must lie in [0, 1]");
    }
    if (lead.amplitude < 0 || accel_noise_sigma < 0 || lead.noise_sigma < 0 || lateral.kick_rate_hz < 0 ||
        lateral.kick_sigma < 0 || lateral.initial_offset < 0 || lateral.vertical_sigma < 0 ||
        camera.pixel_noise < 0) {
        throw ConfigError("scenario: noise and amplitude settings must be non-negative");
    }
    if (!(camera.shoulder_value >= 0 && camera.shoulder_value <= 1)) {
        throw ConfigError("scenario: camera.shoulder_value must lie in [0, 1]");
    }
    if (frame_count() < 2) {
        throw ConfigError("scenario: duration must cover at least 2 frames");
    }
    if (image_h == 0 || image_w == 0 || image_h % 2 || image_w % 2 || image_h > 0xffff ||
        image_w > 0xffff) {
        throw ConfigError("scenario: image size must be even and positive");
    }
}

double idm_acceleration(const IdmParams& p, double v, std::optional<double> gap,
                        double lead_speed) {
    double a = 1.0 - std::pow(v / p.desired_speed, p.exponent);
    if (gap) {
        const double dv = v - lead_speed;
        const double s_star = p.min_gap + v * p.time_headway +
                              v * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
        const double ratio = std::max(s_star, 0.0) / *gap;
        a -= ratio * ratio;
    }
    return p.max_accel * a;
}

double lead_width_px_unclamped(double distance_m, const ScenarioConfig& cfg) {
    return static_cast<double>(cfg.image_w) * cfg.camera.vehicle_width_m / distance_m;
}

double lead_width_px(double distance_m, const ScenarioConfig& cfg) {
    return std::clamp(lead_width_px_unclamped(distance_m, cfg), 2.0,
                      static_cast<double>(cfg.image_w) / 2.0);
}

Tensor render_frame_image(const std::optional<LeadView>& lead, double ego_lane_offset_m,
                          const ScenarioConfig& cfg, Rng& noise) {
    const std::size_t h = cfg.image_h, w = cfg.image_w;
    const double focal = static_cast<double>(w);
    const double cx = static_cast<double>(w) / 2.0;
    const std::size_t horizon = h / 2;
    const CameraParams& cam = cfg.camera;

    std::vector<double> scene(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        std::fill_n(scene.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                    r < horizon ? 0.8 : 0.3);
    }
    // A ground point (X, Z) projects to row horizon + f H / Z and column
    // cx + f X / Z, so a lane edge at lateral X crosses row r at
    // cx + X (r - horizon) / H.
    for (std::size_t r = horizon; r < h; ++r) {
        const double depth = static_cast<double>(r - horizon) + 0.5;
        // Shoulder outside the lane, weighted by pixel coverage so that the
        // edge position survives downsampling.
        const double left = cx + (-cam.lane_half_width_m - ego_lane_offset_m) * depth / cam.height_m;
        const double right = cx + (cam.lane_half_width_m - ego_lane_offset_m) * depth / cam.height_m;
        for (std::size_t c = 0; c < w; ++c) {
            const double x0 = static_cast<double>(c);
            const double outside = std::clamp(left - x0, 0.0, 1.0) + std::clamp(x0 + 1.0 - right, 0.0, 1.0);
            scene[r * w + c] += (cam.shoulder_value - 0.3) * std::min(outside, 1.0);
        }
        for (double edge : {-cam.lane_half_width_m, cam.lane_half_width_m}) {
            const double col = cx + (edge - ego_lane_offset_m) * depth / cam.height_m;
            if (col >= 0 && col < static_cast<double>(w)) {
                scene[r * w + static_cast<std::size_t>(col)] = 0.9;
            }
        }
    }
    if (lead && lead->distance_m > 0) {
        const double width = lead_width_px(lead->distance_m, cfg);
        const double height = 0.75 * width;
        const double bottom = static_cast<double>(horizon) + focal * cam.height_m / lead->distance_m;
        const double center = cx + focal * lead->lateral_offset_m / lead->distance_m;
        for (std::size_t r = 0; r < h; ++r) {
            const double y = static_cast<double>(r) + 0.5;
            if (y < bottom - height || y >= bottom) continue;
            for (std::size_t c = 0; c < w; ++c) {
                const double x = static_cast<double>(c) + 0.5;
                if (std::abs(x - center) < width / 2.0) scene[r * w + c] = 0.1;
            }
        }
    }
    Tensor img({h, w, 3});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = scene[i] + (cam.pixel_noise > 0
                                             ? noise.uniform(-cam.pixel_noise, cam.pixel_noise)
                                             : 0.0);
            img[i * 3 + ch] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

GeneratedTrace generate_synthetic_trace(const ScenarioConfig& cfg, std::uint64_t seed,
                                        std::uint64_t segment_id) {
    cfg.validate();
    Rng rng(seed);
    std::uint64_t render_seed = seed ^ 0x5deece66dULL;
    Rng render_rng(splitmix64(render_seed));

    const IdmParams& idm = cfg.idm;
    const bool has_lead = rng.uniform() < cfg.lead_probability;
    LeadSpeed lead_speed(cfg.lead, rng);

    double t = 0.0;
    double v_lead = lead_speed.at(0.0);
    double v = 0.0;
    double x = 0.0;
    double x_lead = 0.0;
    if (has_lead) {
        v = v_lead * rng.uniform(0.6, 1.1);
        const double gap = idm.min_gap + v * idm.time_headway + rng.uniform(5.0, 25.0);
        x_lead = gap + cfg.vehicle_length_m;
    } else {
        v = rng.uniform(0.0, idm.desired_speed);
    }
    LateralState ego, lead;
    ego.offset = rng.uniform(-cfg.lateral.initial_offset, cfg.lateral.initial_offset);
    lead.offset = rng.uniform(-cfg.lateral.initial_offset, cfg.lateral.initial_offset);

    GeneratedTrace trace;
    Segment& seg = trace.segment;
    seg.segment_id = segment_id;
    const std::size_t n = cfg.frame_count();
    seg.frames.reserve(n);
    Vec3 prev_front = Vec3::Zero();
    for (std::size_t k = 0; k < n; ++k) {
        FrameRecord f;
        f.frame_index = static_cast<std::uint32_t>(k);
        f.av_velocity = Vec3(quantize(v), quantize(ego.velocity),
                             quantize(rng.normal(0.0, cfg.lateral.vertical_sigma)));
        std::optional<LeadView> view;
        if (has_lead) {
            f.front_present = true;
            f.front_velocity = Vec3(quantize(v_lead), quantize(lead.velocity), 0.0);
            f.front_accel = k == 0 ? Vec3::Zero() : Vec3(f.front_velocity - prev_front);
            prev_front = f.front_velocity;
            f.rel_distance = Vec2(quantize(x_lead - x), quantize(lead.offset - ego.offset));
            view = LeadView{x_lead - x, lead.offset - ego.offset};
            trace.gaps.push_back(x_lead - x - cfg.vehicle_length_m);
        }
        f.image = render_frame_image(view, ego.offset, cfg, render_rng);
        seg.frames.push_back(std::move(f));

        if (k + 1 == n) break;
        std::optional<double> gap;
        if (has_lead) gap = x_lead - x - cfg.vehicle_length_m;
        const double a = std::max(idm_acceleration(idm, v, gap, v_lead) +
                                      rng.normal(0.0, cfg.accel_noise_sigma),
                                  -kMaxBraking);
        const double v_next = std::max(0.0, v + a * kDt);
        x += 0.5 * (v + v_next) * kDt;
        v = v_next;

        t += kDt;
        lead_speed.advance(rng);
        const double v_lead_next = lead_speed.at(t);
        x_lead += 0.5 * (v_lead + v_lead_next) * kDt;
        v_lead = v_lead_next;

        ego.step(cfg.lateral, rng);
        lead.step(cfg.lateral, rng);
    }
    return trace;
}

Segment generate_synthetic_segment(const ScenarioConfig& cfg, std::uint64_t seed,
                                   std::uint64_t segment_id) {
    return generate_synthetic_trace(cfg, seed, segment_id).segment;
}

}  // namespace avaccel
