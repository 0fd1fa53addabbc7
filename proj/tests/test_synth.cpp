#include <gtest/gtest.h>

#include <cmath>

#include "avaccel/synth.hpp"

using namespace avaccel;

namespace {

ScenarioConfig small_config() {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 32;
    return cfg;
}

// Dark (lead-vehicle) pixels in one row, channel 0.
double count_dark(const Tensor& img, std::size_t row) {
    double n = 0;
    for (std::size_t c = 0; c < img.extent(1); ++c) n += img.at({row, c, 0}) < 0.2;
    return n;
}

}  // namespace

TEST(Idm, FreeRoadFixedPointAtDesiredSpeed) {
    const IdmParams p;
    EXPECT_NEAR(idm_acceleration(p, p.desired_speed, std::nullopt, 0), 0, 1e-12);
    EXPECT_NEAR(idm_acceleration(p, 0, std::nullopt, 0), p.max_accel, 1e-12);
}

TEST(Idm, EquilibriumGapGivesZeroAcceleration) {
    // Following at equal speed: a = 0 when (s0 + vT)^2 / s^2 = 1 - (v/v0)^4.
    const IdmParams p;
    const double v = 10;
    const double s = (p.min_gap + v * p.time_headway) / std::sqrt(1 - std::pow(v / p.desired_speed, 4));
    EXPECT_NEAR(idm_acceleration(p, v, s, v), 0, 1e-12);
    EXPECT_LT(idm_acceleration(p, v, s * 0.5, v), 0);
    EXPECT_GT(idm_acceleration(p, v, s * 2, v), 0);
    // Closing in brakes harder than holding speed.
    EXPECT_LT(idm_acceleration(p, v, s, v - 3), idm_acceleration(p, v, s, v));
}

TEST(Synth, DeterministicPerSeed) {
    const ScenarioConfig cfg = small_config();
    const auto a = encode_segment(generate_synthetic_segment(cfg, 11, 1));
    const auto b = encode_segment(generate_synthetic_segment(cfg, 11, 1));
    const auto c = encode_segment(generate_synthetic_segment(cfg, 12, 1));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(Synth, FrameCountAndIndices) {
    const ScenarioConfig cfg = small_config();
    const Segment seg = generate_synthetic_segment(cfg, 1, 5);
    EXPECT_EQ(seg.segment_id, 5u);
    ASSERT_EQ(seg.frames.size(), 200u);
    for (std::size_t i = 0; i < seg.frames.size(); ++i) {
        EXPECT_EQ(seg.frames[i].frame_index, i);
        EXPECT_EQ(seg.frames[i].image.shape(), (Shape{32, 32, 3}));
    }
}

TEST(Synth, GapStaysPositiveAndSpeedsNonNegative) {
    const ScenarioConfig cfg = small_config();
    std::size_t with_lead = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const GeneratedTrace t = generate_synthetic_trace(cfg, seed, seed);
        if (!t.gaps.empty()) ++with_lead;
        for (double g : t.gaps) ASSERT_GT(g, 0) << "seed " << seed;
        for (const auto& f : t.segment.frames) ASSERT_GE(f.av_velocity[0], 0);
    }
    EXPECT_GT(with_lead, 20u);
    EXPECT_LT(with_lead, 60u);
}

TEST(Synth, FrontAccelIsFrontVelocityDifference) {
    const ScenarioConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Segment seg = generate_synthetic_segment(cfg, seed, seed);
        if (!seg.frames[0].front_present) continue;
        EXPECT_EQ(seg.frames[0].front_accel, Vec3::Zero());
        for (std::size_t i = 1; i < seg.frames.size(); ++i) {
            EXPECT_EQ(seg.frames[i].front_accel,
                      Vec3(seg.frames[i].front_velocity - seg.frames[i - 1].front_velocity));
        }
    }
}

TEST(Synth, RecordedValuesAreQuantized) {
    const Segment seg = generate_synthetic_segment(small_config(), 4, 4);
    for (const auto& f : seg.frames) {
        for (int k = 0; k < 3; ++k) {
            const double scaled = f.av_velocity[k] * 1048576.0;
            EXPECT_EQ(scaled, std::round(scaled));
        }
    }
}

TEST(Render, LeadWidthInverselyProportionalToDistance) {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 64;
    EXPECT_DOUBLE_EQ(lead_width_px_unclamped(10, cfg) / lead_width_px_unclamped(40, cfg), 4.0);
    EXPECT_EQ(lead_width_px(0.1, cfg), 32);
    EXPECT_EQ(lead_width_px(1e4, cfg), 2);
}

TEST(Render, DrawnLeadWidthRatioIsFourToOne) {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 64;
    cfg.camera.pixel_noise = 0;
    Rng rng(1);
    const Tensor near = render_frame_image(LeadView{7.2, 0.0}, 0.0, cfg, rng);
    const Tensor far = render_frame_image(LeadView{28.8, 0.0}, 0.0, cfg, rng);
    // Rows just above each rectangle's bottom edge.
    const std::size_t near_row = std::size_t(32 + 64 * 1.5 / 7.2) - 1;
    const std::size_t far_row = std::size_t(32 + 64 * 1.5 / 28.8) - 1;
    EXPECT_DOUBLE_EQ(count_dark(near, near_row) / count_dark(far, far_row), 4.0);
}

TEST(Render, EmptySceneHasSkyRoadAndLaneEdges) {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 32;
    cfg.camera.pixel_noise = 0;
    Rng rng(1);
    const Tensor img = render_frame_image(std::nullopt, 0.0, cfg, rng);
    for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(img.at({0, c, 0}), Real(0.8));
    for (std::size_t r = 0; r < 32; ++r) EXPECT_EQ(count_dark(img, r), 0);
    std::size_t edges = 0;
    for (std::size_t i = 0; i < img.size(); i += 3) edges += img[i] == Real(0.9);
    EXPECT_GT(edges, 0u);
}

TEST(Render, LaneEdgesShiftWithEgoOffset) {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 32;
    cfg.camera.pixel_noise = 0;
    Rng rng(1);
    const Tensor centred = render_frame_image(std::nullopt, 0.0, cfg, rng);
    const Tensor shifted = render_frame_image(std::nullopt, 0.5, cfg, rng);
    auto first_edge = [](const Tensor& img, std::size_t r) {
        for (std::size_t c = 0; c < img.extent(1); ++c)
            if (img.at({r, c, 0}) == Real(0.9)) return long(c);
        return -1L;
    };
    // Moving right in the lane moves the left edge left in the image. Row 20
    // is below the horizon but above where the edges leave the frame.
    ASSERT_GE(first_edge(shifted, 20), 0);
    EXPECT_LT(first_edge(shifted, 20), first_edge(centred, 20));
}

TEST(Render, PixelNoiseBoundedAndClamped) {
    ScenarioConfig cfg = small_config();
    Rng rng(3);
    const Tensor img = render_frame_image(LeadView{10.0, 0.5}, 0.2, cfg, rng);
    for (Real v : img.values()) {
        EXPECT_GE(v, 0);
        EXPECT_LE(v, 1);
    }
}

TEST(Synth, ValidateRejectsBadConfig) {
    ScenarioConfig cfg;
    cfg.image_w = 33;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = ScenarioConfig{};
    cfg.lead_probability = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = ScenarioConfig{};
    cfg.idm.desired_speed = 0;
    EXPECT_THROW(generate_synthetic_segment(cfg, 1, 1), ConfigError);
    cfg = ScenarioConfig{};
    cfg.duration_s = 0.1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
