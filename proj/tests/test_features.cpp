#include <gtest/gtest.h>

#include "avaccel/features.hpp"
#include "avaccel/segment.hpp"
#include "avaccel/synth.hpp"

using namespace avaccel;

namespace {

FrameRecord frame(std::uint32_t idx, Vec3 v) {
    FrameRecord f;
    f.frame_index = idx;
    f.av_velocity = v;
    return f;
}

ScenarioConfig small_config() {
    ScenarioConfig cfg;
    cfg.image_h = cfg.image_w = 16;
    return cfg;
}

}  // namespace

TEST(Features, HandComputedFixtureWithLead) {
    const FrameRecord prev = frame(6, Vec3(10.0, 0.25, -0.5));
    FrameRecord curr = frame(7, Vec3(10.5, 0.0, 0.0));
    curr.front_present = true;
    curr.rel_distance = Vec2(22.0, -1.5);
    curr.front_velocity = Vec3(12.0, 0.125, 0.0);
    curr.front_accel = Vec3(0.25, 0.0, -0.125);
    const FeatureVector fv = build_feature_vector(curr, prev);
    FeatureValues expected;
    expected << 10.5, 0.0, 0.0, 22.0, -1.5, 12.0, 0.125, 0.0, 0.25, 0.0, -0.125;
    EXPECT_EQ(fv.values, expected);
    EXPECT_EQ(fv.target, Vec3(0.5, -0.25, 0.5));
}

TEST(Features, HandComputedFixtureWithoutLead) {
    FrameRecord curr = frame(1, Vec3(3.0, 0.5, 0.0));
    // Stale front fields must not leak into the vector.
    curr.rel_distance = Vec2(9.0, 9.0);
    curr.front_velocity = Vec3(9.0, 9.0, 9.0);
    const FeatureVector fv = build_feature_vector(curr, frame(0, Vec3(2.0, 0.5, 0.25)));
    FeatureValues expected = FeatureValues::Zero();
    expected.head<3>() = Vec3(3.0, 0.5, 0.0);
    EXPECT_EQ(fv.values, expected);
    EXPECT_EQ(fv.target, Vec3(1.0, 0.0, -0.25));
}

TEST(Features, NonConsecutiveFramesRejected) {
    EXPECT_THROW(build_feature_vector(frame(5, Vec3::Zero()), frame(3, Vec3::Zero())), DataError);
}

TEST(Features, TelescopingSumIsBitExact) {
    const ScenarioConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Segment seg = generate_synthetic_segment(cfg, seed, seed);
        const auto feats = segment_features(seg);
        Vec3 sum = Vec3::Zero();
        for (const auto& f : feats) sum += f.target;
        const Vec3 expected = seg.frames.back().av_velocity - seg.frames.front().av_velocity;
        EXPECT_EQ(sum, expected) << "segment " << seed;
    }
}

TEST(Features, FrontAbsentZeroingOnEveryGeneratedFrame) {
    const ScenarioConfig cfg = small_config();
    std::size_t absent = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Segment seg = generate_synthetic_segment(cfg, seed, seed);
        for (std::size_t i = 1; i < seg.frames.size(); ++i) {
            if (seg.frames[i].front_present) continue;
            ++absent;
            const FeatureVector fv = build_feature_vector(seg.frames[i], seg.frames[i - 1]);
            for (std::size_t k = kFirstFrontFeature; k < kFeatureCount; ++k) {
                ASSERT_EQ(fv.values[k], 0) << "segment " << seed << " frame " << i;
            }
        }
    }
    EXPECT_GT(absent, 0u);
}

TEST(Features, WindowCountIsLengthMinusFour) {
    for (std::size_t len : {5u, 6u, 10u, 199u}) {
        std::vector<FeatureVector> feats(len);
        std::vector<Tensor> images(len, Tensor({2, 2, 3}));
        EXPECT_EQ(make_windows(feats, images).size(), len - 4);
    }
    std::vector<FeatureVector> four(4);
    std::vector<Tensor> imgs(4, Tensor({2, 2, 3}));
    EXPECT_THROW(make_windows(four, imgs), ShapeError);
}

TEST(Features, WindowsAreConsecutiveSlices) {
    std::vector<FeatureVector> feats(8);
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < 8; ++i) {
        feats[i].target = Vec3(Real(i), 0, 0);
        images.emplace_back(Shape{1, 1, 3}, Real(i));
    }
    const auto w = make_windows(feats, images);
    for (std::size_t s = 0; s < w.size(); ++s)
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_EQ(w[s].frames[k].target[0], Real(s + k));
            EXPECT_EQ(w[s].images[k][0], Real(s + k));
        }
    EXPECT_EQ(w[0].targets().shape(), (Shape{5, 3}));
}

TEST(Features, NormStatsArePopulationMoments) {
    std::vector<FeatureVector> feats(4);
    const Real xs[] = {1, 2, 3, 6};
    for (int i = 0; i < 4; ++i) {
        feats[i].values.setConstant(7);  // constant columns
        feats[i].values[0] = xs[i];
    }
    const NormStats s = fit_norm_stats(feats);
    EXPECT_DOUBLE_EQ(s.mean[0], 3);
    EXPECT_DOUBLE_EQ(s.std[0], std::sqrt(3.5));
    EXPECT_EQ(s.mean[1], 7);
    EXPECT_EQ(s.std[1], 1);
    const FeatureValues z = apply_norm(feats[3].values, s);
    EXPECT_DOUBLE_EQ(z[0], 3 / std::sqrt(3.5));
    EXPECT_EQ(z[1], 0);
    EXPECT_NEAR((denormalize(z, s) - feats[3].values).norm(), 0, 1e-14);
    EXPECT_THROW(fit_norm_stats({}), DataError);
}

TEST(Features, TargetScaleIsPopulationStd) {
    std::vector<FeatureVector> feats(2);
    feats[0].target = Vec3(1, 5, 0);
    feats[1].target = Vec3(3, 5, 0);
    EXPECT_EQ(fit_target_scale(feats), Vec3(1, 1, 1));
    feats[1].target = Vec3(5, 5, 0);
    EXPECT_EQ(fit_target_scale(feats), Vec3(2, 1, 1));
}

TEST(Features, DownsampleAveragesBlocks) {
    Tensor img({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) img[i] = Real(i) / 16;
    const Tensor d = downsample_image(img, 2, 2);
    EXPECT_NEAR(d[0], (0 + 1 + 4 + 5) / 64.0, 1e-15);
    EXPECT_NEAR(d[3], (10 + 11 + 14 + 15) / 64.0, 1e-15);
    EXPECT_EQ(downsample_image(img, 4, 4), img);
    EXPECT_THROW(downsample_image(img, 8, 8), ShapeError);
    const Tensor odd = downsample_image(img, 3, 3);
    double in = 0, out = 0;
    for (std::size_t i = 0; i < 16; ++i) in += img[i];
    for (std::size_t i = 0; i < 9; ++i) out += odd[i];
    EXPECT_NEAR(in / 16, out / 9, 1e-12);  // area averaging preserves the mean
}
