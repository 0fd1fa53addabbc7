#include "avaccel/features.hpp"

#include <algorithm>
#include <cmath>

namespace avaccel {

FeatureVector build_feature_vector(const FrameRecord& curr, const FrameRecord& prev) {
    if (curr.frame_index != prev.frame_index + 1) {
        throw DataError("build_feature_vector: frames " + std::to_string(prev.frame_index) +
                        " and " + std::to_string(curr.frame_index) + " are not consecutive");
    }
    FeatureVector fv;
    fv.values.segment<3>(0) = curr.av_velocity;
    if (curr.front_present) {
        fv.values.segment<2>(3) = curr.rel_distance;
        fv.values.segment<3>(5) = curr.front_velocity;
        fv.values.segment<3>(8) = curr.front_accel;
    }
    fv.target = compute_acceleration(curr.av_velocity, prev.av_velocity);
    return fv;
}

Tensor downsample_image(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3) {
        throw ShapeError("downsample_image: expected [h, w, c], got " + shape_string(img.shape()));
    }
    const std::size_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
    if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
        throw ShapeError("downsample_image: cannot resize " + shape_string(img.shape()) +
                         " to " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    if (out_h == h && out_w == w) return img;

    // Overlap of output cell i with input cell j along one axis, in units of
    // input cells: cell i covers [i*n/m, (i+1)*n/m).
    struct Tap {
        std::size_t index;
        Real weight;
    };
    auto taps = [](std::size_t n, std::size_t m) {
        std::vector<std::vector<Tap>> out(m);
        const Real ratio = static_cast<Real>(n) / static_cast<Real>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const Real lo = static_cast<Real>(i) * ratio;
            const Real hi = static_cast<Real>(i + 1) * ratio;
            for (auto j = static_cast<std::size_t>(std::floor(lo));
                 j < n && static_cast<Real>(j) < hi; ++j) {
                const Real overlap = std::min(hi, static_cast<Real>(j + 1)) -
                                     std::max(lo, static_cast<Real>(j));
                if (overlap > 0) out[i].push_back({j, overlap / ratio});
            }
        }
        return out;
    };
    const auto rows = taps(h, out_h);
    const auto cols = taps(w, out_w);

    Tensor out({out_h, out_w, c});
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                Real acc = 0;
                for (const Tap& ry : rows[oy]) {
                    for (const Tap& rx : cols[ox]) {
                        acc += ry.weight * rx.weight * img[(ry.index * w + rx.index) * c + ch];
                    }
                }
                out[(oy * out_w + ox) * c + ch] = std::clamp(acc, Real(0), Real(1));
            }
        }
    }
    return out;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window) {
    if (window == 0 || length < window) {
        throw ShapeError("make_windows: sequence of " + std::to_string(length) +
                         " is shorter than the window of " + std::to_string(window));
    }
    std::vector<std::size_t> starts(length - window + 1);
    for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = i;
    return starts;
}

Tensor WindowSample::targets() const {
    Tensor t({frames.size(), kTargetCount});
    for (std::size_t s = 0; s < frames.size(); ++s)
        for (std::size_t k = 0; k < kTargetCount; ++k) t[s * kTargetCount + k] = frames[s].target[k];
    return t;
}

std::vector<WindowSample> make_windows(std::span<const FeatureVector> features,
                                       std::span<const Tensor> images, std::size_t window) {
    if (features.size() != images.size()) {
        throw ShapeError("make_windows: " + std::to_string(features.size()) + " feature vectors vs " +
                         std::to_string(images.size()) + " images");
    }
    std::vector<WindowSample> out;
    for (std::size_t start : window_starts(features.size(), window)) {
        WindowSample w;
        w.frames.assign(features.begin() + start, features.begin() + start + window);
        w.images.assign(images.begin() + start, images.begin() + start + window);
        out.push_back(std::move(w));
    }
    return out;
}

NormStats fit_norm_stats(std::span<const FeatureVector> train) {
    if (train.empty()) {
        throw DataError("fit_norm_stats: empty training set");
    }
    const Real n = static_cast<Real>(train.size());
    NormStats stats;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        // Rounding in the mean can leave a tiny non-zero spread on a constant
        // feature, so constancy is tested exactly.
        const Real first = train.front().values[k];
        if (std::all_of(train.begin(), train.end(),
                        [&](const FeatureVector& f) { return f.values[k] == first; })) {
            stats.mean[k] = first;
            stats.std[k] = 1;
            continue;
        }
        Real sum = 0;
        for (const auto& f : train) sum += f.values[k];
        const Real mean = sum / n;
        Real ss = 0;
        for (const auto& f : train) {
            const Real d = f.values[k] - mean;
            ss += d * d;
        }
        const Real sd = std::sqrt(ss / n);
        stats.mean[k] = mean;
        stats.std[k] = sd > 0 ? sd : Real(1);
    }
    return stats;
}

Vec3 fit_target_scale(std::span<const FeatureVector> train) {
    if (train.empty()) {
        throw DataError("fit_target_scale: empty training set");
    }
    const Real n = static_cast<Real>(train.size());
    Vec3 scale = Vec3::Ones();
    for (int k = 0; k < 3; ++k) {
        Real sum = 0;
        for (const auto& f : train) sum += f.target[k];
        const Real mean = sum / n;
        Real ss = 0;
        for (const auto& f : train) ss += (f.target[k] - mean) * (f.target[k] - mean);
        const Real sd = std::sqrt(ss / n);
        if (sd > 0) scale[k] = sd;
    }
    return scale;
}

FeatureValues apply_norm(const FeatureValues& v, const NormStats& stats) {
    return ((v - stats.mean).array() / stats.std.array()).matrix();
}

FeatureValues denormalize(const FeatureValues& z, const NormStats& stats) {
    return (z.array() * stats.std.array()).matrix() + stats.mean;
}

}  // namespace avaccel
