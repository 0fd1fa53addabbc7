#include "avaccel/model.hpp"

#include <algorithm>
#include <cmath>

#include "avaccel/bytes.hpp"

namespace avaccel {

namespace {

constexpr std::size_t kEmbeddingWidth = 16;
constexpr std::size_t kFeatureEmbeddingWidth = 4;
constexpr std::size_t kLstmHidden = 32;

LayerSpec dense_layer(std::string name) { return {LayerKind::dense, std::move(name)}; }
LayerSpec relu() { return {LayerKind::activation, "", Activation::relu}; }

void check_image_size(std::size_t h, std::size_t w) {
    if (h == 0 || w == 0 || h % 8 || w % 8) {
        throw ConfigError("model image size must be a positive multiple of 8, got " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
}

void check_window(std::size_t window) {
    if (window == 0) throw ConfigError("model window must be at least 1");
}

// conv3x3 same -> batchnorm -> relu -> maxpool, three times; then
// flatten -> 64 -> relu -> 16 -> relu.
void add_image_branch(ModelGraph& g, Rng& rng) {
    check_image_size(g.image_h, g.image_w);
    constexpr std::size_t filters[] = {8, 16, 32};
    std::size_t in = 3;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string conv = "conv" + std::to_string(i + 1);
        const std::string bn = "bn" + std::to_string(i + 1);
        g.params.emplace(conv, init_conv2d(rng, 3, 3, in, filters[i]));
        g.params.emplace(bn, init_batchnorm(filters[i]));
        g.image_branch.push_back({LayerKind::conv2d, conv});
        g.image_branch.push_back({LayerKind::batchnorm, bn});
        g.image_branch.push_back(relu());
        g.image_branch.push_back({LayerKind::maxpool, ""});
        in = filters[i];
    }
    g.image_branch.push_back({LayerKind::flatten, ""});
    const std::size_t flat = (g.image_h / 8) * (g.image_w / 8) * in;
    g.params.emplace("img_fc1", init_dense(rng, flat, 64));
    g.params.emplace("img_fc2", init_dense(rng, 64, kEmbeddingWidth));
    g.image_branch.push_back(dense_layer("img_fc1"));
    g.image_branch.push_back(relu());
    g.image_branch.push_back(dense_layer("img_fc2"));
    g.image_branch.push_back(relu());
}

// 11 -> 8 -> relu -> 4 -> relu
void add_feature_branch(ModelGraph& g, Rng& rng) {
    g.params.emplace("feat_fc1", init_dense(rng, kFeatureCount, 8));
    g.params.emplace("feat_fc2", init_dense(rng, 8, kFeatureEmbeddingWidth));
    g.feature_branch = {dense_layer("feat_fc1"), relu(), dense_layer("feat_fc2"), relu()};
}

void add_recurrent_head(ModelGraph& g, Rng& rng, std::size_t in) {
    g.params.emplace("lstm", init_lstm(rng, in, kLstmHidden));
    g.params.emplace("out", init_dense(rng, kLstmHidden, kTargetCount));
    g.head.push_back({LayerKind::lstm, "lstm"});
    g.head.push_back({LayerKind::time_distributed_dense, "out"});
}

bool is_frozen(const ModelGraph& g, const std::string& name) {
    return !name.empty() && g.frozen.count(name) > 0;
}

bool has_params(const LayerSpec& s) { return !s.name.empty(); }

// ---------------------------------------------------------------- execution

Tensor normalize_features(const Tensor& features, const NormStats& norm) {
    Tensor out = features;
    const std::size_t rows = out.size() / kFeatureCount;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            Real& v = out[r * kFeatureCount + k];
            v = (v - norm.mean[static_cast<Eigen::Index>(k)]) /
                norm.std[static_cast<Eigen::Index>(k)];
        }
    }
    return out;
}

Tensor run_layer(const LayerSpec& s, const Tensor& x, LayerCache& cache, const ModelGraph& g,
                 ModelGraph* mut, Mode mode) {
    switch (s.kind) {
        case LayerKind::dense: {
            auto f = dense_forward(x, std::get<DenseParams>(g.params.at(s.name)));
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::activation: {
            auto f = activation_forward(s.activation, x);
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::conv2d: {
            auto f = conv2d_forward(x, std::get<Conv2dParams>(g.params.at(s.name)));
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::maxpool: {
            auto f = maxpool2d_forward(x);
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::batchnorm: {
            Forward<BatchNormCache> f;
            if (mode == Mode::train && mut != nullptr && !is_frozen(g, s.name)) {
                f = batchnorm_forward(x, std::get<BatchNormParams>(mut->params.at(s.name)),
                                      Mode::train);
            } else {
                BatchNormParams p = std::get<BatchNormParams>(g.params.at(s.name));
                f = batchnorm_forward(x, p, Mode::eval);
            }
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::lstm: {
            auto f = lstm_sequence_forward(x, std::get<LstmParams>(g.params.at(s.name)));
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::time_distributed_dense: {
            auto f = time_distributed_dense_forward(x, std::get<DenseParams>(g.params.at(s.name)));
            cache = std::move(f.cache);
            return std::move(f.output);
        }
        case LayerKind::flatten:
            cache = x.shape();
            return x.reshaped({x.extent(0), x.size() / x.extent(0)});
        case LayerKind::concat_point:
            break;
    }
    throw ShapeError("concat point outside the head");
}

Tensor run_branch(const std::vector<LayerSpec>& specs, Tensor x, std::vector<LayerCache>& caches,
                  const ModelGraph& g, ModelGraph* mut, Mode mode) {
    caches.assign(specs.size(), std::monostate{});
    for (std::size_t i = 0; i < specs.size(); ++i) {
        x = run_layer(specs[i], x, caches[i], g, mut, mode);
    }
    return x;
}

Tensor backward_layer(const LayerSpec& s, const LayerCache& cache, const Tensor& grad,
                      const ModelGraph& g, GraphGrads& grads, bool need_input) {
    const bool frozen = is_frozen(g, s.name);
    switch (s.kind) {
        case LayerKind::dense: {
            auto r = dense_backward(grad, std::get<DenseCache>(cache),
                                    std::get<DenseParams>(g.params.at(s.name)), need_input);
            if (!frozen) grads[s.name] = {std::move(r.params.weights), std::move(r.params.bias)};
            return std::move(r.input);
        }
        case LayerKind::activation:
            return activation_backward(grad, std::get<ActivationCache>(cache));
        case LayerKind::conv2d: {
            auto r = conv2d_backward(grad, std::get<Conv2dCache>(cache),
                                     std::get<Conv2dParams>(g.params.at(s.name)), need_input);
            if (!frozen) grads[s.name] = {std::move(r.params.kernels), std::move(r.params.bias)};
            return std::move(r.input);
        }
        case LayerKind::maxpool:
            return maxpool2d_backward(grad, std::get<MaxPoolCache>(cache));
        case LayerKind::batchnorm: {
            auto r = batchnorm_backward(grad, std::get<BatchNormCache>(cache),
                                        std::get<BatchNormParams>(g.params.at(s.name)));
            if (!frozen) grads[s.name] = {std::move(r.params.gamma), std::move(r.params.beta)};
            return std::move(r.input);
        }
        case LayerKind::lstm: {
            auto r = lstm_sequence_backward(grad, std::get<LstmSequenceCache>(cache),
                                            std::get<LstmParams>(g.params.at(s.name)),
                                            need_input);
            if (!frozen) {
                std::vector<Tensor> t;
                for (auto& w : r.params.input_weights) t.push_back(std::move(w));
                for (auto& u : r.params.recurrent_weights) t.push_back(std::move(u));
                for (auto& b : r.params.bias) t.push_back(std::move(b));
                grads[s.name] = std::move(t);
            }
            return std::move(r.input);
        }
        case LayerKind::time_distributed_dense: {
            auto r = time_distributed_dense_backward(grad, std::get<TimeDistributedCache>(cache),
                                                     std::get<DenseParams>(g.params.at(s.name)),
                                                     need_input);
            if (!frozen) grads[s.name] = {std::move(r.params.weights), std::move(r.params.bias)};
            return std::move(r.input);
        }
        case LayerKind::flatten:
            return grad.reshaped(std::get<Shape>(cache));
        case LayerKind::concat_point:
            break;
    }
    throw ShapeError("concat point outside the head");
}

// Stops at the lowest trainable layer: nothing below it needs a gradient.
void backward_branch(const std::vector<LayerSpec>& specs, const std::vector<LayerCache>& caches,
                     Tensor grad, const ModelGraph& g, GraphGrads& grads) {
    std::size_t lowest = specs.size();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (has_params(specs[i]) && !is_frozen(g, specs[i].name)) {
            lowest = i;
            break;
        }
    }
    for (std::size_t i = specs.size(); i-- > lowest;) {
        grad = backward_layer(specs[i], caches[i], grad, g, grads, i > lowest);
    }
}

std::size_t batch_of(const ModelGraph& g, const ModelInput& in) {
    const bool windowed = is_windowed(g.kind);
    std::size_t batch = 0;
    if (uses_images(g.kind)) {
        const Tensor& x = in.images;
        const bool ok = windowed ? x.rank() == 5 && x.extent(1) == g.window &&
                                       x.extent(2) == g.image_h && x.extent(3) == g.image_w &&
                                       x.extent(4) == 3
                                 : x.rank() == 4 && x.extent(1) == g.image_h &&
                                       x.extent(2) == g.image_w && x.extent(3) == 3;
        if (!ok) {
            throw ShapeError(std::string(model_kind_name(g.kind)) + ": image input has shape " +
                             shape_string(x.shape()));
        }
        batch = x.extent(0);
    }
    if (uses_features(g.kind)) {
        const Tensor& x = in.features;
        const bool ok = windowed ? x.rank() == 3 && x.extent(1) == g.window &&
                                       x.extent(2) == kFeatureCount
                                 : x.rank() == 2 && x.extent(1) == kFeatureCount;
        if (!ok || (batch != 0 && x.extent(0) != batch)) {
            throw ShapeError(std::string(model_kind_name(g.kind)) + ": feature input has shape " +
                             shape_string(x.shape()));
        }
        batch = x.extent(0);
    }
    return batch;
}

// Multiplies each trailing 3-vector of x by scale.
void scale_rows(Tensor& x, const Vec3& scale) {
    if (x.shape().back() != kTargetCount) {
        throw ShapeError("model output has shape " + shape_string(x.shape()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= scale[static_cast<Eigen::Index>(i % 3)];
}

Tensor flatten_steps(const Tensor& x) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    s[0] *= x.extent(0);
    return x.reshaped(std::move(s));
}

ModelForward forward_impl(const ModelGraph& g, ModelGraph* mut, const ModelInput& in, Mode mode) {
    ModelForward f;
    GraphCache& cache = f.cache;
    const bool windowed = is_windowed(g.kind);
    cache.batch = batch_of(g, in);
    cache.steps = windowed ? g.window : 1;

    Tensor image_out, feature_out;
    if (uses_images(g.kind)) {
        image_out = run_branch(g.image_branch, windowed ? flatten_steps(in.images) : in.images,
                               cache.image, g, mut, mode);
    }
    if (uses_features(g.kind)) {
        Tensor x = normalize_features(in.features, g.norm);
        feature_out = run_branch(g.feature_branch, windowed ? flatten_steps(x) : x,
                                 cache.feature, g, mut, mode);
    }
    std::size_t start = 0;
    Tensor x;
    if (!g.head.empty() && g.head[0].kind == LayerKind::concat_point) {
        cache.image_width = image_out.extent(1);
        x = concat(image_out, feature_out, 1);
        start = 1;
    } else {
        x = uses_images(g.kind) ? std::move(image_out) : std::move(feature_out);
    }
    if (windowed) x = x.reshaped({cache.batch, cache.steps, x.extent(1)});
    cache.head.assign(g.head.size(), std::monostate{});
    for (std::size_t i = start; i < g.head.size(); ++i) {
        x = run_layer(g.head[i], x, cache.head[i], g, mut, mode);
    }
    scale_rows(x, g.target_scale);
    f.output = std::move(x);
    return f;
}

std::vector<Tensor*> collect(LayerParams& p, bool include_running) {
    return std::visit(
        [&](auto& q) -> std::vector<Tensor*> {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, DenseParams>) {
                return {&q.weights, &q.bias};
            } else if constexpr (std::is_same_v<T, Conv2dParams>) {
                return {&q.kernels, &q.bias};
            } else if constexpr (std::is_same_v<T, BatchNormParams>) {
                if (include_running) return {&q.gamma, &q.beta, &q.running_mean, &q.running_var};
                return {&q.gamma, &q.beta};
            } else {
                std::vector<Tensor*> t;
                for (auto& w : q.input_weights) t.push_back(&w);
                for (auto& u : q.recurrent_weights) t.push_back(&u);
                for (auto& b : q.bias) t.push_back(&b);
                return t;
            }
        },
        p);
}

std::size_t count_params(const ModelGraph& g, bool skip_frozen) {
    std::size_t n = 0;
    for (const auto& [name, p] : g.params) {
        if (skip_frozen && g.frozen.count(name)) continue;
        for (const Tensor* t : collect(const_cast<LayerParams&>(p), false)) n += t->size();
    }
    return n;
}

}  // namespace

// ---------------------------------------------------------------- kinds

std::string_view model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::baseline: return "baseline";
        case ModelKind::cnn: return "cnn";
        case ModelKind::cnn_nn: return "cnn_nn";
        case ModelKind::cnn_lstm: return "cnn_lstm";
        case ModelKind::advanced: return "advanced";
    }
    return "unknown";
}

std::string_view model_display_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::baseline: return "Baseline";
        case ModelKind::cnn: return "CNN";
        case ModelKind::cnn_nn: return "CNN+NN";
        case ModelKind::cnn_lstm: return "CNN+LSTM";
        case ModelKind::advanced: return "Advanced";
    }
    return "Unknown";
}

ModelKind parse_model_kind(std::string_view name) {
    for (ModelKind k : kAllModelKinds) {
        if (model_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown model kind '" + std::string(name) +
                      "' (expected baseline, cnn, cnn_nn, cnn_lstm or advanced)");
}

bool uses_images(ModelKind kind) { return kind != ModelKind::baseline; }

bool uses_features(ModelKind kind) {
    return kind == ModelKind::baseline || kind == ModelKind::cnn_nn ||
           kind == ModelKind::advanced;
}

bool is_windowed(ModelKind kind) {
    return kind == ModelKind::cnn_lstm || kind == ModelKind::advanced;
}

// ---------------------------------------------------------------- builders

ModelGraph build_baseline(Rng& rng) {
    ModelGraph g;
    g.kind = ModelKind::baseline;
    add_feature_branch(g, rng);
    g.params.emplace("out", init_dense(rng, kFeatureEmbeddingWidth, kTargetCount));
    g.head = {dense_layer("out")};
    return g;
}

ModelGraph build_cnn(Rng& rng, std::size_t image_h, std::size_t image_w) {
    ModelGraph g;
    g.kind = ModelKind::cnn;
    g.image_h = image_h;
    g.image_w = image_w;
    add_image_branch(g, rng);
    g.params.emplace("out", init_dense(rng, kEmbeddingWidth, kTargetCount));
    g.head = {dense_layer("out")};
    return g;
}

ModelGraph build_cnn_nn(Rng& rng, std::size_t image_h, std::size_t image_w) {
    ModelGraph g;
    g.kind = ModelKind::cnn_nn;
    g.image_h = image_h;
    g.image_w = image_w;
    add_image_branch(g, rng);
    add_feature_branch(g, rng);
    g.params.emplace("fuse", init_dense(rng, kEmbeddingWidth + kFeatureEmbeddingWidth, 16));
    g.params.emplace("out", init_dense(rng, 16, kTargetCount));
    g.head = {{LayerKind::concat_point, ""}, dense_layer("fuse"), relu(), dense_layer("out")};
    return g;
}

ModelGraph build_cnn_lstm(Rng& rng, std::size_t image_h, std::size_t image_w,
                          std::size_t window) {
    check_window(window);
    ModelGraph g;
    g.kind = ModelKind::cnn_lstm;
    g.image_h = image_h;
    g.image_w = image_w;
    g.window = window;
    add_image_branch(g, rng);
    add_recurrent_head(g, rng, kEmbeddingWidth);
    return g;
}

ModelGraph build_advanced(const ModelGraph& pretrained, Rng& rng, std::size_t window) {
    if (pretrained.kind != ModelKind::cnn) {
        throw ConfigError("advanced model needs a cnn base model, got " +
                          std::string(model_kind_name(pretrained.kind)));
    }
    check_window(window);
    ModelGraph g;
    g.kind = ModelKind::advanced;
    g.image_h = pretrained.image_h;
    g.image_w = pretrained.image_w;
    g.window = window;
    g.image_branch = pretrained.image_branch;
    for (const LayerSpec& s : g.image_branch) {
        if (!has_params(s)) continue;
        g.params.emplace(s.name, pretrained.params.at(s.name));
        if (s.kind == LayerKind::conv2d || s.kind == LayerKind::batchnorm) g.frozen.insert(s.name);
    }
    add_feature_branch(g, rng);
    g.head.push_back({LayerKind::concat_point, ""});
    add_recurrent_head(g, rng, kEmbeddingWidth + kFeatureEmbeddingWidth);
    return g;
}

ModelGraph build_model(ModelKind kind, Rng& rng, std::size_t image_h, std::size_t image_w,
                       std::size_t window) {
    switch (kind) {
        case ModelKind::baseline: return build_baseline(rng);
        case ModelKind::cnn: return build_cnn(rng, image_h, image_w);
        case ModelKind::cnn_nn: return build_cnn_nn(rng, image_h, image_w);
        case ModelKind::cnn_lstm: return build_cnn_lstm(rng, image_h, image_w, window);
        case ModelKind::advanced: {
            const ModelGraph base = build_cnn(rng, image_h, image_w);
            return build_advanced(base, rng, window);
        }
    }
    throw ConfigError("unknown model kind");
}

// ---------------------------------------------------------------- passes

ModelForward model_forward(ModelGraph& g, const ModelInput& in, Mode mode) {
    return forward_impl(g, &g, in, mode);
}

GraphGrads model_backward(const ModelGraph& g, const GraphCache& cache, const Tensor& grad_out) {
    GraphGrads grads;
    Tensor grad = grad_out;
    scale_rows(grad, g.target_scale);
    std::size_t start = 0;
    const bool fused = !g.head.empty() && g.head[0].kind == LayerKind::concat_point;
    if (fused) start = 1;
    for (std::size_t i = g.head.size(); i-- > start;) {
        grad = backward_layer(g.head[i], cache.head[i], grad, g, grads, true);
    }
    if (is_windowed(g.kind)) grad = flatten_steps(grad);
    if (fused) {
        const std::size_t width = grad.extent(1);
        backward_branch(g.image_branch, cache.image, slice(grad, 1, 0, cache.image_width), g,
                        grads);
        backward_branch(g.feature_branch, cache.feature,
                        slice(grad, 1, cache.image_width, width), g, grads);
    } else if (uses_images(g.kind)) {
        backward_branch(g.image_branch, cache.image, std::move(grad), g, grads);
    } else {
        backward_branch(g.feature_branch, cache.feature, std::move(grad), g, grads);
    }
    return grads;
}

Tensor predict(const ModelGraph& g, const ModelInput& in) {
    return forward_impl(g, nullptr, in, Mode::eval).output;
}

Tensor current_frame(const Tensor& output) {
    if (output.rank() == 2) return output;
    if (output.rank() != 3) {
        throw ShapeError("current_frame: output has shape " + shape_string(output.shape()));
    }
    const std::size_t t = output.extent(1);
    return slice(output, 1, t - 1, t).reshaped({output.extent(0), output.extent(2)});
}

Tensor image_embedding(const ModelGraph& g, const Tensor& images) {
    if (!uses_images(g.kind)) {
        throw ShapeError("image_embedding: model has no image branch");
    }
    std::vector<LayerCache> caches;
    const Tensor x = images.rank() == 5 ? flatten_steps(images) : images;
    if (x.rank() != 4 || x.extent(1) != g.image_h || x.extent(2) != g.image_w ||
        x.extent(3) != 3) {
        throw ShapeError("image_embedding: images have shape " + shape_string(images.shape()));
    }
    return run_branch(g.image_branch, x, caches, g, nullptr, Mode::eval);
}

// ---------------------------------------------------------------- parameters

std::vector<Tensor*> parameter_tensors(LayerParams& p) { return collect(p, true); }

std::vector<const Tensor*> parameter_tensors(const LayerParams& p) {
    const auto t = collect(const_cast<LayerParams&>(p), true);
    return {t.begin(), t.end()};
}

std::vector<Tensor*> trainable_tensors(LayerParams& p) { return collect(p, false); }

std::size_t parameter_count(const ModelGraph& g) { return count_params(g, false); }

std::size_t trainable_parameter_count(const ModelGraph& g) { return count_params(g, true); }

std::vector<ParamRef> optimizer_bindings(ModelGraph& g, const GraphGrads& grads) {
    std::vector<ParamRef> refs;
    for (const auto& [name, tensors] : grads) {
        if (g.frozen.count(name)) {
            throw ShapeError("gradient supplied for frozen layer " + name);
        }
        const auto params = trainable_tensors(g.params.at(name));
        if (params.size() != tensors.size()) {
            throw ShapeError("layer " + name + ": " + std::to_string(tensors.size()) +
                             " gradients for " + std::to_string(params.size()) + " parameters");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            refs.push_back({name + "/" + std::to_string(i), params[i], &tensors[i]});
        }
    }
    return refs;
}

// ---------------------------------------------------------------- .avnm

namespace {

constexpr std::size_t kModelMagicSize = 5;

void write_entry(ByteWriter& w, const std::string& name, const std::vector<const Tensor*>& ts) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(std::string_view(name));
    w.u32(static_cast<std::uint32_t>(ts.size()));
    for (const Tensor* t : ts) {
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (std::size_t e : t->shape()) w.u32(static_cast<std::uint32_t>(e));
        for (Real v : t->values()) w.f64(static_cast<double>(v));
    }
}

Tensor read_tensor(ByteReader& r) {
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) {
        throw FormatError(FormatError::Kind::invalid_field,
                          "model: tensor rank " + std::to_string(rank));
    }
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = r.u32();
        if (e == 0) throw FormatError(FormatError::Kind::invalid_field, "model: zero extent");
        n *= e;
        if (n > r.remaining()) {
            throw FormatError(FormatError::Kind::truncated, "model: tensor overruns the stream");
        }
    }
    std::vector<Real> values(n);
    for (auto& v : values) v = static_cast<Real>(r.f64());
    return Tensor(std::move(shape), std::move(values));
}

FormatError bad_field(const std::string& what) {
    return FormatError(FormatError::Kind::invalid_field, "model: " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelGraph& g) {
    ByteWriter w;
    w.raw(std::string_view(kModelMagic, kModelMagicSize));
    w.u32(static_cast<std::uint32_t>(g.params.size() + 2));

    const Tensor meta = Tensor::vector({static_cast<Real>(static_cast<int>(g.kind)),
                                        static_cast<Real>(g.image_h),
                                        static_cast<Real>(g.image_w),
                                        static_cast<Real>(g.window)});
    write_entry(w, "__meta", {&meta});
    Tensor mean({kFeatureCount}), sd({kFeatureCount});
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        mean[k] = g.norm.mean[static_cast<Eigen::Index>(k)];
        sd[k] = g.norm.std[static_cast<Eigen::Index>(k)];
    }
    const Tensor scale = Tensor::vector({g.target_scale[0], g.target_scale[1], g.target_scale[2]});
    write_entry(w, "__norm", {&mean, &sd, &scale});
    for (const auto& [name, p] : g.params) write_entry(w, name, parameter_tensors(p));

    w.u32(crc32_ieee(std::span(w.bytes()).subspan(kModelMagicSize)));
    return std::move(w.bytes());
}

ModelGraph decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kModelMagicSize ||
        !std::equal(bytes.begin(), bytes.begin() + kModelMagicSize, kModelMagic)) {
        throw FormatError(FormatError::Kind::bad_magic, "model: bad magic (expected AVNM1)");
    }
    if (bytes.size() < kModelMagicSize + 8) {
        throw FormatError(FormatError::Kind::truncated, "model: stream too short");
    }
    const auto body = bytes.subspan(kModelMagicSize, bytes.size() - kModelMagicSize - 4);
    if (crc32_ieee(body) != ByteReader(bytes.last(4)).u32()) {
        throw FormatError(FormatError::Kind::crc_mismatch, "model: CRC check failed");
    }
    ByteReader r(body);
    const std::uint32_t count = r.u32();
    std::map<std::string, std::vector<Tensor>> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_bytes = r.take(r.u32());
        std::string name(name_bytes.begin(), name_bytes.end());
        const std::uint32_t n = r.u32();
        std::vector<Tensor> ts;
        for (std::uint32_t k = 0; k < n; ++k) ts.push_back(read_tensor(r));
        if (!entries.emplace(std::move(name), std::move(ts)).second) {
            throw bad_field("duplicate layer entry");
        }
    }
    if (r.remaining() != 0) throw bad_field(std::to_string(r.remaining()) + " trailing bytes");

    const auto meta_it = entries.find("__meta");
    const auto norm_it = entries.find("__norm");
    if (meta_it == entries.end() || meta_it->second.size() != 1 ||
        meta_it->second[0].shape() != Shape{4} || norm_it == entries.end() ||
        norm_it->second.size() != 3 || norm_it->second[0].shape() != Shape{kFeatureCount} ||
        norm_it->second[1].shape() != Shape{kFeatureCount} ||
        norm_it->second[2].shape() != Shape{kTargetCount}) {
        throw bad_field("missing or malformed __meta/__norm entry");
    }
    const Tensor& meta = meta_it->second[0];
    const int kind_index = static_cast<int>(meta[0]);
    if (kind_index < 0 || kind_index >= static_cast<int>(kAllModelKinds.size()) ||
        static_cast<Real>(kind_index) != meta[0]) {
        throw bad_field("unknown model kind index");
    }
    for (std::size_t i = 1; i < 4; ++i) {
        if (!(meta[i] >= 0 && meta[i] <= 4096) || meta[i] != std::floor(meta[i])) {
            throw bad_field("meta value out of range");
        }
    }
    const auto kind = static_cast<ModelKind>(kind_index);
    Rng rng(0);
    ModelGraph g;
    try {
        g = build_model(kind, rng, uses_images(kind) ? static_cast<std::size_t>(meta[1]) : 8,
                        uses_images(kind) ? static_cast<std::size_t>(meta[2]) : 8,
                        is_windowed(kind) ? static_cast<std::size_t>(meta[3]) : 1);
    } catch (const ConfigError& e) {
        throw bad_field(e.what());
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        g.norm.mean[static_cast<Eigen::Index>(k)] = norm_it->second[0][k];
        g.norm.std[static_cast<Eigen::Index>(k)] = norm_it->second[1][k];
    }
    for (std::size_t k = 0; k < kTargetCount; ++k) {
        g.target_scale[static_cast<Eigen::Index>(k)] = norm_it->second[2][k];
    }
    if (entries.size() != g.params.size() + 2) throw bad_field("layer set does not match kind");
    for (auto& [name, p] : g.params) {
        const auto it = entries.find(name);
        if (it == entries.end()) throw bad_field("missing layer " + name);
        const auto dst = parameter_tensors(p);
        if (dst.size() != it->second.size()) throw bad_field("layer " + name + " tensor count");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i]->shape() != it->second[i].shape()) {
                throw bad_field("layer " + name + " tensor " + std::to_string(i) + " has shape " +
                                shape_string(it->second[i].shape()) + ", expected " +
                                shape_string(dst[i]->shape()));
            }
            *dst[i] = std::move(it->second[i]);
        }
    }
    return g;
}

void save_model(const ModelGraph& g, const std::string& path) {
    write_file(path, encode_model(g));
}

ModelGraph load_model(const std::string& path) {
    try {
        return decode_model(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path + ": " + e.what(), e.frame());
    }
}

}  // namespace avaccel
