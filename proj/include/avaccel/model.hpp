#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "avaccel/features.hpp"
#include "avaccel/layers.hpp"
#include "avaccel/optim.hpp"

namespace avaccel {

enum class ModelKind { baseline, cnn, cnn_nn, cnn_lstm, advanced };

inline constexpr std::array<ModelKind, 5> kAllModelKinds = {
    ModelKind::baseline, ModelKind::cnn, ModelKind::cnn_nn, ModelKind::cnn_lstm,
    ModelKind::advanced};

/// "baseline", "cnn", "cnn_nn", "cnn_lstm", "advanced".
std::string_view model_kind_name(ModelKind kind);
/// Table-style label: "Baseline", "CNN", "CNN+NN", "CNN+LSTM", "Advanced".
std::string_view model_display_name(ModelKind kind);
/// Throws ConfigError on an unknown name.
ModelKind parse_model_kind(std::string_view name);

bool uses_images(ModelKind kind);
bool uses_features(ModelKind kind);
/// Windowed models consume [b, t, ...] inputs and emit [b, t, 3].
bool is_windowed(ModelKind kind);

enum class LayerKind {
    dense,
    activation,
    conv2d,
    maxpool,
    batchnorm,
    lstm,
    time_distributed_dense,
    concat_point,
    flatten,
};

struct LayerSpec {
    LayerKind kind;
    std::string name;  // parameter key; empty for parameter-free layers
    Activation activation = Activation::relu;
};

using LayerParams = std::variant<DenseParams, Conv2dParams, BatchNormParams, LstmParams>;

/**
 * Two optional input branches (images, features) whose outputs meet at the
 * head's concat point, followed by the head. Windowed graphs run both
 * branches on [b*t, ...] and hand [b, t, e] to the head, which starts with
 * an LSTM.
 *
 * `norm` is applied to raw feature rows on entry, so callers always pass
 * unnormalized features. The head's output is multiplied per component by
 * `target_scale`, a constant that puts initial predictions on the scale of
 * the targets.
 */
struct ModelGraph {
    ModelKind kind = ModelKind::baseline;
    std::size_t image_h = 0;
    std::size_t image_w = 0;
    std::size_t window = 1;
    std::vector<LayerSpec> image_branch;
    std::vector<LayerSpec> feature_branch;
    std::vector<LayerSpec> head;
    std::map<std::string, LayerParams> params;
    std::set<std::string> frozen;
    NormStats norm;
    Vec3 target_scale = Vec3::Ones();
};

inline constexpr std::size_t kDefaultImageSize = 64;

ModelGraph build_baseline(Rng& rng);
/// Image extents must be positive multiples of 8.
ModelGraph build_cnn(Rng& rng, std::size_t image_h = kDefaultImageSize,
                     std::size_t image_w = kDefaultImageSize);
ModelGraph build_cnn_nn(Rng& rng, std::size_t image_h = kDefaultImageSize,
                        std::size_t image_w = kDefaultImageSize);
ModelGraph build_cnn_lstm(Rng& rng, std::size_t image_h = kDefaultImageSize,
                          std::size_t image_w = kDefaultImageSize,
                          std::size_t window = kDefaultWindow);
/// Copies the whole image branch of `pretrained` (kind cnn) and freezes its
/// conv and batch-norm layers; the image-branch dense layers stay trainable.
ModelGraph build_advanced(const ModelGraph& pretrained, Rng& rng,
                          std::size_t window = kDefaultWindow);
/// Any kind; `advanced` gets a freshly initialized CNN as its base.
ModelGraph build_model(ModelKind kind, Rng& rng, std::size_t image_h = kDefaultImageSize,
                       std::size_t image_w = kDefaultImageSize,
                       std::size_t window = kDefaultWindow);

/// images: [b, h, w, 3] or, windowed, [b, t, h, w, 3].
/// features: [b, 11] or, windowed, [b, t, 11]. Unused inputs stay empty.
struct ModelInput {
    Tensor images;
    Tensor features;
};

using LayerCache = std::variant<std::monostate, DenseCache, ActivationCache, Conv2dCache,
                                MaxPoolCache, BatchNormCache, LstmSequenceCache,
                                TimeDistributedCache, Shape>;

struct GraphCache {
    std::vector<LayerCache> image, feature, head;
    std::size_t batch = 0;
    std::size_t steps = 1;
    std::size_t image_width = 0;  // image-branch output width at the concat point
};

struct ModelForward {
    Tensor output;
    GraphCache cache;
};

/// Train mode updates batch-norm running statistics of non-frozen layers;
/// frozen batch-norm layers always run in eval mode.
ModelForward model_forward(ModelGraph& g, const ModelInput& in, Mode mode);

/// Gradients keyed by layer name, tensors in parameter_tensors() order.
/// Frozen layers are absent.
using GraphGrads = std::map<std::string, std::vector<Tensor>>;

GraphGrads model_backward(const ModelGraph& g, const GraphCache& cache, const Tensor& grad_out);

/// Eval-mode forward pass. Read-only on the graph.
Tensor predict(const ModelGraph& g, const ModelInput& in);
/// [b, 3]: the output itself, or the last step of a windowed output.
Tensor current_frame(const Tensor& output);
/// Eval-mode image-branch output, [b, 16] (or [b*t, 16] for windowed input).
Tensor image_embedding(const ModelGraph& g, const Tensor& images);

/// Every stored tensor of a layer, including batch-norm running statistics.
std::vector<Tensor*> parameter_tensors(LayerParams& p);
std::vector<const Tensor*> parameter_tensors(const LayerParams& p);
/// The tensors the optimizer may update (running statistics excluded).
std::vector<Tensor*> trainable_tensors(LayerParams& p);

/// Element count over trainable tensors of every layer, frozen or not.
std::size_t parameter_count(const ModelGraph& g);
/// Same, excluding frozen layers.
std::size_t trainable_parameter_count(const ModelGraph& g);

/// Optimizer bindings for every trainable tensor, keyed "layer/index".
std::vector<ParamRef> optimizer_bindings(ModelGraph& g, const GraphGrads& grads);

/*
 * `.avnm` model files, little-endian:
 *
 *   "AVNM1"                        5-byte magic
 *   entry_count   u32
 *   entry_count times:
 *     name_len    u32, then name bytes (UTF-8)
 *     tensor_count u32
 *     tensor_count times:
 *       rank u32, rank x u32 extents, product(extents) x f64
 *   crc32         u32 over every byte between the magic and the CRC
 *
 * Entries are the parameter layers in name order plus two pseudo-layers:
 * "__meta" holds [kind, image_h, image_w, window] and "__norm" holds the
 * feature mean, the feature std and the target scale.
 */
inline constexpr char kModelMagic[] = "AVNM1";

std::vector<std::uint8_t> encode_model(const ModelGraph& g);
ModelGraph decode_model(std::span<const std::uint8_t> bytes);
void save_model(const ModelGraph& g, const std::string& path);
ModelGraph load_model(const std::string& path);

}  // namespace avaccel
