#include "avaccel/train.hpp"

#include <numeric>

namespace avaccel {

namespace {

bool trains_frame_batchnorm(const ModelGraph& g) {
    if (is_windowed(g.kind)) return false;  // batch-norm sees b*t >= t rows
    for (const LayerSpec& s : g.image_branch) {
        if (s.kind == LayerKind::batchnorm && !g.frozen.count(s.name)) return true;
    }
    return false;
}

// Batch boundaries over n samples.
std::vector<std::size_t> batch_edges(std::size_t n, std::size_t batch_size, bool merge_single) {
    std::vector<std::size_t> edges;
    for (std::size_t b = 0; b < n; b += batch_size) edges.push_back(b);
    edges.push_back(n);
    if (merge_single && edges.size() > 2 && n - edges[edges.size() - 2] == 1) {
        edges.erase(edges.end() - 2);
    }
    return edges;
}

}  // namespace

void TrainConfig::validate(const ModelGraph& g) const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be at least 1");
    if (trains_frame_batchnorm(g) && batch_size < 2) {
        throw ConfigError("batch_size must be at least 2 for a model with batch normalization");
    }
    if (!(optimizer.learning_rate > 0) || !(optimizer.beta1 >= 0 && optimizer.beta1 < 1) ||
        !(optimizer.beta2 >= 0 && optimizer.beta2 < 1) || !(optimizer.epsilon > 0)) {
        throw ConfigError("optimizer settings out of range");
    }
}

Real train_step(ModelGraph& g, OptimizerState& opt, const Batch& batch) {
    ModelForward f = model_forward(g, batch.input, Mode::train);
    const Real loss = mae_loss(f.output, batch.targets);
    const Tensor grad = mae_grad(f.output, batch.targets);
    const GraphGrads grads = model_backward(g, f.cache, grad);
    const auto refs = optimizer_bindings(g, grads);
    optimizer_step(opt, refs);
    return loss;
}

std::vector<LossReport> fit(ModelGraph& g, const Dataset& train, const Dataset& val,
                            const TrainConfig& cfg, const EpochObserver& observer) {
    cfg.validate(g);
    if (train.empty() || val.empty()) throw DataError("fit: training and validation sets must be non-empty");
    if (train.sample_count() == 1 && trains_frame_batchnorm(g)) {
        throw ConfigError("fit: batch normalization needs at least 2 training samples");
    }
    Rng rng(cfg.seed);
    OptimizerState opt;
    opt.settings = cfg.optimizer;
    std::vector<std::size_t> order(train.sample_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto edges = batch_edges(order.size(), cfg.batch_size, trains_frame_batchnorm(g));

    std::vector<LossReport> history;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng.below(i)]);
            }
        }
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            const std::span<const std::size_t> idx(order.data() + edges[b],
                                                   edges[b + 1] - edges[b]);
            try {
                train_step(g, opt, gather_batch(train, g.kind, idx));
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b + 1) + ": " + e.what());
            }
        }
        LossReport r;
        r.epoch = epoch;
        try {
            r.train_mae = evaluate_mae(g, train, cfg.eval_batch_size).all_steps;
            r.val_mae = evaluate_mae(g, val, cfg.eval_batch_size).all_steps;
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               " (evaluation): " + e.what());
        }
        history.push_back(r);
        if (observer && !observer(r)) break;
    }
    return history;
}

}  // namespace avaccel
