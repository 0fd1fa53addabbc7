#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "avaccel/dataset.hpp"
#include "avaccel/optim.hpp"

namespace avaccel {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 16;
    std::uint64_t seed = 42;  // shuffle stream
    OptimizerSettings optimizer;
    bool shuffle = true;
    std::size_t eval_batch_size = 64;

    /// Throws ConfigError; batch_size must be at least 2 when the model
    /// trains a batch-norm layer on single frames.
    void validate(const ModelGraph& g) const;
};

struct LossReport {
    std::size_t epoch = 0;  // 1-based
    Real train_mae = 0;
    Real val_mae = 0;
};

/// Called after every epoch; returning false ends training after that epoch.
using EpochObserver = std::function<bool(const LossReport&)>;

/**
 * Mini-batch training. Each epoch visits the training samples in a seeded
 * Fisher-Yates order (or in storage order with shuffle off), takes one
 * optimizer step per batch, then measures full-pass train and val MAE in
 * eval mode with evaluate_mae. Windowed models report all-step MAE.
 *
 * When single-frame batch norm is trained, a trailing batch of one sample is
 * merged into the batch before it.
 *
 * Throws NumericError naming the epoch and batch if the loss or a gradient
 * becomes non-finite.
 */
std::vector<LossReport> fit(ModelGraph& g, const Dataset& train, const Dataset& val,
                            const TrainConfig& cfg, const EpochObserver& observer = {});

/// One optimizer step on one batch; returns the batch loss.
Real train_step(ModelGraph& g, OptimizerState& opt, const Batch& batch);

}  // namespace avaccel
