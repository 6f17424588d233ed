#pragma once

#include "debias/checkpoint.hpp"
#include "debias/config.hpp"
#include "debias/data.hpp"
#include "debias/fairness.hpp"
#include "debias/model.hpp"

#include <vector>

namespace debias {

/// A manifest with its preprocessed images, labels and loss groups resolved.
struct PreparedSet {
    Manifest manifest;
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> groups;
};

/// Loads (or takes in-memory) pixels, applies CLAHE when configured and
/// resolves target labels and groups.
PreparedSet prepare_set(const Manifest& manifest, const RunConfig& cfg);

/// Train and validation sets as described by cfg.data. Without an explicit
/// validation manifest, 20% (val_fraction) of each race x gender cell is
/// held out with a seed-derived stream.
std::pair<PreparedSet, PreparedSet> load_training_sets(const RunConfig& cfg);

struct TrainingSession {
    RunConfig config;
    ModelState state;
    SchedulerState scheduler;
    Rng rng;
    std::int64_t epoch = 0;
    std::vector<HistoryRow> history;

    Checkpoint checkpoint() const;
};

TrainingSession start_training(const RunConfig& cfg);
TrainingSession resume_training(const RunConfig& cfg, Checkpoint checkpoint);

/// One pass over the training set followed by validation and a scheduler step.
HistoryRow run_epoch(TrainingSession& session, const PreparedSet& train, const PreparedSet& val);

struct EvalResult {
    LossBreakdown loss;
    double accuracy = 0.0;  // percent
    PredictionLog log;
};

/// Forward-only pass in fixed-size chunks. The intra-class term uses each
/// chunk's own statistics.
EvalResult evaluate_set(const ModelState& state, const PreparedSet& set, const LossConfig& loss_cfg,
                        std::size_t batch_size);

/// Stacks images[indices] into a BxCxHxW tensor.
Tensor stack_images(const std::vector<Tensor>& images, std::span<const std::size_t> indices);

} // namespace debias
