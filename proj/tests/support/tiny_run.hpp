// A seconds-scale training setup on in-memory synthetic data.
#pragma once

#include <debias/config.hpp>
#include <debias/data.hpp>
#include <debias/training.hpp>

#include <utility>

namespace debias::testing {

inline RunConfig tiny_run_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.model.height = cfg.model.width = 16;
    cfg.model.conv_channels = {4, 8};
    cfg.model.embedding_dim = 8;
    cfg.model.se_reduction = 2;
    cfg.model.spatial_kernel = 3;
    cfg.model.target = Attribute::gender;
    cfg.loss.grouping = Grouping::race_gender;
    cfg.optimizer.lr = 3e-3;
    cfg.optimizer.batch_size = 8;
    cfg.epochs = 4;
    cfg.seed = seed;
    return cfg;
}

inline std::pair<PreparedSet, PreparedSet> tiny_sets(const RunConfig& cfg) {
    SynthConfig synth;
    synth.groups = {{"a", "f", 12, 0.4, 0.05}, {"a", "m", 12, 0.4, 0.05},
                    {"b", "f", 12, 0.2, 0.05}, {"b", "m", 12, 0.2, 0.05}};
    synth.height = cfg.model.height;
    synth.width = cfg.model.width;
    synth.seed = cfg.seed;
    const Manifest all = generate_synthetic(synth);
    Rng rng(cfg.seed + 1);
    const auto [train, val] = stratified_split(all, 0.25, rng);
    return {prepare_set(train, cfg), prepare_set(val, cfg)};
}

} // namespace debias::testing
