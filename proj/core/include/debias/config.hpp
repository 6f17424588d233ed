#pragma once

#include "debias/data.hpp"
#include "debias/image.hpp"
#include "debias/losses.hpp"
#include "debias/model.hpp"
#include "debias/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace debias {

struct OptimizerSettings {
    double lr = 1e-4;
    double weight_decay = 0.002;
    std::size_t batch_size = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamWConfig adamw() const { return {beta1, beta2, epsilon, weight_decay}; }
};

struct SchedulerSettings {
    int patience = 7;
    double factor = 0.1;
    double floor = 1e-7;
};

struct PreprocessSettings {
    bool clahe = true;
    ClaheConfig clahe_config{};
    bool augment = true;
    AugmentConfig augment_config{};
};

struct DataSettings {
    std::filesystem::path train;       // manifest CSV
    std::filesystem::path val;         // optional; empty means split from train
    std::filesystem::path image_root;  // optional; defaults to the manifest directory
    double val_fraction = 0.2;
};

struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    OptimizerSettings optimizer;
    SchedulerSettings scheduler;
    PreprocessSettings preprocess;
    DataSettings data;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    bool balanced_batches = true;
    std::filesystem::path output_dir;

    /// Checks value ranges; throws Error naming the offending field.
    void validate() const;
};

/// Parses a RunConfig JSON document. Relative data paths resolve against `base_dir`.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// FNV-1a over the canonical JSON of every setting that affects the trained
/// parameters (data paths, epochs and output directory excluded).
std::string config_hash(const RunConfig& cfg);

SynthConfig synth_config_from_json(const std::string& text);
SynthConfig load_synth_config(const std::filesystem::path& path);
std::string synth_config_to_json(const SynthConfig& cfg);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

} // namespace debias
