#pragma once

#include "debias/model.hpp"
#include "debias/optim.hpp"
#include "debias/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace debias {

/// One row of history.csv.
struct HistoryRow {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    double ce = 0.0;
    double kl = 0.0;
    double intra = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;

    friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct Checkpoint {
    ModelState state;
    SchedulerState scheduler;
    Rng rng;
    std::int64_t epoch = 0;
    std::vector<HistoryRow> history;
    std::string config_hash;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr int kCheckpointVersion = 1;

/// Single file: one line of JSON metadata (names, shapes, version, hashes,
/// scheduler, rng, history) followed by little-endian float64 tensor data
/// in header order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_history_csv(const std::vector<HistoryRow>& history);
void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path);

} // namespace debias
