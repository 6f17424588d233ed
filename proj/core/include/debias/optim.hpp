#pragma once

#include "debias/tensor.hpp"

#include <cstdint>

namespace debias {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.002;
};

/// One AdamW update. Weight decay is applied to the parameter directly and
/// never enters the moment estimates. `step` is 1-based.
void adamw_step(Tensor& param, const Tensor& grad, Tensor& first_moment, Tensor& second_moment,
                std::int64_t step, double lr, const AdamWConfig& cfg = {});

/// Reduce-on-plateau learning-rate schedule driven by validation loss.
struct SchedulerState {
    double lr = 1e-4;
    double best = 0.0;
    bool has_best = false;
    int bad_epochs = 0;
    int patience = 7;
    double factor = 0.1;
    double floor = 1e-7;

    friend bool operator==(const SchedulerState&, const SchedulerState&) = default;
};

SchedulerState make_scheduler(double lr, int patience = 7, double factor = 0.1, double floor = 1e-7);

SchedulerState plateau_scheduler_step(SchedulerState state, double validation_loss);

} // namespace debias
