#include "debias/optim.hpp"

#include "debias/error.hpp"

#include <algorithm>
#include <cmath>

namespace debias {

void adamw_step(Tensor& param, const Tensor& grad, Tensor& first_moment, Tensor& second_moment,
                std::int64_t step, double lr, const AdamWConfig& cfg) {
    if (grad.shape() != param.shape() || first_moment.shape() != param.shape() ||
        second_moment.shape() != param.shape()) {
        throw Error("adamw_step shape mismatch for parameter " + shape_string(param.shape()));
    }
    if (step < 1) {
        throw Error("adamw_step expects a 1-based step counter");
    }
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const double decay = lr * cfg.weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        first_moment[i] = cfg.beta1 * first_moment[i] + (1.0 - cfg.beta1) * g;
        second_moment[i] = cfg.beta2 * second_moment[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = first_moment[i] / correction1;
        const double v_hat = second_moment[i] / correction2;
        param[i] -= decay * param[i];
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

SchedulerState make_scheduler(double lr, int patience, double factor, double floor) {
    if (!(lr > 0.0) || !(floor > 0.0) || floor > lr) {
        throw Error("scheduler requires 0 < floor <= lr");
    }
    if (patience < 1 || !(factor > 0.0 && factor < 1.0)) {
        throw Error("scheduler requires patience >= 1 and factor in (0, 1)");
    }
    SchedulerState s;
    s.lr = lr;
    s.patience = patience;
    s.factor = factor;
    s.floor = floor;
    return s;
}

SchedulerState plateau_scheduler_step(SchedulerState state, double validation_loss) {
    if (!std::isfinite(validation_loss)) {
        throw Error("validation loss is not finite");
    }
    if (!state.has_best || validation_loss < state.best) {
        state.best = validation_loss;
        state.has_best = true;
        state.bad_epochs = 0;
        return state;
    }
    if (++state.bad_epochs >= state.patience) {
        state.lr = std::max(state.lr * state.factor, state.floor);
        state.bad_epochs = 0;
    }
    return state;
}

} // namespace debias
