#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace softhjb {

struct AdamState {
    Eigen::VectorXd m;   // first moment
    Eigen::VectorXd v;   // second moment
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState make(int n, double lr) {
        AdamState s;
        s.m = Eigen::VectorXd::Zero(n);
        s.v = Eigen::VectorXd::Zero(n);
        s.lr = lr;
        return s;
    }
};

// Bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (params.size() != state.m.size() || grad.size() != state.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    if (!grad.allFinite())
        throw std::runtime_error("adam_step: non-finite gradient");
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -=
        state.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.epsilon);
}

struct TrainBudget {
    int max_epochs = 1000;
    int batch = 0;             // 0 = full batch (batching is the caller's concern)
    double target_loss = -std::numeric_limits<double>::infinity();
    double lr = 1e-3;
};

struct TrainResult {
    std::vector<double> loss_history;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
};

// Gradient descent to a budget. loss_fn evaluates the loss at params and fills
// the gradient. Returns the best-seen parameters, not the last iterate.
inline TrainResult train_to_budget(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& loss_fn,
    Eigen::VectorXd& params, const TrainBudget& budget) {
    if (budget.max_epochs < 1)
        throw std::invalid_argument("train_to_budget: max_epochs must be >= 1");
    AdamState adam = AdamState::make(static_cast<int>(params.size()), budget.lr);
    Eigen::VectorXd grad(params.size());
    Eigen::VectorXd best = params;
    TrainResult res;
    for (int epoch = 0; epoch < budget.max_epochs; ++epoch) {
        grad.setZero();
        double loss = loss_fn(params, grad);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_to_budget: non-finite loss at epoch " +
                                     std::to_string(epoch));
        res.loss_history.push_back(loss);
        if (loss < res.best_loss) {
            res.best_loss = loss;
            res.best_epoch = epoch;
            best = params;
        }
        if (loss <= budget.target_loss) break;
        adam_step(adam, params, grad);
    }
    params = best;
    return res;
}

}  // namespace softhjb
