#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "softhjb/ledger.hpp"
#include "softhjb/nets.hpp"
#include "softhjb/optimizer.hpp"
#include "softhjb/parallel.hpp"
#include "softhjb/problem.hpp"
#include "softhjb/quadrature.hpp"

namespace softhjb {

// Soft policy improvement from a value gradient p at state x:
// pi_j = exp(f_j / lambda) / sum_j' w_j' exp(f_j' / lambda), f_j = f(x, u_j, p).
// Computed with max subtraction; quadrature-normalized so sum_j w_j pi_j = 1.
inline Vec softmax_target_from_gradient(const ControlProblem& pb, const ControlGrid& grid,
                                        const Vec& x, const Vec& grad_v) {
    const int M = grid.size();
    Vec f(M);
    for (int j = 0; j < M; ++j)
        f[j] = pb.drift(x, grid.points[j]).dot(grad_v) + pb.reward(x, grid.points[j]);
    if (!f.allFinite())
        throw std::runtime_error("softmax target: non-finite exponent");
    return weighted_softmax(f / pb.lambda, grid.weights);
}

template <class ValueField>
Vec softmax_policy_target(const ControlProblem& pb, const ControlGrid& grid,
                          const ValueField& vnet, const Vec& x) {
    return softmax_target_from_gradient(pb, grid, x, vnet.grad(x));
}

// Evaluation-PDE residual at x for an explicit density over the grid nodes:
// R = rho v - 1/2 tr(Sigma D^2 v) - int_U [f(x,u,grad v) - lambda ln pi] pi du.
template <class ValueField>
double pde_residual_density(const ControlProblem& pb, const ControlGrid& grid,
                            const ValueField& vnet, const Vec& density, const Vec& x) {
    if (density.size() != grid.weights.size())
        throw std::invalid_argument("pde_residual: density length mismatch");
    if (density.minCoeff() <= 0.0)
        throw std::runtime_error("pde_residual: nonpositive policy density");
    auto bundle = vnet.bundle(x, pb.sigma_sq(x));
    Vec integrand(grid.size());
    for (int j = 0; j < grid.size(); ++j) {
        double f = pb.drift(x, grid.points[j]).dot(bundle.grad_x) + pb.reward(x, grid.points[j]);
        integrand[j] = (f - pb.lambda * std::log(density[j])) * density[j];
    }
    return pb.rho * bundle.value - 0.5 * bundle.sigma_hess_trace -
           quad_integrate(grid, integrand);
}

template <class ValueField>
double pde_residual(const ControlProblem& pb, const ControlGrid& grid, const ValueField& vnet,
                    const PolicyNet& pnet, const Vec& x) {
    return pde_residual_density(pb, grid, vnet, policy_density(pnet, grid, x), x);
}

// L_value = (1/N) sum_i |R(x_i)|^2
template <class ValueField>
double value_loss(const ControlProblem& pb, const ControlGrid& grid, const CollocationSet& colloc,
                  const ValueField& vnet, const PolicyNet& pnet) {
    if (colloc.size() < 1) throw std::invalid_argument("value_loss: empty collocation set");
    double acc = 0.0;
    for (const auto& x : colloc.points) {
        double r = pde_residual(pb, grid, vnet, pnet, x);
        acc += r * r;
    }
    return acc / colloc.size();
}

// Average over states of the quadrature-weighted KL divergence
// KL(pi_omega(x_i) || target_i) = sum_j w_j pi_j ln(pi_j / target_j).
inline double policy_kl_loss(const ControlGrid& grid, const CollocationSet& colloc,
                             const PolicyNet& pnet, const std::vector<Vec>& targets) {
    if (static_cast<int>(targets.size()) != colloc.size())
        throw std::invalid_argument("policy_kl_loss: target count mismatch");
    double acc = 0.0;
    for (int i = 0; i < colloc.size(); ++i) {
        if (targets[i].minCoeff() <= 0.0)
            throw std::runtime_error("policy_kl_loss: nonpositive target density");
        Vec pi = policy_density(pnet, grid, colloc.points[i]);
        Vec integrand = pi.array() * (pi.array().log() - targets[i].array().log());
        acc += quad_integrate(grid, integrand);
    }
    return acc / colloc.size();
}

// Step-8 stopping metric: (1/N) sum_i |v_new(x_i) - v_old(x_i)|^2.
template <class VA, class VB>
double convergence_metric(const CollocationSet& colloc, const VA& vnet_new, const VB& vnet_old) {
    double acc = 0.0;
    for (const auto& x : colloc.points) {
        double d = vnet_new.value(x) - vnet_old.value(x);
        acc += d * d;
    }
    return acc / colloc.size();
}

// ---- training internals ---------------------------------------------------

namespace detail {

// Residual coefficients at one collocation point for a frozen policy:
// R = rho v - 1/2 trace - c_grad . grad v - c0.
struct ValuePoint {
    Vec x;
    std::vector<Vec> dirs;  // Sigma = sum_k dir_k dir_k^T
    Vec c_grad;
    double c0 = 0.0;
};

inline std::vector<ValuePoint> build_value_points(const ControlProblem& pb,
                                                  const ControlGrid& grid,
                                                  const CollocationSet& colloc,
                                                  const PolicyNet& pnet) {
    std::vector<ValuePoint> pts;
    pts.reserve(colloc.size());
    for (const auto& x : colloc.points) {
        Vec pi = policy_density(pnet, grid, x);
        if (pi.minCoeff() <= 0.0) throw std::runtime_error("value training: nonpositive density");
        ValuePoint p;
        p.x = x;
        p.dirs = sigma_directions(pb.sigma_sq(x));
        p.c_grad = Vec::Zero(pb.state_dim);
        p.c0 = 0.0;
        for (int j = 0; j < grid.size(); ++j) {
            double wpi = grid.weights[j] * pi[j];
            p.c_grad += wpi * pb.drift(x, grid.points[j]);
            p.c0 += wpi * (pb.reward(x, grid.points[j]) - pb.lambda * std::log(pi[j]));
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

// Mean squared residual and its exact parameter gradient over a point set.
inline double value_loss_and_grad(const ControlProblem& pb, const Mlp& net,
                                  const std::vector<ValuePoint>& pts, Vec& grad) {
    const int N = static_cast<int>(pts.size());
    const int n_chunks = (N + 63) / 64;
    std::vector<Vec> chunk_grad(n_chunks, Vec::Zero(net.n_params()));
    std::vector<double> chunk_loss(n_chunks, 0.0);
    parallel_for_chunks(N, 64, [&](int c, int begin, int end) {
        ad::Tape tape;
        for (int i = begin; i < end; ++i) {
            const ValuePoint& p = pts[i];
            tape.clear();
            TapedMlp tm = make_taped(tape, net);
            auto tb = taped_bundle(tape, net, tm, p.x, p.dirs);
            int lin = tape.dot_const(tb.grad, p.c_grad.transpose());
            int res = tape.sub(tape.add(tape.scale(tb.value, pb.rho), tape.scale(tb.sigma_trace, -0.5)),
                               tape.add(lin, tape.scalar_const(p.c0)));
            int sq = tape.cwise_mul(res, res);
            tape.backward(sq);
            chunk_loss[c] += tape.scalar(sq);
            collect_grad(tape, net, tm, 1.0 / N, chunk_grad[c]);
        }
    });
    double loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
        loss += chunk_loss[c];
        grad += chunk_grad[c];
    }
    return loss / N;
}

struct PolicyPoint {
    Vec x;
    Vec log_target;
};

inline double policy_loss_and_grad(const Mlp& net, const Vec& weights,
                                   const std::vector<PolicyPoint>& pts, Vec& grad) {
    const int N = static_cast<int>(pts.size());
    const int n_chunks = (N + 63) / 64;
    std::vector<Vec> chunk_grad(n_chunks, Vec::Zero(net.n_params()));
    std::vector<double> chunk_loss(n_chunks, 0.0);
    parallel_for_chunks(N, 64, [&](int c, int begin, int end) {
        ad::Tape tape;
        for (int i = begin; i < end; ++i) {
            const PolicyPoint& p = pts[i];
            tape.clear();
            TapedMlp tm = make_taped(tape, net);
            int logits = taped_forward(tape, net, tm, p.x);
            int logpi = taped_log_density(tape, logits, weights);
            int pi = tape.exp_(logpi);
            int diff = tape.add_const(logpi, -p.log_target);
            int kl = tape.dot_const(tape.cwise_mul(pi, diff), weights);
            tape.backward(kl);
            chunk_loss[c] += tape.scalar(kl);
            collect_grad(tape, net, tm, 1.0 / N, chunk_grad[c]);
        }
    });
    double loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
        loss += chunk_loss[c];
        grad += chunk_grad[c];
    }
    return loss / N;
}

// Fit net to a reference scalar field by least squares (warm start).
template <class Field>
void regress_to_field(Mlp& net, const Field& ref, const CollocationSet& colloc, int epochs,
                      double lr) {
    std::vector<double> targets;
    targets.reserve(colloc.size());
    for (const auto& x : colloc.points) targets.push_back(ref.value(x));
    auto loss_fn = [&](const Vec& params, Vec& grad) {
        Mlp cur = net;
        cur.params = params;
        const int N = colloc.size();
        double loss = 0.0;
        ad::Tape tape;
        for (int i = 0; i < N; ++i) {
            tape.clear();
            TapedMlp tm = make_taped(tape, cur);
            int v = taped_forward(tape, cur, tm, colloc.points[i]);
            int diff = tape.add_const(v, Mat::Constant(1, 1, -targets[i]));
            int sq = tape.cwise_mul(diff, diff);
            tape.backward(sq);
            loss += tape.scalar(sq);
            collect_grad(tape, cur, tm, 1.0 / N, grad);
        }
        return loss / N;
    };
    TrainBudget budget;
    budget.max_epochs = epochs;
    budget.lr = lr;
    train_to_budget(loss_fn, net.params, budget);
}

}  // namespace detail

// ---- PINN-SPI driver ------------------------------------------------------

struct PinnSpiConfig {
    int quad_per_dim = 8;
    int colloc_n = 512;
    std::uint64_t seed = 1;
    bool resample_colloc = true;

    std::vector<int> value_hidden{32, 32, 32};
    std::vector<int> policy_hidden{32, 32};

    double lr_value = 1e-3;
    double lr_policy = 1e-3;
    int epochs_value = 800;
    int epochs_policy = 300;
    int warmup_epochs = 500;  // v0 regression epochs for the quadratic initializer

    int max_iters = 50;
    double epsilon = 1e-6;

    // v0 initializer: zero function, or quadratic prior x^T P0 x + c0.
    bool quadratic_init = false;
    Mat P0;
    double c0 = 0.0;
    // When set (requires quadratic_init), the prior is kept as a fixed
    // baseline and the network is trained as a correction on top of it; the
    // baseline's PDE contribution folds into the residual constants exactly.
    bool quadratic_baseline = false;
};

struct IterationState {
    int n = 0;
    Vec value_params;
    Vec policy_params;
    double value_loss = 0.0;
    double policy_loss = 0.0;
    double convergence = 0.0;
};

struct PinnSpiResult {
    Mlp vnet;
    bool has_baseline = false;
    QuadraticValue baseline;  // full value = baseline + vnet when has_baseline
    PolicyNet pnet;
    ControlGrid grid;
    ErrorLedger ledger;
    bool converged = false;
    bool diverged = false;
    std::string divergence_message;
};

// Per-iteration observer; may fill oracle_l2 / reward_estimate on the row and
// receives the current networks (for checkpointing or evaluation).
using IterationCallback =
    std::function<void(LedgerRow&, const Mlp& vnet, const PolicyNet& pnet, const ControlGrid&)>;

inline PinnSpiResult pinn_spi_run(const ControlProblem& pb, const PinnSpiConfig& cfg,
                                  const IterationCallback& on_iteration = {}) {
    pb.validate_scalars();
    PinnSpiResult out;
    out.grid = build_control_grid(pb.control_set, cfg.quad_per_dim);
    const ControlGrid& grid = out.grid;

    std::vector<int> vw;
    vw.push_back(pb.state_dim);
    vw.insert(vw.end(), cfg.value_hidden.begin(), cfg.value_hidden.end());
    vw.push_back(1);
    out.vnet = Mlp::make(vw, substream_seed(cfg.seed, 1));
    out.pnet = PolicyNet::make(pb.state_dim, cfg.policy_hidden, grid, substream_seed(cfg.seed, 2));

    auto colloc = sample_collocation(pb.domain, pb.state_dim, cfg.colloc_n,
                                     substream_seed(cfg.seed, 100));

    // v0 and initial policy target
    QuadraticValue v0{cfg.quadratic_init && cfg.P0.rows() == pb.state_dim
                          ? cfg.P0
                          : Mat::Zero(pb.state_dim, pb.state_dim),
                      cfg.quadratic_init ? cfg.c0 : 0.0};
    out.has_baseline = cfg.quadratic_baseline && cfg.quadratic_init;
    if (out.has_baseline) {
        out.baseline = v0;
        // the net carries only the correction; start it near the zero function
        if (cfg.warmup_epochs > 0)
            detail::regress_to_field(
                out.vnet, QuadraticValue{Mat::Zero(pb.state_dim, pb.state_dim), 0.0}, colloc,
                cfg.warmup_epochs, cfg.lr_value);
    } else if (cfg.quadratic_init && cfg.warmup_epochs > 0) {
        detail::regress_to_field(out.vnet, v0, colloc, cfg.warmup_epochs, cfg.lr_value);
    }

    auto train_policy_to = [&](const auto& field) {
        std::vector<detail::PolicyPoint> pts;
        pts.reserve(colloc.size());
        for (const auto& x : colloc.points) {
            Vec tgt = softmax_policy_target(pb, grid, field, x);
            pts.push_back({x, tgt.array().log().matrix()});
        }
        auto loss_fn = [&](const Vec& params, Vec& grad) {
            Mlp cur = out.pnet.net;
            cur.params = params;
            return detail::policy_loss_and_grad(cur, grid.weights, pts, grad);
        };
        TrainBudget budget;
        budget.max_epochs = cfg.epochs_policy;
        budget.lr = cfg.lr_policy;
        return train_to_budget(loss_fn, out.pnet.net.params, budget);
    };

    try {
        // omega_0: fit the softmax target induced by v0
        train_policy_to(v0);

        for (int n = 1; n <= cfg.max_iters; ++n) {
            // policy evaluation: train theta with omega frozen
            auto pts = detail::build_value_points(pb, grid, colloc, out.pnet);
            if (out.has_baseline) {
                // fold the baseline's exact PDE contribution into the constants
                // so the trained residual is that of the full field
                for (auto& p : pts) {
                    auto qb = out.baseline.bundle(p.x, pb.sigma_sq(p.x));
                    p.c0 += -pb.rho * qb.value + 0.5 * qb.sigma_hess_trace +
                            p.c_grad.dot(qb.grad_x);
                }
            }
            Vec old_params = out.vnet.params;
            auto loss_fn = [&](const Vec& params, Vec& grad) {
                Mlp cur = out.vnet;
                cur.params = params;
                return detail::value_loss_and_grad(pb, cur, pts, grad);
            };
            TrainBudget budget;
            budget.max_epochs = cfg.epochs_value;
            budget.lr = cfg.lr_value;
            auto vres = train_to_budget(loss_fn, out.vnet.params, budget);

            Mlp old_net = out.vnet;
            old_net.params = old_params;
            double step8 = convergence_metric(colloc, MlpValue{&out.vnet}, MlpValue{&old_net});

            // policy improvement: refresh the target from the new value net
            auto pres = out.has_baseline
                            ? train_policy_to(BaselineValue{&out.vnet, out.baseline})
                            : train_policy_to(MlpValue{&out.vnet});

            LedgerRow row;
            row.n = n;
            row.value_loss = vres.best_loss;
            row.policy_loss = pres.best_loss;
            row.kl_mean = pres.best_loss;
            row.step8_metric = step8;
            row.q_norm = std::sqrt(colloc.domain_volume * vres.best_loss);
            {
                // policy gap r_n against the current softmax target
                double acc = 0.0;
                for (const auto& x : colloc.points) {
                    Vec tgt = out.has_baseline
                                  ? softmax_policy_target(
                                        pb, grid, BaselineValue{&out.vnet, out.baseline}, x)
                                  : softmax_policy_target(pb, grid, MlpValue{&out.vnet}, x);
                    Vec pi = policy_density(out.pnet, grid, x);
                    acc += quad_integrate(grid, (pi - tgt).cwiseAbs2());
                }
                row.r_norm = std::sqrt(colloc.domain_volume * acc / colloc.size());
            }
            if (on_iteration) on_iteration(row, out.vnet, out.pnet, grid);
            out.ledger.append(row);

            if (step8 < cfg.epsilon) {
                out.converged = true;
                break;
            }
            if (cfg.resample_colloc && n < cfg.max_iters)
                colloc = sample_collocation(pb.domain, pb.state_dim, cfg.colloc_n,
                                            substream_seed(cfg.seed, 100 + n));
        }
    } catch (const std::runtime_error& e) {
        out.diverged = true;
        out.divergence_message = e.what();
    }
    return out;
}

}  // namespace softhjb
