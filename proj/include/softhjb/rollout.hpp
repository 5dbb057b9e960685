#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "softhjb/nets.hpp"
#include "softhjb/parallel.hpp"
#include "softhjb/problem.hpp"
#include "softhjb/quadrature.hpp"
#include "softhjb/rng.hpp"

namespace softhjb {

struct SdeConfig {
    double dt = 1e-2;
    double horizon = 10.0;
    int paths = 256;
    std::uint64_t seed = 0;
    bool sample_control = false;  // default: relaxed mean drift

    void validate(double rho) const {
        if (!(dt > 0.0)) throw std::invalid_argument("sde: dt must be positive");
        if (rho > 0.0 && dt >= 1.0 / rho)
            throw std::invalid_argument("sde: dt must be < 1/rho");
        double steps = horizon / dt;
        if (!(horizon > 0.0) || std::abs(steps - std::lround(steps)) > 1e-9)
            throw std::invalid_argument("sde: horizon must be a positive multiple of dt");
        if (paths < 1) throw std::invalid_argument("sde: need at least one path");
    }

    int n_steps() const { return static_cast<int>(std::lround(horizon / dt)); }
};

struct EvalReport {
    double mean = 0.0;
    double std_error = 0.0;
    std::vector<double> path_rewards;
    double tail_bound = 0.0;  // e^{-rho T} * r_max / rho
    int truncated_paths = 0;
    bool all_truncated = false;
};

// Relaxed drift int_U b(x,u) pi(x,u) du over the control grid.
inline Vec relaxed_drift(const ControlProblem& pb, const ControlGrid& grid, const Vec& density,
                         const Vec& x) {
    Vec b = Vec::Zero(pb.state_dim);
    for (int j = 0; j < grid.size(); ++j)
        b += grid.weights[j] * density[j] * pb.drift(x, grid.points[j]);
    return b;
}

// One Euler-Maruyama step with precomputed drift.
inline Vec em_step(const ControlProblem& pb, const Vec& x, const Vec& drift, double dt,
                   const Vec& noise) {
    if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
    return x + drift * dt + pb.diffusion(x) * (std::sqrt(dt) * noise);
}

namespace detail {

// Sample a control node from the density (probabilities w_j pi_j).
inline int sample_control_node(const ControlGrid& grid, const Vec& density,
                               std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    double acc = 0.0;
    for (int j = 0; j < grid.size(); ++j) {
        acc += grid.weights[j] * density[j];
        if (u <= acc) return j;
    }
    return grid.size() - 1;
}

struct PathResult {
    double reward = 0.0;
    bool truncated = false;
    double max_abs_rate = 0.0;  // running reward-rate magnitude, for the tail bound
};

template <class Policy>
PathResult rollout_path(const ControlProblem& pb, const ControlGrid& grid, const Policy& pnet,
                        const Vec& x0, const SdeConfig& cfg, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    PathResult out;
    Vec x = x0;
    const int K = cfg.n_steps();
    for (int k = 0; k < K; ++k) {
        if (!pb.domain.contains(x)) {
            out.truncated = true;  // absorb-and-stop; discounted tail dropped
            break;
        }
        Vec pi = policy_density(pnet, grid, x);
        double rate = 0.0;
        for (int j = 0; j < grid.size(); ++j)
            rate += grid.weights[j] * pi[j] *
                    (pb.reward(x, grid.points[j]) - pb.lambda * std::log(pi[j]));
        out.max_abs_rate = std::max(out.max_abs_rate, std::abs(rate));
        // midpoint discount weight: O(dt^2) quadrature of e^{-rho t} per step
        out.reward += std::exp(-pb.rho * (k + 0.5) * cfg.dt) * cfg.dt * rate;
        Vec drift = cfg.sample_control
                        ? pb.drift(x, grid.points[sample_control_node(grid, pi, rng)])
                        : relaxed_drift(pb, grid, pi, x);
        Vec noise(pb.state_dim);
        for (int i = 0; i < pb.state_dim; ++i) noise[i] = gauss(rng);
        x = em_step(pb, x, drift, cfg.dt, noise);
    }
    return out;
}

}  // namespace detail

template <class Policy>
double discounted_reward_path(const ControlProblem& pb, const ControlGrid& grid,
                              const Policy& pnet, const Vec& x0, const SdeConfig& cfg,
                              std::uint64_t path_index = 0) {
    cfg.validate(pb.rho);
    auto rng = make_rng(cfg.seed, 0x9a70000ULL + path_index);
    return detail::rollout_path(pb, grid, pnet, x0, cfg, rng).reward;
}

// Uniform initial-state sampler over the scaled domain (default: inner half).
inline std::function<Vec(std::mt19937_64&)> uniform_x0_sampler(const SpatialDomain& domain,
                                                               int dim, double scale = 0.5) {
    SpatialDomain inner = domain;
    inner.radius *= scale;
    inner.cutoff_width = 0.0;
    return [inner, dim](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> unif(-inner.radius, inner.radius);
        Vec x(dim);
        do {
            for (int i = 0; i < dim; ++i) x[i] = unif(rng);
        } while (!inner.contains(x));
        return x;
    };
}

template <class Policy>
EvalReport evaluate_policy(const ControlProblem& pb, const ControlGrid& grid, const Policy& pnet,
                           const std::function<Vec(std::mt19937_64&)>& x0_sampler,
                           const SdeConfig& cfg) {
    cfg.validate(pb.rho);
    if (cfg.paths < 2) throw std::invalid_argument("evaluate_policy: need >= 2 paths");
    EvalReport rep;
    rep.path_rewards.assign(cfg.paths, 0.0);
    std::vector<char> truncated(cfg.paths, 0);
    std::vector<double> max_rate(cfg.paths, 0.0);
    parallel_for_chunks(cfg.paths, 8, [&](int, int begin, int end) {
        for (int p = begin; p < end; ++p) {
            // per-path substream: results independent of thread scheduling
            auto rng = make_rng(cfg.seed, 0x9a70000ULL + p);
            Vec x0 = x0_sampler(rng);
            auto res = detail::rollout_path(pb, grid, pnet, x0, cfg, rng);
            rep.path_rewards[p] = res.reward;
            truncated[p] = res.truncated ? 1 : 0;
            max_rate[p] = res.max_abs_rate;
        }
    });
    double sum = 0.0, rmax = 0.0;
    for (int p = 0; p < cfg.paths; ++p) {
        sum += rep.path_rewards[p];
        rep.truncated_paths += truncated[p];
        rmax = std::max(rmax, max_rate[p]);
    }
    rep.mean = sum / cfg.paths;
    double ss = 0.0;
    for (double r : rep.path_rewards) ss += (r - rep.mean) * (r - rep.mean);
    rep.std_error = std::sqrt(ss / (cfg.paths - 1)) / std::sqrt(double(cfg.paths));
    rep.tail_bound = pb.rho > 0.0 ? std::exp(-pb.rho * cfg.horizon) * rmax / pb.rho
                                  : std::numeric_limits<double>::infinity();
    rep.all_truncated = rep.truncated_paths == cfg.paths;
    return rep;
}

}  // namespace softhjb
