#include <doctest.h>

#include <cmath>

#include "softhjb/rollout.hpp"

using namespace softhjb;

namespace {

ControlProblem const_reward_problem(double rho, double lambda, double reward) {
    ControlProblem pb;
    pb.state_dim = 1;
    pb.control_dim = 1;
    pb.rho = rho;
    pb.lambda = lambda;
    pb.control_set = BoxControlSet::symmetric(1, 1.0);  // |U| = 2
    pb.domain.kind = SpatialDomain::Kind::Ball;
    pb.domain.radius = 5.0;
    pb.drift = [](const Vec&, const Vec&) { return Vec::Zero(1); };
    pb.reward = [reward](const Vec&, const Vec&) { return reward; };
    pb.diffusion = [](const Vec&) { return Mat::Zero(1, 1); };
    return pb;
}

PolicyNet uniform_policy(const ControlGrid& grid, int state_dim) {
    PolicyNet pnet = PolicyNet::make(state_dim, {4}, grid, 3);
    pnet.net.params.setZero();
    return pnet;
}

ControlProblem lqr_1d(double sigma) {
    LqrSpec spec;
    spec.A = Mat::Constant(1, 1, -1.0);
    spec.B = Mat::Constant(1, 1, 1.0);
    spec.Q = Mat::Constant(1, 1, 1.0);
    spec.R_cost = Mat::Constant(1, 1, 1.0);
    spec.sigma_scale = sigma;
    spec.u_bound = 2.0;
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Ball;
    dom.radius = 4.0;
    return make_lqr_problem(spec, 1.0, 0.5, dom);
}

}  // namespace

TEST_CASE("sde config validation") {
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 10.0;
    CHECK_NOTHROW(cfg.validate(1.0));
    cfg.dt = 1.5;
    cfg.horizon = 3.0;
    CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);  // dt >= 1/rho
    cfg.dt = 0.3;
    cfg.horizon = 1.0;  // not a multiple of dt
    CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);
    cfg.dt = -0.1;
    CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);
}

TEST_CASE("em_step: deterministic drift and zero-noise cases") {
    auto pb = const_reward_problem(1.0, 1.0, 0.0);
    Vec x = Vec::Constant(1, 0.3);
    Vec c = Vec::Constant(1, 2.0);
    Vec step = em_step(pb, x, c, 0.1, Vec::Zero(1));
    CHECK(step[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(em_step(pb, x, Vec::Zero(1), 0.1, Vec::Zero(1))[0] == x[0]);
}

TEST_CASE("em_step: increments distributed as N(0, dt I)") {
    ControlProblem pb = const_reward_problem(1.0, 1.0, 0.0);
    pb.diffusion = [](const Vec&) { return Mat::Identity(1, 1); };
    const double dt = 0.04;
    const int n = 100000;
    auto rng = make_rng(17, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double sum = 0.0, sumsq = 0.0;
    Vec x = Vec::Zero(1);
    for (int i = 0; i < n; ++i) {
        Vec noise = Vec::Constant(1, gauss(rng));
        double inc = em_step(pb, x, Vec::Zero(1), dt, noise)[0];
        sum += inc;
        sumsq += inc * inc;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(dt / n));
    CHECK(std::abs(var - dt) < 3.0 * dt * std::sqrt(2.0 / n));
}

TEST_CASE("discounted reward: closed-form constant-rate case") {
    // b=0, sigma=0, r=1, uniform pi, lambda=1, |U|=2: rate = 1 + ln 2
    auto pb = const_reward_problem(1.0, 1.0, 1.0);
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 20.0;
    double got = discounted_reward_path(pb, grid, pnet, Vec::Zero(1), cfg);
    const double rate = 1.0 + std::log(2.0);
    // exact midpoint-rule geometric sum
    double expected = rate * cfg.dt * std::exp(-0.5 * cfg.dt) *
                      (1.0 - std::exp(-cfg.horizon)) / (1.0 - std::exp(-cfg.dt));
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got == doctest::Approx(rate).epsilon(1e-4));
}

TEST_CASE("discounted reward: zero reward and zero lambda give zero") {
    auto pb = const_reward_problem(1.0, 0.0, 0.0);
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 5.0;
    CHECK(discounted_reward_path(pb, grid, pnet, Vec::Zero(1), cfg) == 0.0);
}

TEST_CASE("evaluate_policy: deterministic problem has zero standard error") {
    auto pb = const_reward_problem(1.0, 1.0, 1.0);
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 10.0;
    cfg.paths = 16;
    auto fixed_x0 = [](std::mt19937_64&) { return Vec::Zero(1); };
    auto rep = evaluate_policy(pb, grid, pnet, fixed_x0, cfg);
    CHECK(rep.std_error < 1e-14);  // identical paths up to mean-rounding
    CHECK(rep.truncated_paths == 0);
    CHECK(rep.mean == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-3));
}

TEST_CASE("evaluate_policy: closed-form mean within 3 standard errors") {
    ControlProblem pb = const_reward_problem(1.0, 1.0, 1.0);
    pb.diffusion = [](const Vec&) { return 0.3 * Mat::Identity(1, 1); };
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 10.0;
    cfg.paths = 256;
    cfg.seed = 5;
    auto rep = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg);
    // reward rate is state-independent, so noise cannot bias the mean
    CHECK(std::abs(rep.mean - (1.0 + std::log(2.0))) <= 3.0 * rep.std_error + 1e-3);
}

TEST_CASE("evaluate_policy: bitwise deterministic and thread-count independent") {
    auto pb = lqr_1d(0.2);
    auto grid = build_control_grid(pb.control_set, 7);
    auto pnet = PolicyNet::make(1, {6}, grid, 9);
    SdeConfig cfg;
    cfg.dt = 0.02;
    cfg.horizon = 4.0;
    cfg.paths = 32;
    cfg.seed = 11;
    auto rep1 = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg);
    set_worker_threads(4);
    auto rep2 = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg);
    set_worker_threads(1);
    CHECK(rep1.mean == rep2.mean);
    CHECK(rep1.std_error == rep2.std_error);
    CHECK(rep1.path_rewards == rep2.path_rewards);
}

TEST_CASE("evaluate_policy: tail bound dominates horizon truncation error") {
    auto pb = lqr_1d(0.1);
    auto grid = build_control_grid(pb.control_set, 7);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.02;
    cfg.horizon = 4.0;
    cfg.paths = 64;
    cfg.seed = 23;
    auto short_rep = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg);
    SdeConfig cfg2 = cfg;
    cfg2.horizon = 8.0;
    auto long_rep = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg2);
    CHECK(std::abs(short_rep.mean - long_rep.mean) <=
          short_rep.tail_bound + 3.0 * (short_rep.std_error + long_rep.std_error));
}

TEST_CASE("evaluate_policy: relaxed and sampled control modes agree in mean") {
    auto pb = lqr_1d(0.1);
    auto grid = build_control_grid(pb.control_set, 7);
    auto pnet = PolicyNet::make(1, {6}, grid, 31);
    SdeConfig cfg;
    cfg.dt = 0.02;
    cfg.horizon = 6.0;
    cfg.paths = 512;
    cfg.seed = 41;
    auto relaxed = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg);
    SdeConfig cfg2 = cfg;
    cfg2.sample_control = true;
    cfg2.seed = 42;
    auto sampled = evaluate_policy(pb, grid, pnet, uniform_x0_sampler(pb.domain, 1), cfg2);
    double pooled = std::hypot(relaxed.std_error, sampled.std_error);
    CHECK(std::abs(relaxed.mean - sampled.mean) <= 3.0 * pooled + 1e-3);
}

TEST_CASE("evaluate_policy: outward drift truncates paths") {
    ControlProblem pb = const_reward_problem(1.0, 1.0, 1.0);
    pb.domain.radius = 0.5;
    pb.drift = [](const Vec&, const Vec&) { return Vec::Constant(1, 5.0); };
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    SdeConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 2.0;
    cfg.paths = 8;
    auto rep = evaluate_policy(pb, grid, pnet, [](std::mt19937_64&) { return Vec::Zero(1); }, cfg);
    CHECK(rep.truncated_paths == cfg.paths);
    CHECK(rep.all_truncated);
}
