#include <doctest.h>

#include <cmath>

#include "softhjb/optimizer.hpp"
#include "softhjb/rng.hpp"

using namespace softhjb;
using Vec = Eigen::VectorXd;

TEST_CASE("adam: zero gradient leaves params unchanged") {
    auto st = AdamState::make(4, 1e-3);
    Vec p = Vec::LinSpaced(4, -1.0, 2.0);
    Vec before = p;
    adam_step(st, p, Vec::Zero(4));
    CHECK(p == before);
}

TEST_CASE("adam: first step is approximately -lr * sign(g)") {
    const double lr = 1e-3;
    auto st = AdamState::make(3, lr);
    Vec p = Vec::Zero(3);
    Vec g(3);
    g << 5.0, -2.0, 1.5;  // |g| >> epsilon
    adam_step(st, p, g);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(std::abs(p[i]) - lr) < 1e-8 * lr);
        CHECK(p[i] * g[i] < 0.0);
    }
}

TEST_CASE("adam: drives a convex quadratic to the minimizer") {
    auto rng = make_rng(7, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec target(6), p(6);
    for (int i = 0; i < 6; ++i) {
        target[i] = gauss(rng);
        p[i] = gauss(rng);
    }
    auto st = AdamState::make(6, 1e-2);
    for (int k = 0; k < 5000; ++k) {
        Vec g = 2.0 * (p - target);
        adam_step(st, p, g);
        if ((p - target).norm() < 1e-6) break;
    }
    CHECK((p - target).norm() < 1e-6);
}

TEST_CASE("adam: rejects shape mismatch and non-finite gradients") {
    auto st = AdamState::make(3, 1e-3);
    Vec p = Vec::Zero(3);
    CHECK_THROWS_AS(adam_step(st, p, Vec::Zero(2)), std::invalid_argument);
    Vec bad = Vec::Zero(3);
    bad[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(adam_step(st, p, bad));
}

static double quad_loss(const Vec& params, Vec& grad) {
    grad += 2.0 * params;
    return params.squaredNorm();
}

TEST_CASE("train_to_budget: zero epochs rejected") {
    Vec p = Vec::Ones(2);
    TrainBudget b;
    b.max_epochs = 0;
    CHECK_THROWS_AS(train_to_budget(quad_loss, p, b), std::invalid_argument);
}

TEST_CASE("train_to_budget: immediate return when already below target") {
    Vec p = Vec::Constant(2, 1e-8);
    TrainBudget b;
    b.max_epochs = 100;
    b.target_loss = 1e-6;
    auto res = train_to_budget(quad_loss, p, b);
    CHECK(res.loss_history.size() == 1);
}

TEST_CASE("train_to_budget: best-iterate return and running-min history") {
    Vec p = Vec::Constant(4, 2.0);
    Vec start = p;
    double start_loss = start.squaredNorm();
    TrainBudget b;
    b.max_epochs = 2000;
    b.lr = 1e-2;
    auto res = train_to_budget(quad_loss, p, b);
    CHECK(res.best_loss <= start_loss);
    CHECK(res.best_loss == doctest::Approx(p.squaredNorm()).epsilon(1e-12));
    double run_min = res.loss_history.front();
    for (double l : res.loss_history) {
        run_min = std::min(run_min, l);
        CHECK(res.best_loss <= run_min + 1e-15);
    }
    CHECK(res.best_loss < start_loss / 100.0);
}

TEST_CASE("train_to_budget: reproducible across runs") {
    auto run = [] {
        Vec p = Vec::LinSpaced(5, -1.0, 1.0);
        TrainBudget b;
        b.max_epochs = 500;
        b.lr = 5e-3;
        train_to_budget(quad_loss, p, b);
        return p;
    };
    Vec a = run(), b = run();
    CHECK(a == b);
}

TEST_CASE("train_to_budget: aborts on non-finite loss") {
    int calls = 0;
    auto loss_fn = [&](const Vec& params, Vec& grad) {
        ++calls;
        if (calls > 3) return std::numeric_limits<double>::infinity();
        grad += params;
        return params.squaredNorm();
    };
    Vec p = Vec::Ones(2);
    TrainBudget b;
    b.max_epochs = 100;
    CHECK_THROWS_AS(train_to_budget(loss_fn, p, b), std::runtime_error);
}
