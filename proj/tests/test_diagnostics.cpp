#include <doctest.h>

#include <cmath>

#include "softhjb/diagnostics.hpp"

using namespace softhjb;

namespace {

ControlProblem null_problem(double rho = 1.0, double lambda = 1.0) {
    ControlProblem pb;
    pb.state_dim = 1;
    pb.control_dim = 1;
    pb.rho = rho;
    pb.lambda = lambda;
    pb.control_set = BoxControlSet::symmetric(1, 1.0);
    pb.domain.kind = SpatialDomain::Kind::Ball;
    pb.domain.radius = 1.0;
    pb.drift = [](const Vec&, const Vec&) { return Vec::Zero(1); };
    pb.reward = [](const Vec&, const Vec&) { return 0.0; };
    pb.diffusion = [](const Vec&) { return Mat::Zero(1, 1); };
    return pb;
}

PolicyNet uniform_policy(const ControlGrid& grid, int state_dim) {
    PolicyNet pnet = PolicyNet::make(state_dim, {4}, grid, 3);
    pnet.net.params.setZero();
    return pnet;
}

}  // namespace

TEST_CASE("residual_q_norm: zero and constant residual surrogates") {
    auto pb = null_problem();
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 1);
    CollocationSet colloc;
    colloc.points = {Vec::Zero(1), Vec::Constant(1, 0.4)};
    colloc.domain_volume = 2.0;
    // residual of a constant v = k is k - ln 2 here
    QuadraticValue vfix{Mat::Zero(1, 1), std::log(2.0)};
    CHECK(residual_q_norm(pb, grid, colloc, vfix, pnet) < 1e-15);
    QuadraticValue voff{Mat::Zero(1, 1), std::log(2.0) + 0.3};
    CHECK(residual_q_norm(pb, grid, colloc, voff, pnet) ==
          doctest::Approx(0.3 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("residual_q_norm: matches sqrt(Vol * L_value) identically") {
    auto spec = make_random_stable_lqr(2, 1, 3);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto grid = build_control_grid(pb.control_set, 4);
    auto pnet = uniform_policy(grid, 2);
    Mlp vnet = Mlp::make({2, 8, 1}, 5);
    auto colloc = sample_collocation(pb.domain, 2, 64, 6);
    double q = residual_q_norm(pb, grid, colloc, MlpValue{&vnet}, pnet);
    double lv = value_loss(pb, grid, colloc, MlpValue{&vnet}, pnet);
    CHECK(q * q == doctest::Approx(colloc.domain_volume * lv).epsilon(1e-12));
}

TEST_CASE("policy_gap_r: zero for matching targets, arithmetic case") {
    auto pb = null_problem();
    auto grid = build_control_grid(pb.control_set, 2);  // 2 nodes, weights (1,1)
    auto pnet = uniform_policy(grid, 1);
    CollocationSet colloc;
    colloc.points = {Vec::Zero(1)};
    colloc.domain_volume = 1.0;
    std::vector<Vec> same(1, Vec::Constant(2, 0.5));
    CHECK(policy_gap_r(grid, colloc, pnet, same) < 1e-15);
    // constant logits (ln 3, 0) give density (0.75, 0.25)
    pnet.net.params[pnet.net.b_offset(pnet.net.n_layers() - 1)] = std::log(3.0);
    std::vector<Vec> tgt(1, Vec::Constant(2, 0.5));
    double gap = policy_gap_r(grid, colloc, pnet, tgt);
    CHECK(gap == doctest::Approx(std::sqrt(2.0 * 0.0625)).epsilon(1e-10));
}

TEST_CASE("policy_gap_r: decreases with more training on a fixed target") {
    auto pb = null_problem(1.0, 0.7);
    auto grid = build_control_grid(pb.control_set, 5);
    auto colloc = sample_collocation(pb.domain, 1, 16, 8);
    Vec tgt_logits = Vec::LinSpaced(grid.size(), -0.8, 0.8);
    Vec tgt = weighted_softmax(tgt_logits, grid.weights);
    std::vector<Vec> targets(colloc.points.size(), tgt);
    std::vector<detail::PolicyPoint> pts;
    for (const auto& x : colloc.points) pts.push_back({x, tgt.array().log().matrix()});
    auto gap_after = [&](int epochs) {
        PolicyNet pnet = PolicyNet::make(1, {8}, grid, 13);
        auto loss_fn = [&](const Vec& params, Vec& grad) {
            Mlp cur = pnet.net;
            cur.params = params;
            return detail::policy_loss_and_grad(cur, grid.weights, pts, grad);
        };
        TrainBudget budget;
        budget.max_epochs = epochs;
        budget.lr = 5e-3;
        train_to_budget(loss_fn, pnet.net.params, budget);
        return policy_gap_r(grid, colloc, pnet, targets);
    };
    double g_short = gap_after(30);
    double g_long = gap_after(600);
    CHECK(g_long < 0.5 * g_short);
}

TEST_CASE("pinsker: trivial, arithmetic, and mass random checks") {
    auto pb = null_problem();
    auto grid2 = build_control_grid(pb.control_set, 2);
    Vec u = Vec::Constant(2, 0.5);
    auto same = pinsker_check(grid2, u, u);
    CHECK(same.lhs == 0.0);
    CHECK(same.holds);

    Vec p(2), q(2);
    p << 0.75, 0.25;
    q << 0.5, 0.5;
    // densities on |U|=2 with node weights 1: integrate as given
    ControlGrid unit = grid2;
    auto res = pinsker_check(unit, p, q);
    CHECK(res.lhs == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.rhs == doctest::Approx(std::sqrt(2.0 * 0.130812)).epsilon(1e-4));
    CHECK(res.holds);

    auto grid = build_control_grid(pb.control_set, 8);
    auto rng = make_rng(91, 0);
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    int violations = 0;
    for (int t = 0; t < 10000; ++t) {
        Vec a(grid.size()), b(grid.size());
        for (int j = 0; j < grid.size(); ++j) {
            a[j] = unif(rng);
            b[j] = unif(rng);
        }
        a = weighted_softmax(a.array().log(), grid.weights);
        b = weighted_softmax(b.array().log(), grid.weights);
        if (!pinsker_check(grid, a, b).holds) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("prop1: constant exponent collapses the bounds") {
    auto pb = null_problem();
    auto grid = build_control_grid(pb.control_set, 5);
    QuadraticValue v0{Mat::Zero(1, 1), 0.0};
    CollocationSet colloc;
    colloc.points = {Vec::Zero(1), Vec::Constant(1, 0.3)};
    colloc.domain_volume = 2.0;
    auto rep = proposition1_check(pb, grid, v0, colloc);
    CHECK(rep.violations == 0);
    CHECK(rep.worst_slack <= 0.0);
}

TEST_CASE("prop1: large lambda flattens densities toward 1/|U|") {
    auto spec = make_random_stable_lqr(1, 1, 17);
    spec.u_bound = 2.0;
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Ball;
    dom.radius = 1.0;
    auto grid = build_control_grid(BoxControlSet::symmetric(1, 2.0), 7);
    Vec x = Vec::Constant(1, 0.5);
    QuadraticValue v{Mat::Constant(1, 1, -0.5), 0.0};
    double dev_small = 0.0, dev_large = 0.0;
    for (double lambda : {1.0, 100.0}) {
        auto pb = make_lqr_problem(spec, 1.0, lambda, dom);
        Vec pi = softmax_target_from_gradient(pb, grid, x, v.grad(x));
        double dev = (pi.array() - 1.0 / pb.control_set.volume()).abs().maxCoeff();
        (lambda < 10 ? dev_small : dev_large) = dev;
    }
    CHECK(dev_large < 0.05 * dev_small);
}

TEST_CASE("prop1: a thousand random nets produce zero violations") {
    auto spec = make_random_stable_lqr(2, 1, 23);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.5;
    auto pb = make_lqr_problem(spec, 1.0, 0.8, dom);
    auto grid = build_control_grid(pb.control_set, 6);
    int total_violations = 0;
    for (int t = 0; t < 20; ++t) {
        Mlp vnet = Mlp::make({2, 10, 1}, 100 + t);
        auto colloc = sample_collocation(pb.domain, 2, 50, 200 + t);
        auto rep = proposition1_check(pb, grid, MlpValue{&vnet}, colloc);
        total_violations += rep.violations;
    }
    CHECK(total_violations == 0);  // 20 x 50 = 1000 draws
}

TEST_CASE("lemma2: drift-free problems have a constant softmax map") {
    auto pb = null_problem(1.0, 1.0);
    pb.reward = [](const Vec&, const Vec& u) { return -u.squaredNorm(); };
    auto grid = build_control_grid(pb.control_set, 6);
    auto rep = lemma2_lipschitz_check(pb, grid, Vec::Zero(1), 200, 2.0, 7);
    CHECK(rep.violations == 0);
    CHECK(rep.params["empirical_ratio"] == 0.0);
    CHECK(rep.params["b_inf"] == 0.0);
}

TEST_CASE("lemma2: conservative constant holds over many trials") {
    LqrSpec spec;
    spec.A = Mat::Constant(1, 1, -1.0);
    spec.B = Mat::Constant(1, 1, 1.0);
    spec.Q = Mat::Constant(1, 1, 1.0);
    spec.R_cost = Mat::Constant(1, 1, 1.0);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Ball;
    dom.radius = 2.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto grid = build_control_grid(pb.control_set, 9);
    auto rep = lemma2_lipschitz_check(pb, grid, Vec::Constant(1, 0.7), 10000, 3.0, 11);
    CHECK(rep.trials > 9000);
    CHECK(rep.violations == 0);
    CHECK(rep.params["empirical_ratio"] <= rep.params["L_conservative"]);
}

TEST_CASE("lemma1: zero source gives the zero solution") {
    auto spec = make_random_stable_lqr(1, 1, 31);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto cgrid = build_control_grid(pb.control_set, 5);
    SpatialGrid grid{1, 65, 1.0};
    auto rep = lemma1_energy_check(pb, cgrid, grid, [](const Vec&) { return 0.0; }, {1.0, 2.0});
    CHECK(rep.violations == 0);
    CHECK(rep.params["r_norm"] == 0.0);
}

TEST_CASE("lemma1: bump source satisfies both energy bounds") {
    LqrSpec spec;
    spec.A = Mat::Constant(1, 1, -1.0);  // mean drift -x, |div| = 1, so B = 1
    spec.B = Mat::Constant(1, 1, 1.0);
    spec.Q = Mat::Constant(1, 1, 1.0);
    spec.R_cost = Mat::Constant(1, 1, 1.0);
    spec.sigma_scale = 0.8;  // C0 = 1/sigma^2, tight ellipticity
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto cgrid = build_control_grid(pb.control_set, 5);
    SpatialGrid grid{1, 129, 1.0};
    auto bump = [](const Vec& x) {
        double s = x[0] / 0.6;
        return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
    };
    auto rep = lemma1_energy_check(pb, cgrid, grid, bump, {0.6, 1.0, 2.0, 5.0});
    CHECK(rep.trials == 8);  // two bounds per rho
    CHECK(rep.violations == 0);
}

TEST_CASE("lemma1: rho at or below B/2 is rejected") {
    ControlProblem pb = null_problem();
    pb.drift = [](const Vec& x, const Vec&) { return Vec::Constant(1, 4.0 * x[0]); };
    pb.diffusion = [](const Vec&) { return 0.5 * Mat::Identity(1, 1); };
    pb.ellipticity_c0 = 4.0;
    auto cgrid = build_control_grid(pb.control_set, 4);
    SpatialGrid grid{1, 33, 1.0};
    CHECK_THROWS_AS(
        lemma1_energy_check(pb, cgrid, grid, [](const Vec&) { return 1.0; }, {1.0}),
        std::invalid_argument);
}

TEST_CASE("lemma3: identical policies give zero value gap") {
    auto spec = make_random_stable_lqr(1, 1, 41);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto cgrid = build_control_grid(pb.control_set, 5);
    SpatialGrid grid{1, 33, 1.0};
    std::vector<Vec> dens(grid.n_nodes(), Vec::Constant(cgrid.size(), 1.0 / cgrid.box_volume));
    Vec v1 = fd_policy_evaluation(pb, cgrid, grid, dens).values;
    Vec v2 = fd_policy_evaluation(pb, cgrid, grid, dens).values;
    CHECK(grid.l2_norm(v1 - v2) == 0.0);
}

TEST_CASE("lemma3: value gap scales linearly with the perturbation") {
    auto spec = make_random_stable_lqr(1, 1, 43);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto pb = make_lqr_problem(spec, 1.0, 1.0, dom);
    auto cgrid = build_control_grid(pb.control_set, 5);
    SpatialGrid grid{1, 49, 1.0};
    auto rep = lemma3_stability_check(pb, cgrid, grid, 5, 3);
    CHECK(rep.violations == 0);
    CHECK(rep.params["worst_half_ratio_lo"] > 0.45);
    CHECK(rep.params["worst_half_ratio_hi"] < 0.55);
}

TEST_CASE("lemma3: gap-to-perturbation ratio shrinks as rho grows") {
    auto spec = make_random_stable_lqr(1, 1, 47);
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 1.0;
    auto cgrid = build_control_grid(BoxControlSet::symmetric(1, 10.0), 5);
    SpatialGrid grid{1, 49, 1.0};
    auto mean_ratio = [&](double rho) {
        auto pb = make_lqr_problem(spec, rho, 1.0, dom);
        auto rep = lemma3_stability_check(pb, cgrid, grid, 4, 7);
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) acc += rep.params.at("ratio_" + std::to_string(t));
        return acc / 4.0;
    };
    CHECK(mean_ratio(4.0) < mean_ratio(0.5));
}

TEST_CASE("fit_convergence_rate: exact geometric and constant series") {
    auto [kappa, r2] = fit_convergence_rate({1.0, 0.5, 0.25, 0.125});
    CHECK(kappa == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r2 == doctest::Approx(1.0).epsilon(1e-12));
    auto [kc, rc] = fit_convergence_rate({0.7, 0.7, 0.7, 0.7, 0.7});
    CHECK(kc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(fit_convergence_rate({1.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(fit_convergence_rate({1.0, -0.5, 0.2, 0.1}), std::invalid_argument);
}

TEST_CASE("fit_convergence_rate: exact PI differences fit a geometric decay") {
    LqrSpec spec;
    spec.A = Mat::Constant(1, 1, -1.0);
    spec.B = Mat::Constant(1, 1, 1.0);
    spec.Q = Mat::Constant(1, 1, 1.0);
    spec.R_cost = Mat::Constant(1, 1, 1.0);
    spec.sigma_scale = 0.1;
    SpatialDomain dom;
    dom.kind = SpatialDomain::Kind::Box;
    dom.radius = 2.0;
    dom.cutoff_width = 0.4;
    auto pb = apply_cutoff(make_lqr_problem(spec, 1.0, 0.1, dom));
    SpatialGrid grid{1, 65, 2.0};
    auto cgrid = build_control_grid(pb.control_set, 15);
    auto res = exact_policy_iteration(pb, cgrid, grid, Vec::Zero(grid.n_nodes()), 12, 1e-12);
    std::vector<double> errs;
    const Vec& vinf = res.value_iterates.back();
    for (size_t n = 0; n + 1 < res.value_iterates.size(); ++n) {
        double e = grid.l2_norm(res.value_iterates[n] - vinf);
        if (e > 1e-13) errs.push_back(e);
    }
    REQUIRE(errs.size() >= 4);
    auto [kappa, r2] = fit_convergence_rate(errs);
    CHECK(kappa < 1.0);
    CHECK(r2 > 0.95);
}
