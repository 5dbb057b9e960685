#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "softhjb/oracle.hpp"
#include "softhjb/problem.hpp"
#include "softhjb/quadrature.hpp"
#include "softhjb/rng.hpp"
#include "softhjb/soft_pi.hpp"

namespace softhjb {

struct LemmaReport {
    std::string lemma;
    int trials = 0;
    int violations = 0;
    double worst_slack = -std::numeric_limits<double>::infinity();  // max lhs - rhs
    std::map<std::string, double> params;
    std::vector<std::array<double, 2>> rows;  // per-trial (lhs, rhs)

    void record(double lhs, double rhs) {
        ++trials;
        double slack = lhs - rhs;
        worst_slack = std::max(worst_slack, slack);
        if (slack > 0.0) ++violations;
        rows.push_back({lhs, rhs});
    }
};

// Monte Carlo L2(X) norm of the PDE residual: sqrt(Vol(X) * mean R^2).
template <class ValueField, class Policy>
double residual_q_norm(const ControlProblem& pb, const ControlGrid& grid,
                       const CollocationSet& colloc, const ValueField& vnet,
                       const Policy& pnet) {
    return std::sqrt(colloc.domain_volume * value_loss(pb, grid, colloc, vnet, pnet));
}

// Monte Carlo L2(X) norm of x -> ||pi_omega(x,.) - target(x,.)||_{L2(U)}.
inline double policy_gap_r(const ControlGrid& grid, const CollocationSet& colloc,
                           const PolicyNet& pnet, const std::vector<Vec>& targets) {
    if (static_cast<int>(targets.size()) != colloc.size())
        throw std::invalid_argument("policy_gap_r: target count mismatch");
    double acc = 0.0;
    for (int i = 0; i < colloc.size(); ++i) {
        Vec pi = policy_density(pnet, grid, colloc.points[i]);
        acc += quad_integrate(grid, (pi - targets[i]).cwiseAbs2());
    }
    return std::sqrt(colloc.domain_volume * acc / colloc.size());
}

struct PinskerResult {
    double lhs = 0.0;  // ||p - q||_{L1(U)}
    double rhs = 0.0;  // sqrt(2 KL(p||q))
    bool holds = false;
};

inline PinskerResult pinsker_check(const ControlGrid& grid, const Vec& p, const Vec& q) {
    if (p.size() != grid.weights.size() || q.size() != grid.weights.size())
        throw std::invalid_argument("pinsker_check: density length mismatch");
    if (p.minCoeff() <= 0.0 || q.minCoeff() <= 0.0)
        throw std::runtime_error("pinsker_check: nonpositive density");
    PinskerResult out;
    out.lhs = quad_integrate(grid, (p - q).cwiseAbs());
    double kl = quad_integrate(grid, p.array() * (p.array().log() - q.array().log()));
    out.rhs = std::sqrt(2.0 * std::max(kl, 0.0));
    out.holds = out.lhs <= out.rhs + 1e-12;
    return out;
}

// Softmax-target bounds: every density value lies in
// [exp(-osc/lambda)/|U|, exp(+osc/lambda)/|U|] with osc the exponent range.
template <class ValueField>
LemmaReport proposition1_check(const ControlProblem& pb, const ControlGrid& grid,
                               const ValueField& vnet, const CollocationSet& colloc) {
    LemmaReport rep;
    rep.lemma = "prop1";
    const double vol = pb.control_set.volume();
    for (const auto& x : colloc.points) {
        Vec p = vnet.grad(x);
        Vec f(grid.size());
        for (int j = 0; j < grid.size(); ++j)
            f[j] = pb.drift(x, grid.points[j]).dot(p) + pb.reward(x, grid.points[j]);
        double osc = f.maxCoeff() - f.minCoeff();
        double lo = std::exp(-osc / pb.lambda) / vol;
        double hi = std::exp(osc / pb.lambda) / vol;
        Vec pi = softmax_target_from_gradient(pb, grid, x, p);
        // one trial per state; slack measured against the tighter side
        rep.record(std::max(lo - pi.minCoeff(), pi.maxCoeff() - hi), 1e-10);
    }
    rep.params["lambda"] = pb.lambda;
    rep.params["control_volume"] = vol;
    return rep;
}

namespace detail {

// Softmax map Phi(p) at fixed x as a function of the gradient argument only.
inline Vec softmax_of_gradient(const ControlProblem& pb, const ControlGrid& grid, const Vec& x,
                               const Vec& p) {
    return softmax_target_from_gradient(pb, grid, x, p);
}

}  // namespace detail

// Lipschitz estimate for the softmax map p -> Phi(p) at a fixed state:
// ||Phi(p) - Phi(q)||_{L2(U)} <= L * |p - q| over |p|,|q| <= p_bound.
// Tested with the conservative constant 2 supPhi ||b||_inf sqrt(d) |U|^{1/2} / lambda;
// the variant without ||b||_inf is reported alongside for reference.
inline LemmaReport lemma2_lipschitz_check(const ControlProblem& pb, const ControlGrid& grid,
                                          const Vec& x, int trials, double p_bound,
                                          std::uint64_t seed = 0) {
    LemmaReport rep;
    rep.lemma = "lemma2";
    const int d = pb.state_dim;
    auto rng = make_rng(seed, 0x11b2);
    std::uniform_real_distribution<double> unif(-p_bound, p_bound);
    auto draw_p = [&]() {
        Vec p(d);
        do {
            for (int i = 0; i < d; ++i) p[i] = unif(rng);
        } while (p.norm() > p_bound);
        return p;
    };

    // sup Phi and ||b||_inf by dense sampling over the same p-ball and grid
    double sup_phi = 0.0, b_inf = 0.0;
    const int dense = 10000;
    for (int t = 0; t < dense; ++t) {
        Vec p = draw_p();
        sup_phi = std::max(sup_phi, detail::softmax_of_gradient(pb, grid, x, p).maxCoeff());
    }
    for (int j = 0; j < grid.size(); ++j)
        b_inf = std::max(b_inf, pb.drift(x, grid.points[j]).lpNorm<Eigen::Infinity>());

    const double vol = pb.control_set.volume();
    const double l_cons = 2.0 * sup_phi * b_inf * std::sqrt(double(d)) * std::sqrt(vol) / pb.lambda;
    const double l_paper = 2.0 * sup_phi * std::sqrt(double(d)) * std::sqrt(vol) / pb.lambda;

    double max_ratio = 0.0;
    int paper_violations = 0;
    for (int t = 0; t < trials; ++t) {
        Vec p = draw_p(), q = draw_p();
        double dist = (p - q).norm();
        if (dist < 1e-14) continue;
        Vec dphi = detail::softmax_of_gradient(pb, grid, x, p) -
                   detail::softmax_of_gradient(pb, grid, x, q);
        double lhs = std::sqrt(quad_integrate(grid, dphi.cwiseAbs2()));
        rep.record(lhs, l_cons * dist);
        if (lhs > l_paper * dist) ++paper_violations;
        max_ratio = std::max(max_ratio, lhs / dist);
    }
    rep.params["sup_phi"] = sup_phi;
    rep.params["b_inf"] = b_inf;
    rep.params["L_conservative"] = l_cons;
    rep.params["L_printed"] = l_paper;
    rep.params["printed_violations"] = paper_violations;
    rep.params["empirical_ratio"] = max_ratio;
    rep.params["dense_samples"] = dense;
    return rep;
}

// Energy estimate for the 1D linear PDE rho v - b v' - 1/2 sigma^2 v'' = r_tilde
// with the problem's uniform-policy drift: ||v|| <= ||r||/(rho - B/2) and
// ||v'|| <= sqrt(C0/(rho - B/2)) ||r||, B = sup |div b|, sigma^2 >= 1/C0.
inline LemmaReport lemma1_energy_check(const ControlProblem& pb, const ControlGrid& cgrid,
                                       const SpatialGrid& grid,
                                       const std::function<double(const Vec&)>& r_tilde,
                                       const std::vector<double>& rho_list,
                                       double slack = 0.02) {
    grid.validate();
    if (grid.dim != 1) throw std::invalid_argument("lemma1 check: 1D grids only");
    LemmaReport rep;
    rep.lemma = "lemma1";
    const double h = grid.h();
    const int n = grid.n_nodes();
    const Vec unif = Vec::Constant(cgrid.size(), 1.0 / cgrid.box_volume);
    std::vector<Vec> bbar(n);
    for (int idx = 0; idx < n; ++idx) {
        Vec x = grid.coord(idx);
        Vec b = Vec::Zero(1);
        for (int j = 0; j < cgrid.size(); ++j)
            b += cgrid.weights[j] * unif[j] * pb.drift(x, cgrid.points[j]);
        bbar[idx] = b;
    }
    double B = 0.0;
    for (int idx = 1; idx + 1 < n; ++idx)
        B = std::max(B, std::abs((bbar[idx + 1][0] - bbar[idx - 1][0]) / (2.0 * h)));
    double c0 = pb.ellipticity_c0;
    if (c0 <= 0.0) throw std::invalid_argument("lemma1 check: problem lacks ellipticity_c0");

    Vec source(n);
    for (int idx = 0; idx < n; ++idx)
        source[idx] = grid.is_boundary(idx) ? 0.0 : r_tilde(grid.coord(idx));
    const double r_norm = grid.l2_norm(source);

    for (double rho : rho_list) {
        if (rho <= 0.5 * B)
            throw std::invalid_argument("lemma1 check: rho must exceed B/2");
        Vec v = detail::fd_linear_solve(
            grid, [&](const Vec& x) { return bbar[node_index(grid, x)]; },
            [&](const Vec& x) { return detail::diagonal_sigma2(pb, x); },
            [&](const Vec& x) { return source[node_index(grid, x)]; }, rho);
        Vec dv(n);
        dv.setZero();
        for (int idx = 1; idx + 1 < n; ++idx) dv[idx] = (v[idx + 1] - v[idx - 1]) / (2.0 * h);
        const double denom = rho - 0.5 * B;
        rep.record(grid.l2_norm(v), (1.0 + slack) * r_norm / denom);
        rep.record(grid.l2_norm(dv), (1.0 + slack) * std::sqrt(c0 / denom) * r_norm);
    }
    rep.params["B"] = B;
    rep.params["C0"] = c0;
    rep.params["r_norm"] = r_norm;
    rep.params["slack"] = slack;
    return rep;
}

// Stability of policy evaluation: value gap scales linearly with the policy
// perturbation (mixture path pi + s(pi' - pi), s in {1, 1/2, 1/4}) and the
// gap/perturbation ratio shrinks as rho grows.
inline LemmaReport lemma3_stability_check(ControlProblem pb, const ControlGrid& cgrid,
                                          const SpatialGrid& grid, int trials,
                                          std::uint64_t seed = 0, double mix = 0.2) {
    grid.validate();
    LemmaReport rep;
    rep.lemma = "lemma3";
    auto rng = make_rng(seed, 0x11b3);
    std::uniform_real_distribution<double> unif(0.2, 1.0);
    const int n = grid.n_nodes();
    auto random_density_field = [&]() {
        std::vector<Vec> dens(n);
        for (int idx = 0; idx < n; ++idx) {
            Vec logits(cgrid.size());
            for (int j = 0; j < cgrid.size(); ++j) logits[j] = std::log(unif(rng));
            dens[idx] = weighted_softmax(logits, cgrid.weights);
        }
        return dens;
    };
    auto policy_distance = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double acc = 0.0;
        for (int idx = 0; idx < n; ++idx)
            acc += quad_integrate(cgrid, (a[idx] - b[idx]).cwiseAbs2()) * std::pow(grid.h(), grid.dim);
        return std::sqrt(acc);
    };

    double worst_ratio_lo = std::numeric_limits<double>::infinity(), worst_ratio_hi = 0.0;
    for (int t = 0; t < trials; ++t) {
        auto base = random_density_field();
        auto other = random_density_field();
        Vec v_base = fd_policy_evaluation(pb, cgrid, grid, base).values;
        std::vector<double> gaps, dists;
        for (double s : {1.0, 0.5, 0.25}) {
            std::vector<Vec> mixed(n);
            for (int idx = 0; idx < n; ++idx)
                mixed[idx] = (1.0 - mix * s) * base[idx] + mix * s * other[idx];
            gaps.push_back(grid.l2_norm(fd_policy_evaluation(pb, cgrid, grid, mixed).values - v_base));
            dists.push_back(policy_distance(mixed, base));
        }
        // perturbation halves exactly by construction; the gap must follow within 10%
        for (int k = 0; k + 1 < 3; ++k) {
            double ratio = gaps[k + 1] / gaps[k];
            rep.record(std::abs(ratio - 0.5), 0.05);
            worst_ratio_lo = std::min(worst_ratio_lo, ratio);
            worst_ratio_hi = std::max(worst_ratio_hi, ratio);
        }
        rep.params["ratio_" + std::to_string(t)] = gaps[0] / dists[0];
    }
    rep.params["worst_half_ratio_lo"] = worst_ratio_lo;
    rep.params["worst_half_ratio_hi"] = worst_ratio_hi;
    return rep;
}

// Least-squares fit of log(series_n) ~ log(C) + n log(kappa).
inline std::pair<double, double> fit_convergence_rate(const std::vector<double>& series) {
    const int n = static_cast<int>(series.size());
    if (n < 4) throw std::invalid_argument("fit_convergence_rate: need >= 4 entries");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!(series[i] > 0.0))
            throw std::invalid_argument("fit_convergence_rate: entries must be positive");
        double y = std::log(series[i]);
        sx += i;
        sy += y;
        sxx += double(i) * i;
        sxy += i * y;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0, mean = sy / n;
    for (int i = 0; i < n; ++i) {
        double y = std::log(series[i]);
        double fit = intercept + slope * i;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean) * (y - mean);
    }
    double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return {std::exp(slope), r2};
}

}  // namespace softhjb
