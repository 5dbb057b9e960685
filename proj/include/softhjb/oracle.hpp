#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "softhjb/problem.hpp"
#include "softhjb/quadrature.hpp"
#include "softhjb/soft_pi.hpp"

namespace softhjb {

// Uniform tensor grid on [-R, R]^dim (dim 1 or 2), Dirichlet boundary.
struct SpatialGrid {
    int dim = 1;
    int nodes_per_axis = 64;  // including boundary nodes
    double radius = 1.0;

    void validate() const {
        if (dim < 1 || dim > 2) throw std::invalid_argument("spatial grid: dim must be 1 or 2");
        if (nodes_per_axis < 16)
            throw std::invalid_argument("spatial grid: need >= 16 nodes per axis");
        if (radius <= 0.0) throw std::invalid_argument("spatial grid: radius must be positive");
    }

    double h() const { return 2.0 * radius / (nodes_per_axis - 1); }
    int n_nodes() const { return dim == 1 ? nodes_per_axis : nodes_per_axis * nodes_per_axis; }

    Vec coord(int idx) const {
        Vec x(dim);
        if (dim == 1) {
            x[0] = -radius + idx * h();
        } else {
            x[0] = -radius + (idx % nodes_per_axis) * h();
            x[1] = -radius + (idx / nodes_per_axis) * h();
        }
        return x;
    }

    bool is_boundary(int idx) const {
        if (dim == 1) return idx == 0 || idx == nodes_per_axis - 1;
        int i = idx % nodes_per_axis, j = idx / nodes_per_axis;
        return i == 0 || i == nodes_per_axis - 1 || j == 0 || j == nodes_per_axis - 1;
    }

    // discrete L2 norm: sqrt(sum v^2 h^dim)
    double l2_norm(const Vec& nodal) const {
        return std::sqrt(nodal.squaredNorm() * std::pow(h(), dim));
    }
};

struct FdSolution {
    Vec values;                    // nodal v, boundary rows hold the Dirichlet zero
    std::vector<Vec> densities;    // per-node policy density over the control grid
    bool dirichlet_boundary = true;
    bool rho_below_drift_bound = false;  // rho <= B/2 warning per the energy estimate
};

namespace detail {

// Generic linear solve of rho v - b.grad v - 1/2 sum_k s2_k d2_k v = g with
// upwinded drift and central second differences; coefficients sampled per node.
template <class DriftFn, class DiffusionFn, class SourceFn>
Vec fd_linear_solve(const SpatialGrid& grid, DriftFn&& drift, DiffusionFn&& s2,
                    SourceFn&& source, double rho) {
    grid.validate();
    const int n = grid.n_nodes();
    const double h = grid.h();
    using Trip = Eigen::Triplet<double>;
    std::vector<Trip> trips;
    Vec rhs = Vec::Zero(n);
    const int stride[2] = {1, grid.nodes_per_axis};
    for (int idx = 0; idx < n; ++idx) {
        if (grid.is_boundary(idx)) {
            trips.emplace_back(idx, idx, 1.0);
            rhs[idx] = 0.0;
            continue;
        }
        Vec x = grid.coord(idx);
        Vec b = drift(x);
        Vec sig2 = s2(x);  // per-axis diffusion coefficients Sigma_kk
        double diag = rho;
        for (int k = 0; k < grid.dim; ++k) {
            double diff = 0.5 * sig2[k] / (h * h);
            diag += 2.0 * diff;
            double bp = std::max(b[k], 0.0), bm = std::min(b[k], 0.0);
            // -b dv: upwind keeps off-diagonals nonpositive
            diag += (bp - bm) / h;
            trips.emplace_back(idx, idx + stride[k], -diff - bp / h);
            trips.emplace_back(idx, idx - stride[k], -diff + bm / h);
        }
        trips.emplace_back(idx, idx, diag);
        rhs[idx] = source(x);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(A);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("fd solve: sparse factorization failed (singular system?)");
    Vec v = solver.solve(rhs);
    if (solver.info() != Eigen::Success) throw std::runtime_error("fd solve: back-solve failed");
    return v;
}

inline Vec diagonal_sigma2(const ControlProblem& pb, const Vec& x) {
    Mat S = pb.sigma_sq(x);
    double offdiag = (S - Mat(S.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
    if (offdiag > 1e-12 * (1.0 + S.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("fd solve: Sigma must be diagonal on the grid path");
    return S.diagonal();
}

}  // namespace detail

inline int node_index(const SpatialGrid& grid, const Vec& x) {
    const double h = grid.h();
    int i = static_cast<int>(std::lround((x[0] + grid.radius) / h));
    if (grid.dim == 1) return i;
    int j = static_cast<int>(std::lround((x[1] + grid.radius) / h));
    return j * grid.nodes_per_axis + i;
}

// Policy evaluation PDE solve: rho v = b^pi . grad v + 1/2 tr(Sigma D^2 v)
// + r^pi - lambda H^pi with homogeneous Dirichlet data.
inline FdSolution fd_policy_evaluation(const ControlProblem& pb, const ControlGrid& cgrid,
                                       const SpatialGrid& grid,
                                       const std::vector<Vec>& densities) {
    grid.validate();
    if (static_cast<int>(densities.size()) != grid.n_nodes())
        throw std::invalid_argument("fd_policy_evaluation: one density per node required");
    const int n = grid.n_nodes();
    std::vector<Vec> bbar(n);
    Vec gbar(n);
    double max_div = 0.0;
    for (int idx = 0; idx < n; ++idx) {
        const Vec& pi = densities[idx];
        if (pi.size() != cgrid.weights.size() || pi.minCoeff() < 0.0)
            throw std::invalid_argument("fd_policy_evaluation: invalid density at node");
        Vec x = grid.coord(idx);
        Vec b = Vec::Zero(grid.dim);
        double g = 0.0;
        for (int j = 0; j < cgrid.size(); ++j) {
            double wpi = cgrid.weights[j] * pi[j];
            b += wpi * pb.drift(x, cgrid.points[j]);
            // pi ln pi -> 0 as pi -> 0 (softmax targets may underflow to exactly 0)
            double ent = pi[j] > 0.0 ? pi[j] * std::log(pi[j]) : 0.0;
            g += wpi * pb.reward(x, cgrid.points[j]) - pb.lambda * cgrid.weights[j] * ent;
        }
        bbar[idx] = b;
        gbar[idx] = g;
    }
    // estimate B = sup div(b^pi) by central differences for the rho > B/2 check
    const double h = grid.h();
    const int stride[2] = {1, grid.nodes_per_axis};
    for (int idx = 0; idx < n; ++idx) {
        if (grid.is_boundary(idx)) continue;
        double div = 0.0;
        for (int k = 0; k < grid.dim; ++k)
            div += (bbar[idx + stride[k]][k] - bbar[idx - stride[k]][k]) / (2.0 * h);
        max_div = std::max(max_div, div);
    }
    FdSolution sol;
    sol.rho_below_drift_bound = pb.rho <= 0.5 * max_div;
    sol.values = detail::fd_linear_solve(
        grid, [&](const Vec& x) { return bbar[node_index(grid, x)]; },
        [&](const Vec& x) { return detail::diagonal_sigma2(pb, x); },
        [&](const Vec& x) { return gbar[node_index(grid, x)]; }, pb.rho);
    sol.densities = densities;
    return sol;
}

// Central-difference nodal gradient (interior); boundary rows left zero.
inline std::vector<Vec> nodal_gradient(const SpatialGrid& grid, const Vec& values) {
    const int n = grid.n_nodes();
    const double h = grid.h();
    const int stride[2] = {1, grid.nodes_per_axis};
    std::vector<Vec> g(n, Vec::Zero(grid.dim));
    for (int idx = 0; idx < n; ++idx) {
        if (grid.is_boundary(idx)) continue;
        for (int k = 0; k < grid.dim; ++k)
            g[idx][k] = (values[idx + stride[k]] - values[idx - stride[k]]) / (2.0 * h);
    }
    return g;
}

struct ExactPiResult {
    std::vector<Vec> value_iterates;    // v^0, v^1, ...
    std::vector<std::vector<Vec>> policies;
    std::vector<double> diff_norms;     // ||v^{n+1} - v^n||_2 discrete
    bool converged = false;
};

// Algorithm 1 on the grid: nodal softmax improvement from central-difference
// gradients, then an FD evaluation solve; stops at tolerance or n_max.
inline ExactPiResult exact_policy_iteration(const ControlProblem& pb, const ControlGrid& cgrid,
                                            const SpatialGrid& grid, const Vec& v0, int n_max,
                                            double tol) {
    grid.validate();
    if (v0.size() != grid.n_nodes())
        throw std::invalid_argument("exact_policy_iteration: v0 size mismatch");
    ExactPiResult res;
    res.value_iterates.push_back(v0);
    Vec v = v0;
    for (int n = 1; n <= n_max; ++n) {
        auto grads = nodal_gradient(grid, v);
        std::vector<Vec> dens(grid.n_nodes());
        for (int idx = 0; idx < grid.n_nodes(); ++idx)
            dens[idx] = softmax_target_from_gradient(pb, cgrid, grid.coord(idx), grads[idx]);
        FdSolution sol = fd_policy_evaluation(pb, cgrid, grid, dens);
        double diff = grid.l2_norm(sol.values - v);
        res.diff_norms.push_back(diff);
        res.policies.push_back(std::move(dens));
        v = sol.values;
        res.value_iterates.push_back(v);
        if (diff < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

struct RiccatiSolution {
    Mat P;          // value V(x) = -x^T P x + c for reward -x^T Q x - u^T R u
    double offset = 0.0;
    Mat gain;       // K = R^{-1} B^T P
    double residual = 0.0;

    double value(const Vec& x) const { return -x.dot(P * x) + offset; }
    Vec grad(const Vec& x) const { return -2.0 * (P * x); }
};

namespace detail {

// Dense Lyapunov solve A^T P + P A + Q = 0 via the Kronecker system.
inline Mat solve_lyapunov(const Mat& A, const Mat& Q) {
    const int d = static_cast<int>(A.rows());
    Mat K = Mat::Zero(d * d, d * d);
    Mat I = Mat::Identity(d, d);
    // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P)
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                K(i + d * j, k + d * j) += A(k, i);  // A^T P
                K(i + d * j, i + d * k) += A(k, j);  // P A
            }
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(Q.data(), d * d);
    Eigen::VectorXd p = K.fullPivLu().solve(-rhs);
    Mat P = Eigen::Map<Mat>(p.data(), d, d);
    return 0.5 * (P + P.transpose());
}

}  // namespace detail

// Discounted ARE rho P = Q + A^T P + P A - P B R^{-1} B^T P by Kleinman
// iteration on gains; entropy-free baseline.
inline RiccatiSolution solve_riccati(const LqrSpec& spec, double rho, int max_iters = 200,
                                     double tol = 1e-13) {
    if (rho < 0.0) throw std::invalid_argument("solve_riccati: rho must be >= 0");
    const int d = spec.d(), m = spec.m();
    const Mat A = spec.A, B = spec.B, Q = spec.Q, R = spec.R_cost;
    const Mat Rinv = R.inverse();
    Mat Ashift = A - 0.5 * rho * Mat::Identity(d, d);
    Mat K = Mat::Zero(m, d);
    if (!is_hurwitz(Ashift)) {
        K = Rinv * B.transpose();  // fallback stabilizing guess
        if (!is_hurwitz(Ashift - B * K))
            throw std::runtime_error("solve_riccati: no stabilizing initial gain");
    }
    Mat P = Mat::Zero(d, d);
    for (int it = 0; it < max_iters; ++it) {
        Mat Acl = Ashift - B * K;
        Mat Pn = detail::solve_lyapunov(Acl, Q + K.transpose() * R * K);
        Mat Kn = Rinv * B.transpose() * Pn;
        double delta = (Pn - P).norm();
        P = Pn;
        K = Kn;
        if (delta < tol) break;
    }
    RiccatiSolution sol;
    sol.P = P;
    sol.gain = K;
    Mat res = rho * P - Q - A.transpose() * P - P * A + P * B * Rinv * B.transpose() * P;
    sol.residual = res.norm();
    if (sol.residual > 1e-10)
        throw std::runtime_error("solve_riccati: iteration did not converge");
    double s = spec.sigma_scale;
    sol.offset = rho > 0.0 ? -(s * s) * P.trace() / rho : 0.0;
    return sol;
}

// Monte Carlo L2(X) distance estimate: sqrt(Vol(X) * mean |a-b|^2).
template <class FA, class FB>
double l2_error(const CollocationSet& colloc, const FA& va, const FB& vb) {
    double acc = 0.0;
    for (const auto& x : colloc.points) {
        double d = va(x) - vb(x);
        acc += d * d;
    }
    return std::sqrt(colloc.domain_volume * acc / colloc.size());
}

}  // namespace softhjb
