#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "softhjb/problem.hpp"
#include "softhjb/rng.hpp"

namespace softhjb {

// Tensor-product midpoint discretization of the control box. Equal weights
// |U|/M, so the discrete softmax target and the continuous density coincide
// up to the constant factor M/|U|.
struct ControlGrid {
    std::vector<Vec> points;  // u_j in U
    Vec weights;              // w_j > 0, sum = |U|
    double box_volume = 0.0;

    int size() const { return static_cast<int>(points.size()); }
};

inline ControlGrid build_control_grid(const BoxControlSet& box, int per_dim,
                                      int max_points = 1 << 20) {
    box.validate();
    if (per_dim < 2) throw std::invalid_argument("build_control_grid: per_dim must be >= 2");
    const int m = box.dim();
    std::int64_t M = 1;
    for (int i = 0; i < m; ++i) {
        M *= per_dim;
        if (M > max_points)
            throw std::invalid_argument("build_control_grid: grid exceeds max point budget");
    }
    ControlGrid grid;
    grid.box_volume = box.volume();
    grid.points.reserve(static_cast<std::size_t>(M));
    const double w = grid.box_volume / static_cast<double>(M);
    grid.weights = Vec::Constant(M, w);
    std::vector<int> idx(m, 0);
    Vec u(m);
    for (std::int64_t j = 0; j < M; ++j) {
        for (int i = 0; i < m; ++i) {
            double h = (box.upper[i] - box.lower[i]) / per_dim;
            u[i] = box.lower[i] + (idx[i] + 0.5) * h;  // cell centers
        }
        grid.points.push_back(u);
        for (int i = 0; i < m; ++i) {
            if (++idx[i] < per_dim) break;
            idx[i] = 0;
        }
    }
    return grid;
}

// Realizes every integral over U: sum_j w_j values_j.
inline double quad_integrate(const ControlGrid& grid, const Vec& values) {
    if (values.size() != grid.weights.size())
        throw std::invalid_argument("quad_integrate: value vector length mismatch");
    return grid.weights.dot(values);
}

struct CollocationSet {
    std::vector<Vec> points;
    double domain_volume = 0.0;

    int size() const { return static_cast<int>(points.size()); }
};

// N i.i.d. uniform samples over the domain, deterministic given seed.
// Balls use rejection sampling from the bounding box.
inline CollocationSet sample_collocation(const SpatialDomain& domain, int d, int N,
                                         std::uint64_t seed) {
    domain.validate();
    if (N < 1) throw std::invalid_argument("sample_collocation: N must be >= 1");
    auto rng = make_rng(seed, 0xc011);
    std::uniform_real_distribution<double> unif(-domain.radius, domain.radius);
    CollocationSet out;
    out.domain_volume = domain.volume(d);
    out.points.reserve(N);
    Vec x(d);
    while (static_cast<int>(out.points.size()) < N) {
        for (int i = 0; i < d; ++i) x[i] = unif(rng);
        if (domain.kind == SpatialDomain::Kind::Ball && x.norm() > domain.radius) continue;
        out.points.push_back(x);
    }
    return out;
}

}  // namespace softhjb
