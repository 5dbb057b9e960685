#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "softhjb/rng.hpp"

namespace softhjb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Compact control box U = [lower_1,upper_1] x ... x [lower_m,upper_m].
struct BoxControlSet {
    Vec lower;
    Vec upper;

    int dim() const { return static_cast<int>(lower.size()); }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= upper[i] - lower[i];
        return v;
    }

    bool contains(const Vec& u, double tol = 1e-12) const {
        if (u.size() != lower.size()) return false;
        for (int i = 0; i < dim(); ++i)
            if (u[i] < lower[i] - tol || u[i] > upper[i] + tol) return false;
        return true;
    }

    void validate() const {
        if (lower.size() != upper.size() || lower.size() == 0)
            throw std::invalid_argument("control box: dimension mismatch or empty");
        for (int i = 0; i < dim(); ++i)
            if (!(lower[i] < upper[i]))
                throw std::invalid_argument("control box: lower must be < upper componentwise");
    }

    static BoxControlSet symmetric(int m, double bound) {
        if (bound <= 0.0) throw std::invalid_argument("control bound must be positive");
        BoxControlSet s;
        s.lower = Vec::Constant(m, -bound);
        s.upper = Vec::Constant(m, bound);
        return s;
    }
};

// Computational domain: ball B_R(0) or box [-R,R]^d. cutoff_width > 0 enables
// the smooth coefficient cutoff so that b and sigma vanish for |x| >= R.
struct SpatialDomain {
    enum class Kind { Ball, Box };
    Kind kind = Kind::Ball;
    double radius = 1.0;
    double cutoff_width = 0.0;

    void validate() const {
        if (!(radius > 0.0)) throw std::invalid_argument("domain radius must be positive");
        if (cutoff_width < 0.0) throw std::invalid_argument("cutoff_width must be >= 0");
        if (cutoff_width >= radius)
            throw std::invalid_argument("cutoff_width must be < domain radius");
    }

    bool contains(const Vec& x) const {
        if (kind == Kind::Ball) return x.norm() <= radius;
        return x.lpNorm<Eigen::Infinity>() <= radius;
    }

    double volume(int d) const {
        if (kind == Kind::Box) return std::pow(2.0 * radius, d);
        // unit-ball volume pi^{d/2} / Gamma(d/2 + 1)
        double unit = std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
        return unit * std::pow(radius, d);
    }
};

// C^inf bump profile: 1 on [0, R-w], 0 on [R, inf), exp(1 - 1/(1-t^2)) between.
inline double cutoff_chi(double dist, double radius, double width) {
    double inner = radius - width;
    if (dist <= inner) return 1.0;
    if (dist >= radius) return 0.0;
    double t = (dist - inner) / width;
    return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

struct ControlProblem {
    int state_dim = 0;
    int control_dim = 0;
    std::function<Vec(const Vec&, const Vec&)> drift;        // b(x,u)
    std::function<double(const Vec&, const Vec&)> reward;    // r(x,u)
    std::function<Mat(const Vec&)> diffusion;                // sigma(x), d x d
    double rho = 1.0;
    double lambda = 1.0;
    BoxControlSet control_set;
    SpatialDomain domain;
    double ellipticity_c0 = 0.0;  // 0 = not declared

    Mat sigma_sq(const Vec& x) const {
        Mat s = diffusion(x);
        return s * s.transpose();
    }

    void validate_scalars() const {
        if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    }
};

// f(x,u,p) := b(x,u).p + r(x,u)
inline double eval_f(const ControlProblem& pb, const Vec& x, const Vec& u, const Vec& p) {
    if (!pb.control_set.contains(u))
        throw std::invalid_argument("eval_f: control outside control box");
    return pb.drift(x, u).dot(p) + pb.reward(x, u);
}

inline bool is_hurwitz(const Mat& A, double margin = 0.0) {
    Eigen::EigenSolver<Mat> es(A, /*computeEigenvectors=*/false);
    for (int i = 0; i < A.rows(); ++i)
        if (es.eigenvalues()[i].real() >= -margin) return false;
    return true;
}

struct LqrSpec {
    Mat A;       // d x d, Hurwitz
    Mat B;       // d x m
    Mat Q;       // d x d symmetric PSD
    Mat R_cost;  // m x m symmetric PD
    double sigma_scale = 0.1;
    double u_bound = 10.0;

    int d() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }

    void validate() const {
        if (A.rows() != A.cols() || B.rows() != A.rows())
            throw std::invalid_argument("lqr: A must be square and conform with B");
        if (Q.rows() != d() || Q.cols() != d() || R_cost.rows() != m() || R_cost.cols() != m())
            throw std::invalid_argument("lqr: Q/R dimension mismatch");
        if ((Q - Q.transpose()).norm() > 1e-10 * (1.0 + Q.norm()))
            throw std::invalid_argument("lqr: Q must be symmetric");
        if ((R_cost - R_cost.transpose()).norm() > 1e-10 * (1.0 + R_cost.norm()))
            throw std::invalid_argument("lqr: R must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> eq(Q);
        if (eq.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("lqr: Q must be positive semidefinite");
        Eigen::SelfAdjointEigenSolver<Mat> er(R_cost);
        if (er.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("lqr: R must be positive definite");
        if (!is_hurwitz(A))
            throw std::invalid_argument("lqr: A must be Hurwitz");
        if (u_bound <= 0.0) throw std::invalid_argument("lqr: u_bound must be positive");
        if (sigma_scale < 0.0) throw std::invalid_argument("lqr: sigma_scale must be >= 0");
    }
};

inline ControlProblem make_lqr_problem(const LqrSpec& spec, double rho, double lambda,
                                       const SpatialDomain& domain) {
    spec.validate();
    domain.validate();
    ControlProblem pb;
    pb.state_dim = spec.d();
    pb.control_dim = spec.m();
    pb.rho = rho;
    pb.lambda = lambda;
    pb.control_set = BoxControlSet::symmetric(spec.m(), spec.u_bound);
    pb.domain = domain;
    const Mat A = spec.A, B = spec.B, Q = spec.Q, R = spec.R_cost;
    pb.drift = [A, B](const Vec& x, const Vec& u) -> Vec { return A * x + B * u; };
    pb.reward = [Q, R](const Vec& x, const Vec& u) -> double {
        return -x.dot(Q * x) - u.dot(R * u);
    };
    const int d = spec.d();
    const double s = spec.sigma_scale;
    pb.diffusion = [d, s](const Vec&) -> Mat { return s * Mat::Identity(d, d); };
    // Sigma = s^2 I, so Assumption (A1) holds with C0 = 1/s^2.
    pb.ellipticity_c0 = s > 0.0 ? 1.0 / (s * s) : 0.0;
    pb.validate_scalars();
    return pb;
}

// Random Hurwitz-stable LQR instance; matrices are reproducible from seed.
inline LqrSpec make_random_stable_lqr(int d, int m, std::uint64_t seed,
                                      double sigma_scale = 0.1, double u_bound = 10.0) {
    auto rng = make_rng(seed, 0x1c9f);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LqrSpec spec;
    spec.A = Mat::NullaryExpr(d, d, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    // shift spectrum into the left half plane
    Eigen::EigenSolver<Mat> es(spec.A, false);
    double max_re = es.eigenvalues().real().maxCoeff();
    spec.A -= (max_re + 0.5) * Mat::Identity(d, d);
    spec.B = Mat::NullaryExpr(d, m, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    Mat C = Mat::NullaryExpr(d, d, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    spec.Q = C.transpose() * C / d + 0.1 * Mat::Identity(d, d);
    spec.R_cost = Mat::Identity(m, m);
    spec.sigma_scale = sigma_scale;
    spec.u_bound = u_bound;
    return spec;
}

struct PendulumParams {
    double mass = 1.0;
    double length = 1.0;
    double gravity = 9.8;
    double torque_bound = 2.0;
    double q_angle = 1.0;
    double q_velocity = 0.1;
    double c_torque = 0.01;
    double sigma_scale = 0.1;

    void validate() const {
        if (mass <= 0 || length <= 0 || gravity <= 0 || torque_bound <= 0)
            throw std::invalid_argument("pendulum: physical parameters must be positive");
    }
};

// State (theta, theta_dot), angle measured from the upright position and kept
// unwrapped; the domain radius must cover the operating range.
inline ControlProblem make_pendulum_problem(const PendulumParams& params, double rho,
                                            double lambda, const SpatialDomain& domain) {
    params.validate();
    domain.validate();
    ControlProblem pb;
    pb.state_dim = 2;
    pb.control_dim = 1;
    pb.rho = rho;
    pb.lambda = lambda;
    pb.control_set = BoxControlSet::symmetric(1, params.torque_bound);
    pb.domain = domain;
    const double g = params.gravity, l = params.length, m = params.mass;
    pb.drift = [g, l, m](const Vec& x, const Vec& u) -> Vec {
        Vec b(2);
        b[0] = x[1];
        b[1] = (g / l) * std::sin(x[0]) + u[0] / (m * l * l);
        return b;
    };
    const double qa = params.q_angle, qv = params.q_velocity, cu = params.c_torque;
    pb.reward = [qa, qv, cu](const Vec& x, const Vec& u) -> double {
        return -(qa * x[0] * x[0] + qv * x[1] * x[1]) - cu * u[0] * u[0];
    };
    const double s = params.sigma_scale;
    pb.diffusion = [s](const Vec&) -> Mat { return s * Mat::Identity(2, 2); };
    pb.ellipticity_c0 = s > 0.0 ? 1.0 / (s * s) : 0.0;
    pb.validate_scalars();
    return pb;
}

struct CartpoleParams {
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double pole_half_length = 0.5;
    double gravity = 9.8;
    double force_bound = 10.0;
    double q_position = 0.1;
    double q_angle = 1.0;
    double q_velocity = 0.1;
    double c_force = 0.001;
    double sigma_scale = 0.1;

    void validate() const {
        if (cart_mass <= 0 || pole_mass <= 0 || pole_half_length <= 0 || gravity <= 0 ||
            force_bound <= 0)
            throw std::invalid_argument("cartpole: physical parameters must be positive");
    }
};

// State (cart position, cart velocity, pole angle from upright, angular velocity);
// standard control-affine cartpole dynamics with additive noise.
inline ControlProblem make_cartpole_problem(const CartpoleParams& params, double rho,
                                            double lambda, const SpatialDomain& domain) {
    params.validate();
    domain.validate();
    ControlProblem pb;
    pb.state_dim = 4;
    pb.control_dim = 1;
    pb.rho = rho;
    pb.lambda = lambda;
    pb.control_set = BoxControlSet::symmetric(1, params.force_bound);
    pb.domain = domain;
    const double mc = params.cart_mass, mp = params.pole_mass;
    const double l = params.pole_half_length, g = params.gravity;
    pb.drift = [mc, mp, l, g](const Vec& x, const Vec& u) -> Vec {
        const double th = x[2], om = x[3], F = u[0];
        const double total = mc + mp;
        const double cth = std::cos(th), sth = std::sin(th);
        const double tmp = (F + mp * l * om * om * sth) / total;
        const double th_acc =
            (g * sth - cth * tmp) / (l * (4.0 / 3.0 - mp * cth * cth / total));
        const double x_acc = tmp - mp * l * th_acc * cth / total;
        Vec b(4);
        b[0] = x[1];
        b[1] = x_acc;
        b[2] = om;
        b[3] = th_acc;
        return b;
    };
    const double qp = params.q_position, qa = params.q_angle, qv = params.q_velocity,
                 cf = params.c_force;
    pb.reward = [qp, qa, qv, cf](const Vec& x, const Vec& u) -> double {
        return -(qp * x[0] * x[0] + qv * x[1] * x[1] + qa * x[2] * x[2] + qv * x[3] * x[3]) -
               cf * u[0] * u[0];
    };
    const double s = params.sigma_scale;
    pb.diffusion = [s](const Vec&) -> Mat { return s * Mat::Identity(4, 4); };
    pb.ellipticity_c0 = s > 0.0 ? 1.0 / (s * s) : 0.0;
    pb.validate_scalars();
    return pb;
}

// Multiplies b and sigma by the smooth bump so both vanish for |x| >= R.
// The reward is left unchanged.
inline ControlProblem apply_cutoff(const ControlProblem& pb) {
    if (pb.domain.cutoff_width <= 0.0)
        throw std::invalid_argument("apply_cutoff: domain has no cutoff_width");
    ControlProblem out = pb;
    const double R = pb.domain.radius, w = pb.domain.cutoff_width;
    const bool ball = pb.domain.kind == SpatialDomain::Kind::Ball;
    auto dist = [ball](const Vec& x) {
        return ball ? x.norm() : x.lpNorm<Eigen::Infinity>();
    };
    auto base_drift = pb.drift;
    auto base_diffusion = pb.diffusion;
    out.drift = [base_drift, dist, R, w](const Vec& x, const Vec& u) -> Vec {
        return cutoff_chi(dist(x), R, w) * base_drift(x, u);
    };
    out.diffusion = [base_diffusion, dist, R, w](const Vec& x) -> Mat {
        return cutoff_chi(dist(x), R, w) * base_diffusion(x);
    };
    out.ellipticity_c0 = 0.0;  // uniform ellipticity is lost outside the bump
    return out;
}

}  // namespace softhjb
