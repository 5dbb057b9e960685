#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softhjb/dual.hpp"
#include "softhjb/quadrature.hpp"
#include "softhjb/rng.hpp"
#include "softhjb/tape.hpp"

namespace softhjb {

struct DerivativeBundle {
    double value = 0.0;
    Vec grad_x;
    double sigma_hess_trace = 0.0;  // tr(Sigma(x) D^2_xx v)
};

// Fully connected net with tanh hidden activations and a linear output layer.
// tanh is C^inf, which the residual's second derivatives require.
struct Mlp {
    std::vector<int> widths;  // [input, hidden..., output]
    Vec params;               // flat: per layer W (column-major), then b

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    int n_layers() const { return static_cast<int>(widths.size()) - 1; }

    int n_params() const {
        int n = 0;
        for (int l = 0; l < n_layers(); ++l) n += widths[l + 1] * (widths[l] + 1);
        return n;
    }

    int w_offset(int l) const {
        int off = 0;
        for (int k = 0; k < l; ++k) off += widths[k + 1] * (widths[k] + 1);
        return off;
    }
    int b_offset(int l) const { return w_offset(l) + widths[l + 1] * widths[l]; }

    Eigen::Map<const Mat> W(int l) const {
        return {params.data() + w_offset(l), widths[l + 1], widths[l]};
    }
    Eigen::Map<const Vec> b(int l) const { return {params.data() + b_offset(l), widths[l + 1]}; }

    static Mlp make(std::vector<int> widths, std::uint64_t seed) {
        if (widths.size() < 2) throw std::invalid_argument("mlp: need at least one layer");
        Mlp net;
        net.widths = std::move(widths);
        net.params = Vec::Zero(net.n_params());
        auto rng = make_rng(seed, 0x3e7);
        for (int l = 0; l < net.n_layers(); ++l) {
            // fan-in scaled init; biases zero
            double s = 1.0 / std::sqrt(static_cast<double>(net.widths[l]));
            std::uniform_real_distribution<double> unif(-s, s);
            double* w = net.params.data() + net.w_offset(l);
            for (int i = 0; i < net.widths[l + 1] * net.widths[l]; ++i) w[i] = unif(rng);
        }
        return net;
    }
};

inline Vec mlp_forward(const Mlp& net, const Vec& x) {
    if (x.size() != net.input_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
    Vec a = x;
    for (int l = 0; l < net.n_layers(); ++l) {
        Vec z = net.W(l) * a + net.b(l);
        a = (l + 1 < net.n_layers()) ? Vec(z.array().tanh()) : z;
    }
    return a;
}

inline double value_eval(const Mlp& net, const Vec& x) {
    if (net.output_dim() != 1) throw std::invalid_argument("value_eval: net output must be scalar");
    return mlp_forward(net, x)[0];
}

// Generic-scalar forward pass; used with Dual / Jet2 scalars as the
// independent derivative route in tests.
template <class S>
S mlp_forward_scalar(const Mlp& net, const std::vector<S>& x) {
    std::vector<S> a = x, z;
    for (int l = 0; l < net.n_layers(); ++l) {
        const int nout = net.widths[l + 1], nin = net.widths[l];
        z.assign(nout, S(0));
        auto W = net.W(l);
        auto b = net.b(l);
        for (int i = 0; i < nout; ++i) {
            S acc(b[i]);
            for (int j = 0; j < nin; ++j) acc += S(W(i, j)) * a[j];
            z[i] = acc;
        }
        if (l + 1 < net.n_layers()) {
            using ad::tanh;
            using std::tanh;
            for (auto& v : z) v = tanh(v);
        }
        a = z;
    }
    return a[0];
}

namespace detail {

// Directions {s_k} with Sigma = sum_k s_k s_k^T, via symmetric eigendecomposition.
inline std::vector<Vec> sigma_directions(const Mat& Sigma) {
    if (Sigma.rows() != Sigma.cols()) throw std::invalid_argument("Sigma must be square");
    if ((Sigma - Sigma.transpose()).norm() > 1e-9 * (1.0 + Sigma.norm()))
        throw std::invalid_argument("Sigma must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
    std::vector<Vec> dirs;
    for (int k = 0; k < Sigma.rows(); ++k) {
        double ev = es.eigenvalues()[k];
        if (ev < -1e-10) throw std::invalid_argument("Sigma must be PSD");
        if (ev <= 0.0) continue;
        dirs.push_back(std::sqrt(ev) * es.eigenvectors().col(k));
    }
    return dirs;
}

}  // namespace detail

// Value, input gradient and tr(Sigma D^2 v) in one analytic sweep: the full
// input Jacobian is propagated through the layers, and one second-order
// directional pass per eigen-direction of Sigma supplies the Hessian trace.
inline DerivativeBundle derivative_bundle(const Mlp& net, const Vec& x, const Mat& Sigma) {
    if (net.output_dim() != 1)
        throw std::invalid_argument("derivative_bundle: net output must be scalar");
    if (x.size() != net.input_dim())
        throw std::invalid_argument("derivative_bundle: input dim mismatch");
    const int d = net.input_dim();
    auto dirs = detail::sigma_directions(Sigma);
    const int K = static_cast<int>(dirs.size());

    Vec a = x;
    Mat T = Mat::Identity(d, d);       // da/dx
    Mat S = Mat::Zero(d, K);           // second directional derivatives, per direction
    for (int l = 0; l < net.n_layers(); ++l) {
        Vec z = net.W(l) * a + net.b(l);
        Mat Tz = net.W(l) * T;
        Mat Sz = net.W(l) * S;
        if (l + 1 == net.n_layers()) {
            a = z;
            T = Tz;
            S = Sz;
            break;
        }
        Vec th = z.array().tanh();
        Vec d1 = 1.0 - th.array().square();
        Vec d2 = -2.0 * th.array() * d1.array();
        a = th;
        Mat Tn = Tz.array().colwise() * d1.array();
        Mat Sn(th.size(), K);
        for (int k = 0; k < K; ++k) {
            Vec tk = Tz * dirs[k];  // first-order tangent along direction k
            Sn.col(k) = d1.cwiseProduct(Sz.col(k)) + d2.cwiseProduct(tk.cwiseProduct(tk));
        }
        T = Tn;
        S = Sn;
    }
    DerivativeBundle out;
    out.value = a[0];
    out.grad_x = T.row(0).transpose();
    out.sigma_hess_trace = S.row(0).sum();
    return out;
}

// Independent route: tr(Sigma D^2 v) from nested second-order jets through the
// generic-scalar forward pass.
inline double sigma_hess_trace_jets(const Mlp& net, const Vec& x, const Mat& Sigma) {
    auto dirs = detail::sigma_directions(Sigma);
    double tr = 0.0;
    const int d = net.input_dim();
    for (const auto& s : dirs) {
        std::vector<ad::Jet2<double>> xin(d);
        for (int i = 0; i < d; ++i) xin[i] = {x[i], s[i], 0.0};
        tr += mlp_forward_scalar(net, xin).d2;
    }
    return tr;
}

// Quadratic field v(x) = x^T P x + c.
struct QuadraticValue {
    Mat P;
    double offset = 0.0;

    double value(const Vec& x) const { return x.dot(P * x) + offset; }
    Vec grad(const Vec& x) const { return 2.0 * (P * x); }
    DerivativeBundle bundle(const Vec& x, const Mat& Sigma) const {
        return {value(x), grad(x), 2.0 * (Sigma * P).trace()};
    }
};

// Wrapper giving the Mlp the same evaluation surface as QuadraticValue.
struct MlpValue {
    const Mlp* net;

    double value(const Vec& x) const { return value_eval(*net, x); }
    Vec grad(const Vec& x) const {
        return derivative_bundle(*net, x, Mat::Zero(x.size(), x.size())).grad_x;
    }
    DerivativeBundle bundle(const Vec& x, const Mat& Sigma) const {
        return derivative_bundle(*net, x, Sigma);
    }
};

// Fixed quadratic baseline plus a learned correction. Keeps the network
// responsible only for the (small) deviation from the prior, which matters
// when the prior already captures most of the value's dynamic range.
struct BaselineValue {
    const Mlp* net;
    QuadraticValue base;

    double value(const Vec& x) const { return base.value(x) + value_eval(*net, x); }
    Vec grad(const Vec& x) const { return base.grad(x) + MlpValue{net}.grad(x); }
    DerivativeBundle bundle(const Vec& x, const Mat& Sigma) const {
        auto qb = base.bundle(x, Sigma);
        auto nb = derivative_bundle(*net, x, Sigma);
        return {qb.value + nb.value, qb.grad_x + nb.grad_x,
                qb.sigma_hess_trace + nb.sigma_hess_trace};
    }
};

inline std::uint64_t grid_hash(const ControlGrid& grid) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h = (h ^ bits) * 0x100000001b3ULL;
    };
    for (const auto& p : grid.points)
        for (int i = 0; i < p.size(); ++i) mix(p[i]);
    for (int j = 0; j < grid.weights.size(); ++j) mix(grid.weights[j]);
    return h;
}

// Policy over a fixed control grid: net maps state to M logits, density is the
// quadrature-weighted softmax, so sum_j w_j pi_j = 1 and pi > 0 everywhere.
struct PolicyNet {
    Mlp net;
    std::uint64_t grid_id = 0;

    static PolicyNet make(int state_dim, const std::vector<int>& hidden, const ControlGrid& grid,
                          std::uint64_t seed) {
        std::vector<int> widths;
        widths.push_back(state_dim);
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        widths.push_back(grid.size());
        PolicyNet p;
        p.net = Mlp::make(widths, seed);
        p.grid_id = grid_hash(grid);
        return p;
    }
};

// Density values at the grid nodes: pi_j = exp(l_j - s) / sum_j' w_j' exp(l_j' - s).
inline Vec weighted_softmax(const Vec& logits, const Vec& weights) {
    double shift = logits.maxCoeff();
    Vec e = (logits.array() - shift).exp();
    double denom = weights.dot(e);
    return e / denom;
}

inline Vec policy_density(const PolicyNet& pnet, const ControlGrid& grid, const Vec& x) {
    if (pnet.grid_id != grid_hash(grid))
        throw std::invalid_argument("policy_density: grid does not match the policy net");
    return weighted_softmax(mlp_forward(pnet.net, x), grid.weights);
}

// ---- taped builders -------------------------------------------------------

// Per-layer parameter leaves of a net registered on a tape.
struct TapedMlp {
    std::vector<int> Ws;
    std::vector<int> bs;
};

inline TapedMlp make_taped(ad::Tape& tape, const Mlp& net) {
    TapedMlp tm;
    for (int l = 0; l < net.n_layers(); ++l) {
        tm.Ws.push_back(tape.leaf(net.W(l)));
        tm.bs.push_back(tape.leaf(net.b(l)));
    }
    return tm;
}

// Adds leaf adjoints (scaled) into a flat gradient vector laid out like params.
inline void collect_grad(const ad::Tape& tape, const Mlp& net, const TapedMlp& tm, double scale,
                         Vec& grad) {
    for (int l = 0; l < net.n_layers(); ++l) {
        const auto& gw = tape.adj(tm.Ws[l]);
        const auto& gb = tape.adj(tm.bs[l]);
        Eigen::Map<Mat>(grad.data() + net.w_offset(l), gw.rows(), gw.cols()) += scale * gw;
        Eigen::Map<Vec>(grad.data() + net.b_offset(l), gb.rows()) += scale * gb.col(0);
    }
}

// Plain forward pass on the tape; returns the output node (n_out x 1).
inline int taped_forward(ad::Tape& tape, const Mlp& net, const TapedMlp& tm, const Vec& x) {
    int a = tape.constant(x);
    for (int l = 0; l < net.n_layers(); ++l) {
        int z = tape.add(tape.matmul(tm.Ws[l], a), tm.bs[l]);
        a = (l + 1 < net.n_layers()) ? tape.tanh_(z) : z;
    }
    return a;
}

struct TapedBundle {
    int value;        // 1x1
    int grad;         // 1xd row
    int sigma_trace;  // 1x1
};

// Taped version of derivative_bundle: parameter gradients of losses built on
// top of it differentiate through the input derivatives (third-order mixed
// derivatives flow through TanhD2's backward).
inline TapedBundle taped_bundle(ad::Tape& tape, const Mlp& net, const TapedMlp& tm, const Vec& x,
                                const std::vector<Vec>& dirs) {
    const int d = net.input_dim();
    const int K = static_cast<int>(dirs.size());
    Mat dirmat(d, K);
    for (int k = 0; k < K; ++k) dirmat.col(k) = dirs[k];

    int a = tape.constant(x);
    int T = tape.constant(Mat::Identity(d, d));
    int S = tape.constant(Mat::Zero(d, K));
    for (int l = 0; l < net.n_layers(); ++l) {
        int z = tape.add(tape.matmul(tm.Ws[l], a), tm.bs[l]);
        int Tz = tape.matmul(tm.Ws[l], T);
        int Sz = tape.matmul(tm.Ws[l], S);
        if (l + 1 == net.n_layers()) {
            a = z;
            T = Tz;
            S = Sz;
            break;
        }
        int d1 = tape.tanh_d1(z);
        int d2 = tape.tanh_d2(z);
        a = tape.tanh_(z);
        int tk = tape.matmul_cr(Tz, dirmat);  // first-order tangents along dirs
        int curv = tape.cwise_mul(tk, tk);
        S = tape.add(tape.colscale(d1, Sz), tape.colscale(d2, curv));
        T = tape.colscale(d1, Tz);
    }
    TapedBundle out;
    out.value = a;
    out.grad = T;
    out.sigma_trace = tape.sum(S);
    return out;
}

// Taped weighted-softmax log-density from taped logits (M x 1).
inline int taped_log_density(ad::Tape& tape, int logits, const Vec& weights) {
    double shift = tape.val(logits).maxCoeff();
    int sl = tape.add_const(logits, Mat::Constant(tape.val(logits).rows(), 1, -shift));
    int e = tape.exp_(sl);
    int denom = tape.dot_const(e, weights);
    return tape.sub_bcast(sl, tape.log_(denom));
}

// Exact reverse-mode gradient of a scalar loss with respect to net parameters.
// The builder receives the tape and parameter leaves and returns the loss node.
template <class LossBuilder>
Vec loss_param_grad(const Mlp& net, LossBuilder&& build, double* loss_out = nullptr) {
    ad::Tape tape;
    TapedMlp tm = make_taped(tape, net);
    int loss = build(tape, tm);
    tape.backward(loss);
    Vec grad = Vec::Zero(net.n_params());
    collect_grad(tape, net, tm, 1.0, grad);
    if (loss_out) *loss_out = tape.scalar(loss);
    return grad;
}

}  // namespace softhjb
