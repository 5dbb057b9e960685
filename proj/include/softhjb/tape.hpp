#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace softhjb::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reverse-mode tape over matrix-valued nodes. Scalars are 1x1 matrices.
// Built per evaluation and rewound with clear(); node storage is reused.
class Tape {
public:
    enum class Op {
        Leaf,       // parameter, adjoint collected by the caller
        Const,
        Add,        // a + b
        Sub,        // a - b
        Scale,      // c * a
        AddConst,   // a + k
        MatMul,     // a * b
        MatMulCR,   // a * k
        MatMulCL,   // k * a
        CwiseMul,   // a .* b
        CwiseMulC,  // a .* k
        ColScale,   // diag(a) * b, a is a column vector
        SubBcast,   // a - scalar(b) (broadcast over entries of a)
        Tanh,
        TanhD1,     // sech^2
        TanhD2,     // derivative of sech^2
        Exp,
        Log,
        Sum,        // 1x1
        Dot,        // a:b Frobenius inner product, 1x1
    };

    int leaf(const MatrixXd& v) { return push(Op::Leaf, -1, -1, 0.0, {}, v); }
    int constant(const MatrixXd& v) { return push(Op::Const, -1, -1, 0.0, {}, v); }
    int scalar_const(double v) { return constant(MatrixXd::Constant(1, 1, v)); }

    int add(int a, int b) { return push(Op::Add, a, b, 0.0, {}, val(a) + val(b)); }
    int sub(int a, int b) { return push(Op::Sub, a, b, 0.0, {}, val(a) - val(b)); }
    int scale(int a, double c) { return push(Op::Scale, a, -1, c, {}, c * val(a)); }
    int add_const(int a, const MatrixXd& k) { return push(Op::AddConst, a, -1, 0.0, k, val(a) + k); }
    int matmul(int a, int b) { return push(Op::MatMul, a, b, 0.0, {}, val(a) * val(b)); }
    int matmul_cr(int a, const MatrixXd& k) { return push(Op::MatMulCR, a, -1, 0.0, k, val(a) * k); }
    int matmul_cl(const MatrixXd& k, int a) { return push(Op::MatMulCL, a, -1, 0.0, k, k * val(a)); }
    int cwise_mul(int a, int b) {
        return push(Op::CwiseMul, a, b, 0.0, {}, val(a).cwiseProduct(val(b)));
    }
    int cwise_mul_const(int a, const MatrixXd& k) {
        return push(Op::CwiseMulC, a, -1, 0.0, k, val(a).cwiseProduct(k));
    }
    int colscale(int vec, int mat) {
        MatrixXd v = val(mat).array().colwise() * val(vec).col(0).array();
        return push(Op::ColScale, vec, mat, 0.0, {}, v);
    }
    int sub_bcast(int a, int s) {
        return push(Op::SubBcast, a, s, 0.0, {}, val(a).array() - val(s)(0, 0));
    }
    int tanh_(int a) { return push(Op::Tanh, a, -1, 0.0, {}, val(a).array().tanh()); }
    int tanh_d1(int a) {
        MatrixXd t = val(a).array().tanh();
        return push(Op::TanhD1, a, -1, 0.0, {}, 1.0 - t.array().square());
    }
    int tanh_d2(int a) {
        MatrixXd t = val(a).array().tanh();
        return push(Op::TanhD2, a, -1, 0.0, {},
                    -2.0 * t.array() * (1.0 - t.array().square()));
    }
    int exp_(int a) { return push(Op::Exp, a, -1, 0.0, {}, val(a).array().exp()); }
    int log_(int a) { return push(Op::Log, a, -1, 0.0, {}, val(a).array().log()); }
    int sum(int a) { return push(Op::Sum, a, -1, 0.0, {}, MatrixXd::Constant(1, 1, val(a).sum())); }
    int dot(int a, int b) {
        return push(Op::Dot, a, b, 0.0, {},
                    MatrixXd::Constant(1, 1, val(a).cwiseProduct(val(b)).sum()));
    }
    int dot_const(int a, const MatrixXd& k) {
        return push(Op::Dot, a, constant(k), 0.0, {},
                    MatrixXd::Constant(1, 1, val(a).cwiseProduct(k).sum()));
    }

    const MatrixXd& val(int i) const { return nodes_[i].value; }
    const MatrixXd& adj(int i) const { return nodes_[i].adjoint; }
    double scalar(int i) const { return nodes_[i].value(0, 0); }

    // Reverse sweep from scalar node y (seeded with 1).
    void backward(int y) {
        if (val(y).size() != 1) throw std::invalid_argument("backward: seed must be scalar");
        for (int i = 0; i <= y; ++i) nodes_[i].adjoint.setZero(val(i).rows(), val(i).cols());
        nodes_[y].adjoint(0, 0) = 1.0;
        for (int i = y; i >= 0; --i) propagate(i);
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    struct Node {
        Op op;
        int a, b;
        double c;
        MatrixXd k;
        MatrixXd value;
        MatrixXd adjoint;
    };
    std::vector<Node> nodes_;

    int push(Op op, int a, int b, double c, MatrixXd k, MatrixXd value) {
        nodes_.push_back({op, a, b, c, std::move(k), std::move(value), {}});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void propagate(int i) {
        Node& n = nodes_[i];
        const MatrixXd& g = n.adjoint;
        if (g.size() == 0) return;
        auto acc = [this](int j, const MatrixXd& dg) { nodes_[j].adjoint += dg; };
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::Add:
                acc(n.a, g);
                acc(n.b, g);
                break;
            case Op::Sub:
                acc(n.a, g);
                acc(n.b, -g);
                break;
            case Op::Scale:
                acc(n.a, n.c * g);
                break;
            case Op::AddConst:
                acc(n.a, g);
                break;
            case Op::MatMul:
                acc(n.a, g * val(n.b).transpose());
                acc(n.b, val(n.a).transpose() * g);
                break;
            case Op::MatMulCR:
                acc(n.a, g * n.k.transpose());
                break;
            case Op::MatMulCL:
                acc(n.a, n.k.transpose() * g);
                break;
            case Op::CwiseMul:
                acc(n.a, g.cwiseProduct(val(n.b)));
                acc(n.b, g.cwiseProduct(val(n.a)));
                break;
            case Op::CwiseMulC:
                acc(n.a, g.cwiseProduct(n.k));
                break;
            case Op::ColScale: {
                // value = diag(a) * b
                acc(n.a, (g.cwiseProduct(val(n.b))).rowwise().sum());
                acc(n.b, g.array().colwise() * val(n.a).col(0).array());
                break;
            }
            case Op::SubBcast: {
                acc(n.a, g);
                nodes_[n.b].adjoint(0, 0) -= g.sum();
                break;
            }
            case Op::Tanh: {
                MatrixXd t = val(n.a).array().tanh();
                acc(n.a, g.array() * (1.0 - t.array().square()));
                break;
            }
            case Op::TanhD1: {
                MatrixXd t = val(n.a).array().tanh();
                acc(n.a, g.array() * (-2.0 * t.array() * (1.0 - t.array().square())));
                break;
            }
            case Op::TanhD2: {
                // d/dz tanh''(z) = (6 tanh^2 - 2)(1 - tanh^2)
                MatrixXd t = val(n.a).array().tanh();
                acc(n.a, g.array() *
                             ((6.0 * t.array().square() - 2.0) * (1.0 - t.array().square())));
                break;
            }
            case Op::Exp:
                acc(n.a, g.cwiseProduct(val(i)));
                break;
            case Op::Log:
                acc(n.a, g.cwiseQuotient(val(n.a)));
                break;
            case Op::Sum:
                acc(n.a, MatrixXd::Constant(val(n.a).rows(), val(n.a).cols(), g(0, 0)));
                break;
            case Op::Dot:
                acc(n.a, g(0, 0) * val(n.b));
                acc(n.b, g(0, 0) * val(n.a));
                break;
        }
    }
};

}  // namespace softhjb::ad
