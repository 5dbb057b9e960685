#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "softhjb/dual.hpp"

namespace softhjb::ad {

template <class T>
class ScalarTape;

template <class T>
struct RVar {
    ScalarTape<T>* tape = nullptr;
    int id = -1;
};

// Scalar reverse-mode tape, templated on the underlying scalar so it can be
// nested with Dual<double> (forward-over-reverse) for Hessian-vector products.
template <class T>
class ScalarTape {
public:
    RVar<T> leaf(T value) {
        nodes_.push_back({-1, -1, T(0), T(0), value});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    RVar<T> constant(T value) { return leaf(value); }

    RVar<T> binary(const RVar<T>& a, const RVar<T>& b, T value, T wa, T wb) {
        nodes_.push_back({a.id, b.id, wa, wb, value});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    RVar<T> unary(const RVar<T>& a, T value, T wa) {
        nodes_.push_back({a.id, -1, wa, T(0), value});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    const T& value(const RVar<T>& v) const { return nodes_[v.id].value; }

    // Adjoints of every node with respect to node y.
    std::vector<T> gradient(const RVar<T>& y) {
        std::vector<T> adj(nodes_.size(), T(0));
        adj[y.id] = T(1);
        for (int i = y.id; i >= 0; --i) {
            const Node& n = nodes_[i];
            if (n.p0 >= 0) adj[n.p0] += n.w0 * adj[i];
            if (n.p1 >= 0) adj[n.p1] += n.w1 * adj[i];
        }
        return adj;
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        int p0, p1;
        T w0, w1;
        T value;
    };
    std::vector<Node> nodes_;
};

template <class T>
RVar<T> operator+(const RVar<T>& a, const RVar<T>& b) {
    return a.tape->binary(a, b, a.tape->value(a) + b.tape->value(b), T(1), T(1));
}

template <class T>
RVar<T> operator-(const RVar<T>& a, const RVar<T>& b) {
    return a.tape->binary(a, b, a.tape->value(a) - b.tape->value(b), T(1), T(-1));
}

template <class T>
RVar<T> operator*(const RVar<T>& a, const RVar<T>& b) {
    return a.tape->binary(a, b, a.tape->value(a) * b.tape->value(b), b.tape->value(b),
                          a.tape->value(a));
}

template <class T>
RVar<T> operator*(const T& c, const RVar<T>& a) {
    return a.tape->unary(a, c * a.tape->value(a), c);
}

template <class T>
RVar<T> tanh(const RVar<T>& a) {
    using std::tanh;
    T t = tanh(a.tape->value(a));
    return a.tape->unary(a, t, T(1) - t * t);
}

}  // namespace softhjb::ad
