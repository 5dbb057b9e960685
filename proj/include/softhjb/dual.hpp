#pragma once

#include <cmath>

namespace softhjb::ad {

// First-order dual number over an arbitrary scalar T (nestable).
template <class T>
struct Dual {
    T v{};  // value
    T d{};  // tangent

    Dual() = default;
    Dual(T value) : v(value), d(T(0)) {}
    Dual(T value, T tangent) : v(value), d(tangent) {}

    friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
    friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
    friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
    friend Dual operator*(const Dual& a, const Dual& b) {
        return {a.v * b.v, a.d * b.v + a.v * b.d};
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        T inv = T(1) / b.v;
        return {a.v * inv, (a.d - a.v * inv * b.d) * inv};
    }
    Dual& operator+=(const Dual& o) { return *this = *this + o; }
    Dual& operator-=(const Dual& o) { return *this = *this - o; }
    Dual& operator*=(const Dual& o) { return *this = *this * o; }
};

using std::exp;
using std::log;
using std::tanh;

template <class T>
Dual<T> tanh(const Dual<T>& a) {
    T t = tanh(a.v);
    return {t, (T(1) - t * t) * a.d};
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
    T e = exp(a.v);
    return {e, e * a.d};
}

template <class T>
Dual<T> log(const Dual<T>& a) {
    return {log(a.v), a.d / a.v};
}

// Second-order scalar jet along one direction: value, first and second
// directional derivatives. One pass yields e.g. sigma_k^T (D^2 v) sigma_k.
template <class T>
struct Jet2 {
    T v{};
    T d1{};
    T d2{};

    Jet2() = default;
    Jet2(T value) : v(value), d1(T(0)), d2(T(0)) {}
    Jet2(T value, T first, T second = T(0)) : v(value), d1(first), d2(second) {}

    friend Jet2 operator+(const Jet2& a, const Jet2& b) {
        return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
    }
    friend Jet2 operator-(const Jet2& a, const Jet2& b) {
        return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
    }
    friend Jet2 operator-(const Jet2& a) { return {-a.v, -a.d1, -a.d2}; }
    friend Jet2 operator*(const Jet2& a, const Jet2& b) {
        return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
                a.d2 * b.v + T(2) * a.d1 * b.d1 + a.v * b.d2};
    }
    Jet2& operator+=(const Jet2& o) { return *this = *this + o; }
};

template <class T>
Jet2<T> tanh(const Jet2<T>& a) {
    T t = tanh(a.v);
    T t1 = T(1) - t * t;        // tanh'
    T t2 = T(-2) * t * t1;      // tanh''
    return {t, t1 * a.d1, t1 * a.d2 + t2 * a.d1 * a.d1};
}

}  // namespace softhjb::ad
