#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace vbkde::detail {

template <class T>
inline T scalar_value(const T& x) { return x; }

/// Truncated Taylor series c[0] + c[1] e + ... + c[N] e^N in one variable.
///
/// The coefficient type may itself be a Jet, which gives mixed expansions in
/// two variables (used for bandwidth-dependent scale functions).
template <class T, std::size_t N>
struct Jet {
    std::array<T, N + 1> c{};

    Jet() = default;
    Jet(const T& constant) { c[0] = constant; } // NOLINT: implicit lift of constants
    template <class S>
        requires std::is_arithmetic_v<S> && (!std::is_same_v<S, T>)
    Jet(S constant) { c[0] = T(static_cast<double>(constant)); } // NOLINT

    /// The variable itself, expanded about `at`.
    static Jet variable(const T& at) {
        Jet j;
        j.c[0] = at;
        if constexpr (N >= 1) j.c[1] = T(1.0);
        return j;
    }

    Jet& operator+=(const Jet& o) { for (std::size_t k = 0; k <= N; ++k) c[k] += o.c[k]; return *this; }
    Jet& operator-=(const Jet& o) { for (std::size_t k = 0; k <= N; ++k) c[k] -= o.c[k]; return *this; }
    Jet& operator*=(const Jet& o) { *this = *this * o; return *this; }
    Jet& operator/=(const Jet& o) { *this = *this / o; return *this; }
    Jet operator-() const { Jet r; for (std::size_t k = 0; k <= N; ++k) r.c[k] = -c[k]; return r; }

    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r;
        for (std::size_t k = 0; k <= N; ++k) {
            T s = a.c[0] * b.c[k];
            for (std::size_t j = 1; j <= k; ++j) s += a.c[j] * b.c[k - j];
            r.c[k] = s;
        }
        return r;
    }
    friend Jet operator/(const Jet& a, const Jet& b) {
        Jet r;
        for (std::size_t k = 0; k <= N; ++k) {
            T s = a.c[k];
            for (std::size_t j = 1; j <= k; ++j) s -= b.c[j] * r.c[k - j];
            r.c[k] = s / b.c[0];
        }
        return r;
    }

    friend bool operator<(const Jet& a, const Jet& b) { return scalar_value(a) < scalar_value(b); }
    friend bool operator<=(const Jet& a, const Jet& b) { return scalar_value(a) <= scalar_value(b); }
    friend bool operator>(const Jet& a, const Jet& b) { return scalar_value(a) > scalar_value(b); }
    friend bool operator>=(const Jet& a, const Jet& b) { return scalar_value(a) >= scalar_value(b); }

    /// k-th derivative with respect to the expansion variable.
    T derivative(std::size_t k) const {
        double fact = 1.0;
        for (std::size_t j = 2; j <= k; ++j) fact *= static_cast<double>(j);
        return c[k] * fact;
    }
};

template <class T, std::size_t N>
inline double scalar_value(const Jet<T, N>& x) { return scalar_value(x.c[0]); }

template <class T, std::size_t N>
Jet<T, N> sqrt(const Jet<T, N>& a) {
    using std::sqrt;
    Jet<T, N> r;
    r.c[0] = sqrt(a.c[0]);
    for (std::size_t k = 1; k <= N; ++k) {
        T s = a.c[k];
        for (std::size_t j = 1; j < k; ++j) s -= r.c[j] * r.c[k - j];
        r.c[k] = s / (r.c[0] * 2.0);
    }
    return r;
}

template <class T, std::size_t N>
Jet<T, N> exp(const Jet<T, N>& a) {
    using std::exp;
    Jet<T, N> r;
    r.c[0] = exp(a.c[0]);
    for (std::size_t k = 1; k <= N; ++k) {
        T s = a.c[1] * r.c[k - 1] * 1.0;
        for (std::size_t j = 2; j <= k; ++j) s += a.c[j] * r.c[k - j] * static_cast<double>(j);
        r.c[k] = s / static_cast<double>(k);
    }
    return r;
}

template <class T>
T ipow(const T& x, int e) {
    T r(1.0);
    for (int k = 0; k < e; ++k) r = r * x;
    return r;
}

} // namespace vbkde::detail
