#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "vbkde/error.hpp"

namespace vbkde::detail {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive 31-point Gauss-Kronrod on [a, b]; the caller judges the error.
template <class F>
QuadratureResult integrate_unchecked(F&& f, double a, double b, double rel_tol, unsigned max_depth = 15) {
    QuadratureResult out;
    out.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, rel_tol, &out.error);
    return out;
}

/// Adaptive 31-point Gauss-Kronrod on [a, b]. Throws ErrorKind::quadrature
/// when the estimated error exceeds both the relative and the absolute target.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double rel_tol = 1e-12, double abs_tol = 1e-13,
                           unsigned max_depth = 25) {
    QuadratureResult out;
    double l1 = 0.0;
    out.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, rel_tol,
                                                                              &out.error, &l1);
    if (!(out.error <= std::max(abs_tol, rel_tol * l1)) || !std::isfinite(out.value)) {
        std::ostringstream msg;
        msg << "adaptive quadrature on [" << a << ", " << b << "] reached error " << out.error
            << " (target rel " << rel_tol << ", abs " << abs_tol << ")";
        throw Error(ErrorKind::quadrature, msg.str());
    }
    return out;
}

/// Integrates over consecutive pieces [breaks[k], breaks[k+1]] and sums.
template <class F>
QuadratureResult integrate_pieces(F&& f, const std::vector<double>& breaks, double rel_tol = 1e-12,
                                  double abs_tol = 1e-13) {
    QuadratureResult total;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        if (!(breaks[k + 1] > breaks[k])) continue;
        const auto piece = integrate(f, breaks[k], breaks[k + 1], rel_tol, abs_tol);
        total.value += piece.value;
        total.error += piece.error;
    }
    return total;
}

} // namespace vbkde::detail
