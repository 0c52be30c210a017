#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vbkde/clipping.hpp"
#include "vbkde/density.hpp"
#include "vbkde/detail/parallel.hpp"
#include "vbkde/detail/summation.hpp"
#include "vbkde/error.hpp"
#include "vbkde/kernels.hpp"
#include "vbkde/neighbors.hpp"
#include "vbkde/samples.hpp"

namespace vbkde {

enum class EstimatorId {
    classical,
    abramson_ideal,
    hhm_ideal,
    mckay_ideal,
    mckay_real,
    jkh_ideal,
    jkh_real,
    deriv1,
    deriv2,
};

inline std::string_view to_string(EstimatorId id) {
    switch (id) {
    case EstimatorId::classical: return "classical";
    case EstimatorId::abramson_ideal: return "abramson_ideal";
    case EstimatorId::hhm_ideal: return "hhm_ideal";
    case EstimatorId::mckay_ideal: return "mckay_ideal";
    case EstimatorId::mckay_real: return "mckay_real";
    case EstimatorId::jkh_ideal: return "jkh_ideal";
    case EstimatorId::jkh_real: return "jkh_real";
    case EstimatorId::deriv1: return "deriv1";
    case EstimatorId::deriv2: return "deriv2";
    }
    return "unknown";
}

inline EstimatorId parse_estimator(std::string_view s) {
    for (auto id : {EstimatorId::classical, EstimatorId::abramson_ideal, EstimatorId::hhm_ideal,
                    EstimatorId::mckay_ideal, EstimatorId::mckay_real, EstimatorId::jkh_ideal, EstimatorId::jkh_real,
                    EstimatorId::deriv1, EstimatorId::deriv2})
        if (to_string(id) == s) return id;
    throw Error(ErrorKind::unknown_id, "unknown estimator id '" + std::string(s) + "'");
}

/// True for estimators whose output is a probability density.
inline bool is_density_estimator(EstimatorId id) {
    return id != EstimatorId::deriv1 && id != EstimatorId::deriv2 && id != EstimatorId::hhm_ideal;
}

enum class Mode { h4, h6 };

inline std::string_view to_string(Mode m) { return m == Mode::h4 ? "h4" : "h6"; }

inline Mode parse_mode(std::string_view s) {
    if (s == "h4") return Mode::h4;
    if (s == "h6") return Mode::h6;
    throw Error(ErrorKind::unknown_id, "unknown mode '" + std::string(s) + "'");
}

/// Role-tagged bandwidths. In h4 mode only h1 (pilot) and h2 (final) are
/// used; h3 and h4 are left unset.
struct BandwidthSchedule {
    Mode mode = Mode::h4;
    std::size_t n = 0;
    int d = 1;
    double h1 = 0.0;
    double h2 = 0.0;
    std::optional<double> h3;
    std::optional<double> h4;
};

inline BandwidthSchedule schedule_for(std::size_t n, int d, Mode mode) {
    require(n >= 2, ErrorKind::invalid_argument, "bandwidth schedule needs n >= 2");
    require(d >= 1, ErrorKind::invalid_dimension, "dimension must be >= 1");
    require(mode == Mode::h4 || d == 1, ErrorKind::unsupported, "h6 schedule is defined for d = 1 only");
    const double base = std::log(static_cast<double>(n)) / static_cast<double>(n);
    BandwidthSchedule s;
    s.mode = mode;
    s.n = n;
    s.d = d;
    if (mode == Mode::h4) {
        s.h1 = std::pow(base, 1.0 / (4.0 + d));
        s.h2 = std::pow(base, 1.0 / (8.0 + d));
    } else {
        s.h1 = std::pow(base, 1.0 / 5.0);
        s.h2 = std::pow(base, 1.0 / 13.0);
        s.h3 = std::pow(base, 1.0 / 11.0);
        s.h4 = s.h2;
    }
    return s;
}

struct FieldMetadata {
    std::map<std::string, double> bandwidths;
    std::string kernel_id;
    std::string clip_id;
    std::string density_id;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t clamp_count = 0;
    /// Smallest per-sample scale used; bounds the support radius h sqrt(T) / scale.
    double min_scale = 1.0;
};

struct EstimateField {
    EvalGrid grid;
    std::vector<double> values;
    EstimatorId estimator = EstimatorId::classical;
    FieldMetadata meta;
};

enum class Strategy { naive, bucketed };

struct EvalOptions {
    Strategy strategy = Strategy::bucketed;
    unsigned workers = 1;
};

/// Classical KDE, first and second derivative estimates evaluated at the
/// sample points themselves (the i-th point is included in its own sum).
struct PreliminaryFit {
    std::vector<double> fhat;
    std::vector<double> deriv1;
    std::vector<double> deriv2;
};

namespace detail {

struct CubicProfile {
    double operator()(double u) const {
        const double v = 1.0 - u;
        return u <= 1.0 ? v * v * v : 0.0;
    }
};

struct PolyProfile {
    const std::vector<double>* coeffs;
    double T;
    double operator()(double u) const { return u <= T ? horner(*coeffs, u) : 0.0; }
};

struct CallableProfile {
    const RadialKernel* kernel;
    double operator()(double u) const { return kernel->profile(u); }
};

/// Calls f with the cheapest profile functor equivalent to kernel.profile.
template <class F>
decltype(auto) with_profile(const RadialKernel& k, F&& f) {
    if (k.is_polynomial()) {
        const auto& c = k.coefficients();
        if (k.support_T() == 1.0 && c == std::vector<double>{1.0, -3.0, 3.0, -1.0}) return f(CubicProfile{});
        return f(PolyProfile{&c, k.support_T()});
    }
    return f(CallableProfile{&k});
}

/// out[q] = pairwise sum over candidate samples i (ascending index) of
/// term(q, t_q, i). The naive strategy visits every sample; the bucketed one
/// only those within radius_of(q), which must bound the term's support.
template <class Term, class Radius>
void accumulate(const SampleSet& samples, std::span<const double> queries, Radius&& radius_of, Term&& term,
                const EvalOptions& opt, std::span<double> out, double cell_hint) {
    const int d = samples.dim();
    const std::size_t du = static_cast<std::size_t>(d);
    const std::size_t m = queries.size() / du;
    const std::size_t n = samples.size();
    std::optional<NeighborIndex> index;
    if (opt.strategy == Strategy::bucketed) index.emplace(samples, cell_hint);
    parallel_for(m, opt.workers, [&](std::size_t q) {
        thread_local std::vector<double> buf;
        thread_local std::vector<std::size_t> cand;
        const std::span<const double> t(queries.data() + q * du, du);
        buf.clear();
        if (opt.strategy == Strategy::naive) {
            buf.resize(n);
            for (std::size_t i = 0; i < n; ++i) buf[i] = term(q, t, i);
        } else if (d == 1) {
            const auto [first, last] = index->range_1d(t[0], radius_of(q));
            buf.resize(last - first);
            for (std::size_t i = first; i < last; ++i) buf[i - first] = term(q, t, i);
        } else {
            index->gather(t, radius_of(q), cand);
            buf.resize(cand.size());
            for (std::size_t j = 0; j < cand.size(); ++j) buf[j] = term(q, t, cand[j]);
        }
        out[q] = pairwise_sum(buf);
    });
}

inline double dist2(std::span<const double> a, const double* b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

/// (1 / (n h^d)) sum_i scale_i^d K((t - X_i) scale_i / h). Empty `scales`
/// means scale_i = 1 (classical KDE).
inline void scaled_kernel_sum(const SampleSet& samples, const RadialKernel& kernel, double h,
                              std::span<const double> scales, std::span<const double> queries,
                              const EvalOptions& opt, std::span<double> out) {
    require(h > 0.0 && std::isfinite(h), ErrorKind::invalid_argument, "bandwidth must be positive");
    require(kernel.dimension() == samples.dim(), ErrorKind::invalid_dimension, "kernel / sample dimension mismatch");
    const int d = samples.dim();
    const std::size_t n = samples.size();
    std::vector<double> weight(n, 1.0), inv_width2(n, 1.0 / (h * h));
    double min_scale = 1.0;
    if (!scales.empty()) {
        require(scales.size() == n, ErrorKind::invalid_argument, "one scale per sample required");
        min_scale = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            require(scales[i] > 0.0 && std::isfinite(scales[i]), ErrorKind::zero_scale, "scales must be positive");
            weight[i] = std::pow(scales[i], d);
            inv_width2[i] = scales[i] * scales[i] / (h * h);
            min_scale = std::min(min_scale, scales[i]);
        }
    }
    const double radius = h * std::sqrt(kernel.support_T()) / min_scale;
    const double* xs = samples.flat().data();
    const std::size_t du = static_cast<std::size_t>(d);
    with_profile(kernel, [&](auto profile) {
        auto term = [&](std::size_t, std::span<const double> t, std::size_t i) {
            const double u = (d == 1 ? (t[0] - xs[i]) * (t[0] - xs[i]) : dist2(t, xs + i * du)) * inv_width2[i];
            return weight[i] * profile(u);
        };
        accumulate(samples, queries, [radius](std::size_t) { return radius; }, term, opt, out, radius);
    });
    const double factor = kernel.normalization() / (static_cast<double>(n) * std::pow(h, d));
    for (double& v : out) v *= factor;
}

inline EvalGrid points_as_grid(const SampleSet& s) {
    return EvalGrid(std::vector<double>(s.flat().begin(), s.flat().end()), s.dim());
}

inline double min_of(std::span<const double> v) {
    double m = std::numeric_limits<double>::infinity();
    for (double x : v) m = std::min(m, x);
    return m;
}

} // namespace detail

inline EstimateField classical_kde(const SampleSet& samples, const RadialKernel& kernel, double h,
                                   const EvalGrid& grid, const EvalOptions& opt = {}) {
    require(grid.dim() == samples.dim(), ErrorKind::invalid_dimension, "grid / sample dimension mismatch");
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::scaled_kernel_sum(samples, kernel, h, {}, grid.flat(), opt, f.values);
    f.estimator = EstimatorId::classical;
    f.meta.bandwidths["h"] = h;
    f.meta.kernel_id = kernel.id();
    f.meta.n = samples.size();
    return f;
}

/// Classical KDE with bandwidth h evaluated at every sample point.
inline std::vector<double> classical_at_samples(const SampleSet& samples, const RadialKernel& kernel, double h,
                                                const EvalOptions& opt = {}) {
    std::vector<double> out(samples.size());
    detail::scaled_kernel_sum(samples, kernel, h, {}, samples.flat(), opt, out);
    return out;
}

/// First-derivative estimate with G' and h3, second-derivative estimate with
/// G'' and h4, both evaluated at `at` (d = 1 only).
inline std::pair<std::vector<double>, std::vector<double>>
deriv_estimates(const SampleSet& samples, const FourthOrderKernel& G, double h3, double h4,
                std::span<const double> at, const EvalOptions& opt = {}) {
    require(samples.dim() == 1, ErrorKind::unsupported, "derivative estimates are defined for d = 1 only");
    require(h3 > 0.0 && h4 > 0.0, ErrorKind::invalid_argument, "derivative bandwidths must be positive");
    const double* xs = samples.flat().data();
    const double n = static_cast<double>(samples.size());
    std::pair<std::vector<double>, std::vector<double>> out{std::vector<double>(at.size()),
                                                            std::vector<double>(at.size())};
    const double r3 = h3 * G.support_TG(), r4 = h4 * G.support_TG();
    detail::accumulate(
        samples, at, [r3](std::size_t) { return r3; },
        [&](std::size_t, std::span<const double> t, std::size_t i) { return G.dG((t[0] - xs[i]) / h3); }, opt,
        out.first, r3);
    detail::accumulate(
        samples, at, [r4](std::size_t) { return r4; },
        [&](std::size_t, std::span<const double> t, std::size_t i) { return G.d2G((t[0] - xs[i]) / h4); }, opt,
        out.second, r4);
    for (double& v : out.first) v /= n * h3 * h3;
    for (double& v : out.second) v /= n * h4 * h4 * h4;
    return out;
}

/// Derivative estimate (order 1 or 2) as a field on a grid.
inline EstimateField deriv_field(const SampleSet& samples, const FourthOrderKernel& G, double h, int order,
                                 const EvalGrid& grid, const EvalOptions& opt = {}) {
    require(order == 1 || order == 2, ErrorKind::unsupported_order, "derivative field order must be 1 or 2");
    auto [d1, d2] = deriv_estimates(samples, G, h, h, grid.flat(), opt);
    EstimateField f;
    f.grid = grid;
    f.values = order == 1 ? std::move(d1) : std::move(d2);
    f.estimator = order == 1 ? EstimatorId::deriv1 : EstimatorId::deriv2;
    f.meta.bandwidths[order == 1 ? "h3" : "h4"] = h;
    f.meta.kernel_id = G.id();
    f.meta.n = samples.size();
    return f;
}

/// Square-root-law estimator with the hard clip scale max(f(s), f(t)/10)^{1/2}.
/// In d >= 2 the scale enters as scale^d, mirroring the clipped estimators.
inline EstimateField ideal_abramson(const SampleSet& samples, const RadialKernel& kernel, double h,
                                    const DensityModel& truth, const EvalGrid& grid, const EvalOptions& opt = {}) {
    require(grid.dim() == samples.dim() && truth.dim == samples.dim() && kernel.dimension() == samples.dim(),
            ErrorKind::invalid_dimension, "dimension mismatch");
    require(h > 0.0, ErrorKind::invalid_argument, "bandwidth must be positive");
    const int d = samples.dim();
    const std::size_t du = static_cast<std::size_t>(d);
    const std::size_t n = samples.size();
    std::vector<double> fs(n), ft(grid.size());
    for (std::size_t i = 0; i < n; ++i) fs[i] = truth.pdf(samples.point(i));
    for (std::size_t q = 0; q < grid.size(); ++q) ft[q] = truth.pdf(grid.point(q));
    const double* xs = samples.flat().data();
    const double sqrtT = std::sqrt(kernel.support_T());
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::with_profile(kernel, [&](auto profile) {
        auto radius = [&](std::size_t q) {
            const double floor_scale = std::sqrt(ft[q] / 10.0);
            return floor_scale > 0.0 ? h * sqrtT / floor_scale : std::numeric_limits<double>::infinity();
        };
        auto term = [&](std::size_t q, std::span<const double> t, std::size_t i) {
            const double scale = std::sqrt(std::max(fs[i], ft[q] / 10.0));
            const double r2 = detail::dist2(t, xs + i * du);
            if (scale == 0.0) {
                require(r2 > 0.0, ErrorKind::zero_scale, "zero clipped scale at an evaluation point equal to a sample");
                return 0.0;
            }
            return std::pow(scale, d) * profile(r2 * scale * scale / (h * h));
        };
        detail::accumulate(samples, grid.flat(), radius, term, opt, f.values,
                           h * sqrtT / std::sqrt(std::max(detail::min_of(ft), 1e-300) / 10.0));
    });
    const double factor = kernel.normalization() / (static_cast<double>(n) * std::pow(h, d));
    for (double& v : f.values) v *= factor;
    f.estimator = EstimatorId::abramson_ideal;
    f.meta.bandwidths["h"] = h;
    f.meta.kernel_id = kernel.id();
    f.meta.density_id = truth.id;
    f.meta.n = n;
    return f;
}

/// Truncated square-root-law estimator (d = 1): terms with |t - X_i| >= hB are dropped.
inline EstimateField ideal_hhm(const SampleSet& samples, const RadialKernel& kernel, double h, double B,
                               const DensityModel& truth, const EvalGrid& grid, const EvalOptions& opt = {}) {
    require(samples.dim() == 1 && grid.dim() == 1 && truth.dim == 1 && kernel.dimension() == 1, ErrorKind::unsupported,
            "the truncated square-root-law estimator is defined for d = 1 only");
    require(h > 0.0 && B > 0.0, ErrorKind::invalid_argument, "h and B must be positive");
    const std::size_t n = samples.size();
    const double* xs = samples.flat().data();
    std::vector<double> root(n);
    for (std::size_t i = 0; i < n; ++i) root[i] = std::sqrt(truth.pdf1(xs[i]));
    const double cutoff = h * B;
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::with_profile(kernel, [&](auto profile) {
        auto term = [&](std::size_t, std::span<const double> t, std::size_t i) {
            const double diff = t[0] - xs[i];
            if (!(std::abs(diff) < cutoff)) return 0.0;
            const double u = diff * root[i] / h;
            return root[i] * profile(u * u);
        };
        detail::accumulate(samples, grid.flat(), [cutoff](std::size_t) { return cutoff; }, term, opt, f.values,
                           cutoff);
    });
    const double factor = kernel.normalization() / (static_cast<double>(n) * h);
    for (double& v : f.values) v *= factor;
    f.estimator = EstimatorId::hhm_ideal;
    f.meta.bandwidths["h"] = h;
    f.meta.bandwidths["B"] = B;
    f.meta.kernel_id = kernel.id();
    f.meta.density_id = truth.id;
    f.meta.n = n;
    return f;
}

inline EstimateField ideal_mckay(const SampleSet& samples, const RadialKernel& kernel, double h,
                                 const ClippingSpec& clip, const DensityModel& truth, const EvalGrid& grid,
                                 const EvalOptions& opt = {}) {
    require(grid.dim() == samples.dim() && truth.dim == samples.dim(), ErrorKind::invalid_dimension,
            "dimension mismatch");
    std::vector<double> scale(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) scale[i] = clip.alpha(truth.pdf(samples.point(i)));
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::scaled_kernel_sum(samples, kernel, h, scale, grid.flat(), opt, f.values);
    f.estimator = EstimatorId::mckay_ideal;
    f.meta.bandwidths["h"] = h;
    f.meta.kernel_id = kernel.id();
    f.meta.clip_id = clip.id();
    f.meta.density_id = truth.id;
    f.meta.n = samples.size();
    f.meta.min_scale = detail::min_of(scale);
    return f;
}

/// Stage one of the plug-in estimators: pilot KDE (h1) at every sample and,
/// in h6 mode, the derivative estimates (h3, h4) at every sample.
inline PreliminaryFit preliminary_fit(const SampleSet& samples, const RadialKernel& kernel,
                                      const BandwidthSchedule& schedule, const FourthOrderKernel* G,
                                      const EvalOptions& opt = {}) {
    PreliminaryFit fit;
    fit.fhat = classical_at_samples(samples, kernel, schedule.h1, opt);
    if (schedule.mode == Mode::h6) {
        require(G != nullptr, ErrorKind::invalid_argument, "h6 preliminary fit needs a fourth-order kernel");
        require(schedule.h3 && schedule.h4, ErrorKind::invalid_argument, "h6 schedule lacks h3/h4");
        auto [d1, d2] = deriv_estimates(samples, *G, *schedule.h3, *schedule.h4, samples.flat(), opt);
        fit.deriv1 = std::move(d1);
        fit.deriv2 = std::move(d2);
    }
    return fit;
}

inline EstimateField real_mckay(const SampleSet& samples, const RadialKernel& kernel,
                                const BandwidthSchedule& schedule, const ClippingSpec& clip,
                                const EvalGrid& grid, const PreliminaryFit& fit, const EvalOptions& opt = {}) {
    require(schedule.mode == Mode::h4, ErrorKind::unsupported, "real McKay estimator needs an h4-mode schedule");
    require(fit.fhat.size() == samples.size(), ErrorKind::invalid_argument, "preliminary fit size mismatch");
    std::vector<double> scale(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) scale[i] = clip.alpha(fit.fhat[i]);
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::scaled_kernel_sum(samples, kernel, schedule.h2, scale, grid.flat(), opt, f.values);
    f.estimator = EstimatorId::mckay_real;
    f.meta.bandwidths["h1"] = schedule.h1;
    f.meta.bandwidths["h2"] = schedule.h2;
    f.meta.kernel_id = kernel.id();
    f.meta.clip_id = clip.id();
    f.meta.n = samples.size();
    f.meta.min_scale = detail::min_of(scale);
    return f;
}

inline EstimateField real_mckay(const SampleSet& samples, const RadialKernel& kernel,
                                const BandwidthSchedule& schedule, const ClippingSpec& clip,
                                const EvalGrid& grid, const EvalOptions& opt = {}) {
    require(schedule.mode == Mode::h4, ErrorKind::unsupported, "real McKay estimator needs an h4-mode schedule");
    return real_mckay(samples, kernel, schedule, clip, grid, preliminary_fit(samples, kernel, schedule, nullptr, opt),
                      opt);
}

/// BetaSpec backed by a density model's analytic derivatives.
inline BetaSpec beta_from_density(const DensityModel& truth, const MomentTable& tau) {
    require(truth.dim == 1 && truth.max_derivative_order >= 2, ErrorKind::unsupported,
            "beta needs a d = 1 density with two derivatives");
    BetaSpec b;
    b.tau2 = tau.tau2;
    b.tau4 = tau.tau4;
    b.density = [&truth](double x) {
        return BetaSpec::Derivs{truth.pdf1(x), truth.derivative(x, 1), truth.derivative(x, 2)};
    };
    return b;
}

/// h6 ideal estimator with scale alpha(f) / (1 + h^2 beta) evaluated from the true density.
inline EstimateField ideal_jkh(const SampleSet& samples, const RadialKernel& kernel, double h,
                               const ClippingSpec& clip, const BetaSpec& beta_spec, const EvalGrid& grid,
                               const EvalOptions& opt = {}) {
    require(samples.dim() == 1 && grid.dim() == 1, ErrorKind::unsupported, "the h6 estimator is defined for d = 1");
    const std::size_t n = samples.size();
    std::vector<double> scale(n);
    for (std::size_t i = 0; i < n; ++i) scale[i] = gamma_h6(beta_spec, clip, samples.point(i)[0], h);
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::scaled_kernel_sum(samples, kernel, h, scale, grid.flat(), opt, f.values);
    f.estimator = EstimatorId::jkh_ideal;
    f.meta.bandwidths["h"] = h;
    f.meta.kernel_id = kernel.id();
    f.meta.clip_id = clip.id();
    f.meta.n = n;
    f.meta.min_scale = detail::min_of(scale);
    return f;
}

/// Per-sample scales of the four-bandwidth plug-in estimator. Scales whose
/// denominator 1 + delta^2 beta_hat is not positive, or that fall outside
/// [c/2, 2 max alpha_hat], are clamped into that range and counted.
inline std::vector<double> jkh_real_scales(const PreliminaryFit& fit, const MomentTable& tau,
                                           const ClippingSpec& clip, double delta, std::size_t& clamps) {
    const std::size_t n = fit.fhat.size();
    require(fit.deriv1.size() == n && fit.deriv2.size() == n, ErrorKind::invalid_argument,
            "h6 preliminary fit lacks derivative estimates");
    std::vector<double> a(n), out(n);
    double amax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = clip.alpha(fit.fhat[i]);
        amax = std::max(amax, a[i]);
    }
    const double lo = 0.5 * clip.c(), hi = 2.0 * amax;
    clamps = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double b = BetaSpec::formula(tau.tau2, tau.tau4, clip, fit.fhat[i], fit.deriv1[i], fit.deriv2[i]);
        const double denom = 1.0 + delta * delta * b;
        double g = denom > 0.0 ? a[i] / denom : hi;
        if (!(denom > 0.0) || g < lo || g > hi) {
            ++clamps;
            g = std::clamp(g, lo, hi);
        }
        out[i] = g;
    }
    return out;
}

/// Four-bandwidth plug-in h6 estimator. `delta` overrides the bandwidth used
/// inside the scale correction (defaults to h2).
inline EstimateField real_jkh(const SampleSet& samples, const RadialKernel& kernel, const FourthOrderKernel& G,
                              const BandwidthSchedule& schedule, const ClippingSpec& clip, const EvalGrid& grid,
                              const PreliminaryFit& fit, const EvalOptions& opt = {},
                              std::optional<double> delta = std::nullopt) {
    require(samples.dim() == 1 && grid.dim() == 1, ErrorKind::unsupported, "the h6 estimator is defined for d = 1");
    require(schedule.mode == Mode::h6, ErrorKind::unsupported, "real h6 estimator needs an h6-mode schedule");
    const MomentTable tau = moments(kernel, 4);
    std::size_t clamps = 0;
    const auto scale = jkh_real_scales(fit, tau, clip, delta.value_or(schedule.h2), clamps);
    EstimateField f;
    f.grid = grid;
    f.values.resize(grid.size());
    detail::scaled_kernel_sum(samples, kernel, schedule.h2, scale, grid.flat(), opt, f.values);
    f.estimator = EstimatorId::jkh_real;
    f.meta.bandwidths["h1"] = schedule.h1;
    f.meta.bandwidths["h2"] = schedule.h2;
    f.meta.bandwidths["h3"] = *schedule.h3;
    f.meta.bandwidths["h4"] = *schedule.h4;
    f.meta.kernel_id = kernel.id() + "|" + G.id();
    f.meta.clip_id = clip.id();
    f.meta.n = samples.size();
    f.meta.clamp_count = clamps;
    f.meta.min_scale = detail::min_of(scale);
    return f;
}

inline EstimateField real_jkh(const SampleSet& samples, const RadialKernel& kernel, const FourthOrderKernel& G,
                              const BandwidthSchedule& schedule, const ClippingSpec& clip, const EvalGrid& grid,
                              const EvalOptions& opt = {}, std::optional<double> delta = std::nullopt) {
    require(schedule.mode == Mode::h6, ErrorKind::unsupported, "real h6 estimator needs an h6-mode schedule");
    return real_jkh(samples, kernel, G, schedule, clip, grid, preliminary_fit(samples, kernel, schedule, &G, opt), opt,
                    delta);
}

/// Ideal counterpart of real_jkh: the same clamped scale rule fed with the
/// true f, f', f'' at the samples. Unlike ideal_jkh it accepts bandwidths
/// where h^2 |beta| >= 1/2 somewhere.
inline EstimateField ideal_jkh_clamped(const SampleSet& samples, const RadialKernel& kernel,
                                       const FourthOrderKernel& G, const BandwidthSchedule& schedule,
                                       const ClippingSpec& clip, const DensityModel& truth, const EvalGrid& grid,
                                       const EvalOptions& opt = {}) {
    require(samples.dim() == 1 && truth.dim == 1, ErrorKind::unsupported, "the h6 estimator is defined for d = 1");
    require(truth.max_derivative_order >= 2, ErrorKind::unsupported_order, "truth lacks second derivatives");
    PreliminaryFit exact;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double x = samples.point(i)[0];
        exact.fhat.push_back(truth.pdf1(x));
        exact.deriv1.push_back(truth.derivative(x, 1));
        exact.deriv2.push_back(truth.derivative(x, 2));
    }
    auto f = real_jkh(samples, kernel, G, schedule, clip, grid, exact, opt);
    f.estimator = EstimatorId::jkh_ideal;
    return f;
}

/// Sup over the grid of |real - ideal|.
inline double ideal_real_gap(const EstimateField& ideal, const EstimateField& real) {
    require(ideal.grid == real.grid && ideal.values.size() == real.values.size(), ErrorKind::grid_mismatch,
            "fields live on different grids");
    double gap = 0.0;
    for (std::size_t i = 0; i < ideal.values.size(); ++i) gap = std::max(gap, std::abs(real.values[i] - ideal.values[i]));
    return gap;
}

/// Tensor grid covering the sample hull padded by h sqrt(T) / min_scale on
/// every side, so each summand's full support is inside.
inline EvalGrid padded_grid(const SampleSet& samples, double h, double support_T, double min_scale,
                            std::size_t points_per_axis) {
    const std::size_t du = static_cast<std::size_t>(samples.dim());
    std::vector<double> lo(du, std::numeric_limits<double>::infinity()), hi(du, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto p = samples.point(i);
        for (std::size_t k = 0; k < du; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }
    const double pad = h * std::sqrt(support_T) / min_scale * (1.0 + 1e-9);
    for (std::size_t k = 0; k < du; ++k) {
        lo[k] -= pad;
        hi[k] += pad;
    }
    return EvalGrid::tensor(lo, hi, points_per_axis);
}

/// Quadrature of a field on a tensor grid: composite Simpson per axis
/// (trapezoid on the last interval when the node count is even).
inline double field_integral(const EstimateField& f) {
    require(f.grid.is_tensor(), ErrorKind::invalid_argument, "field quadrature requires a tensor grid");
    const auto& axes = f.grid.axes();
    std::vector<std::vector<double>> w(axes.size());
    for (std::size_t k = 0; k < axes.size(); ++k) {
        const std::size_t m = axes[k].size();
        const double step = (axes[k].back() - axes[k].front()) / static_cast<double>(m - 1);
        w[k].assign(m, 0.0);
        const std::size_t simpson_nodes = (m % 2 == 1) ? m : m - 1;
        if (simpson_nodes >= 3) {
            for (std::size_t i = 0; i < simpson_nodes; ++i) {
                const double c = (i == 0 || i + 1 == simpson_nodes) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
                w[k][i] += c * step / 3.0;
            }
        }
        if (simpson_nodes != m || simpson_nodes < 3) {
            w[k][m - 2] += 0.5 * step;
            w[k][m - 1] += 0.5 * step;
        }
    }
    const std::size_t total = f.values.size();
    std::vector<double> terms(total);
    std::vector<std::size_t> idx(axes.size(), 0);
    for (std::size_t p = 0; p < total; ++p) {
        double weight = 1.0;
        for (std::size_t k = 0; k < axes.size(); ++k) weight *= w[k][idx[k]];
        terms[p] = weight * f.values[p];
        for (std::size_t k = axes.size(); k-- > 0;) {
            if (++idx[k] < axes[k].size()) break;
            idx[k] = 0;
        }
    }
    return detail::pairwise_sum(terms);
}

} // namespace vbkde
