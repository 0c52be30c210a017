#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbkde/bias_oracle.hpp"
#include "vbkde/clipping.hpp"
#include "vbkde/density.hpp"
#include "vbkde/detail/parallel.hpp"
#include "vbkde/detail/regression.hpp"
#include "vbkde/estimators.hpp"
#include "vbkde/kernels.hpp"
#include "vbkde/rng.hpp"

namespace vbkde {

enum class RegionKind { oracle, estimated };

inline std::string_view to_string(RegionKind k) { return k == RegionKind::oracle ? "oracle" : "estimated"; }

/// Boolean mask over an evaluation grid.
struct Region {
    RegionKind kind = RegionKind::oracle;
    double r = 0.0;
    EvalGrid grid;
    std::vector<char> mask;

    std::size_t count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

namespace detail {

inline double norm(std::span<const double> t) {
    double s = 0.0;
    for (double v : t) s += v * v;
    return std::sqrt(s);
}

inline void check_region_constant(double r, const ClippingSpec& clip) {
    if (!(r > clip.t0() * clip.c() * clip.c())) {
        throw Error(ErrorKind::invalid_region, "region level r = " + std::to_string(r) +
                                                   " must exceed t0 c^2 = " +
                                                   std::to_string(clip.t0() * clip.c() * clip.c()));
    }
}

} // namespace detail

/// {t : f(t) > r, |t| < 1/r} on the grid; requires r > t0 c^2.
inline Region build_region(const DensityModel& f, double r, const ClippingSpec& clip, const EvalGrid& grid) {
    detail::check_region_constant(r, clip);
    require(grid.dim() == f.dim, ErrorKind::invalid_dimension, "grid / density dimension mismatch");
    Region reg;
    reg.kind = RegionKind::oracle;
    reg.r = r;
    reg.grid = grid;
    reg.mask.resize(grid.size());
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const auto t = grid.point(q);
        reg.mask[q] = (f.pdf(t) > r && detail::norm(t) < 1.0 / r) ? 1 : 0;
    }
    return reg;
}

/// {t : fhat(t; h1) > 2r, |t| < 1/r} from a pilot KDE evaluated on the grid.
inline Region build_region(const EstimateField& pilot, double r, const ClippingSpec& clip) {
    detail::check_region_constant(r, clip);
    Region reg;
    reg.kind = RegionKind::estimated;
    reg.r = r;
    reg.grid = pilot.grid;
    reg.mask.resize(pilot.grid.size());
    for (std::size_t q = 0; q < pilot.grid.size(); ++q)
        reg.mask[q] = (pilot.values[q] > 2.0 * r && detail::norm(pilot.grid.point(q)) < 1.0 / r) ? 1 : 0;
    return reg;
}

/// Max over masked grid points of |field - f|.
inline double sup_error(const EstimateField& field, const DensityModel& f, const Region& region) {
    require(field.grid == region.grid, ErrorKind::grid_mismatch, "field and region grids differ");
    double worst = 0.0;
    bool any = false;
    for (std::size_t q = 0; q < region.mask.size(); ++q) {
        if (!region.mask[q]) continue;
        any = true;
        worst = std::max(worst, std::abs(field.values[q] - f.pdf(field.grid.point(q))));
    }
    require(any, ErrorKind::empty_region, "region is empty on this grid");
    return worst;
}

/// True when every point of `inner` is also in `outer`.
inline bool region_contained(const Region& inner, const Region& outer) {
    require(inner.grid == outer.grid, ErrorKind::grid_mismatch, "regions live on different grids");
    for (std::size_t q = 0; q < inner.mask.size(); ++q)
        if (inner.mask[q] && !outer.mask[q]) return false;
    return true;
}

/// Tensor grid spanning the bounding box of {f > r, |t| < 1/r}, widened by
/// `margin` (fraction of the extent) on each side.
inline EvalGrid region_grid(const DensityModel& f, double r, std::size_t points_per_axis, double margin = 0.05) {
    const std::size_t du = static_cast<std::size_t>(f.dim);
    std::vector<double> lo(du, std::numeric_limits<double>::infinity()), hi(du, -std::numeric_limits<double>::infinity());
    std::vector<double> blo(du), bhi(du);
    for (std::size_t k = 0; k < du; ++k) {
        blo[k] = std::max(f.box_lo[k], -1.0 / r);
        bhi[k] = std::min(f.box_hi[k], 1.0 / r);
    }
    const std::size_t probe = du == 1 ? 20001 : 401;
    const EvalGrid coarse = EvalGrid::tensor(blo, bhi, probe);
    for (std::size_t q = 0; q < coarse.size(); ++q) {
        const auto t = coarse.point(q);
        if (f.pdf(t) > r && detail::norm(t) < 1.0 / r) {
            for (std::size_t k = 0; k < du; ++k) {
                lo[k] = std::min(lo[k], t[k]);
                hi[k] = std::max(hi[k], t[k]);
            }
        }
    }
    require(std::isfinite(lo[0]), ErrorKind::empty_region, "density never exceeds r = " + std::to_string(r));
    const double step = (bhi[0] - blo[0]) / static_cast<double>(probe - 1);
    for (std::size_t k = 0; k < du; ++k) {
        const double pad = margin * (hi[k] - lo[k]) + step;
        lo[k] -= pad;
        hi[k] += pad;
    }
    return EvalGrid::tensor(lo, hi, points_per_axis);
}

/// Everything the Monte Carlo harness needs besides the estimator id.
struct ExperimentSetup {
    const DensityModel* density = nullptr;
    std::vector<double> profile_coeffs{1.0, -3.0, 3.0, -1.0};
    double support_T = 1.0;
    ClippingSpec clip = ClippingSpec::mckay_quintic(0.1);
    Mode mode = Mode::h4;
    std::vector<std::size_t> n_values;
    std::size_t replications = 1;
    std::uint64_t seed = 0;
    double r = 0.05;
    std::size_t grid_points = 1024;
    std::optional<double> hhm_B;
    unsigned workers = 1;
    /// Re-check that each real McKay field integrates to 1 +- 1e-6 (d = 1) / 1e-4 (d = 2).
    bool check_mass = true;
};

/// Kernels, clipping and (for ideal estimators) the true density, shared by
/// every evaluation of a run.
struct EstimatorContext {
    RadialKernel kernel;
    FourthOrderKernel G;
    MomentTable tau;
    BetaSpec beta;
    ClippingSpec clip;
    Mode mode = Mode::h4;
    const DensityModel* truth = nullptr;
    std::optional<double> hhm_B;
};

inline EstimatorContext make_context(const ExperimentSetup& s) {
    require(s.density != nullptr, ErrorKind::invalid_argument, "experiment has no density");
    const DensityModel& f = *s.density;
    auto kernel = RadialKernel::polynomial(s.profile_coeffs, s.support_T, f.dim);
    const auto tau = moments(kernel, 4);
    BetaSpec beta;
    if (f.dim == 1 && f.max_derivative_order >= 2) beta = beta_from_density(f, tau);
    return {kernel, make_fourth_order_kernel(), tau, beta, s.clip, s.mode, &f, s.hhm_B};
}

/// Evaluates estimator `id` with its bandwidth schedule for n = samples.size().
inline EstimateField estimate(EstimatorId id, const SampleSet& samples, const EstimatorContext& ctx, const EvalGrid& grid,
                              const EvalOptions& opt = {}) {
    const int d = samples.dim();
    auto truth = [&]() -> const DensityModel& {
        require(ctx.truth != nullptr, ErrorKind::invalid_argument, "ideal estimators need the true density");
        return *ctx.truth;
    };
    if (id == EstimatorId::deriv1 || id == EstimatorId::deriv2) {
        require(d == 1, ErrorKind::unsupported, "derivative estimates are defined for d = 1");
        const auto sched = schedule_for(samples.size(), 1, Mode::h6);
        return id == EstimatorId::deriv1 ? deriv_field(samples, ctx.G, *sched.h3, 1, grid, opt)
                                         : deriv_field(samples, ctx.G, *sched.h4, 2, grid, opt);
    }
    const auto sched = schedule_for(samples.size(), d, ctx.mode);
    switch (id) {
    case EstimatorId::classical: return classical_kde(samples, ctx.kernel, sched.h1, grid, opt);
    case EstimatorId::mckay_ideal: return ideal_mckay(samples, ctx.kernel, sched.h2, ctx.clip, truth(), grid, opt);
    case EstimatorId::mckay_real: return real_mckay(samples, ctx.kernel, sched, ctx.clip, grid, opt);
    case EstimatorId::abramson_ideal: return ideal_abramson(samples, ctx.kernel, sched.h2, truth(), grid, opt);
    case EstimatorId::hhm_ideal:
        return ideal_hhm(samples, ctx.kernel, sched.h2,
                         ctx.hhm_B.value_or(std::sqrt(ctx.kernel.support_T()) / ctx.clip.c()), truth(), grid, opt);
    case EstimatorId::jkh_ideal:
        require(ctx.truth != nullptr && ctx.beta.density, ErrorKind::invalid_argument,
                "ideal h6 estimator needs a d = 1 density with two derivatives");
        return ideal_jkh(samples, ctx.kernel, sched.h2, ctx.clip, ctx.beta, grid, opt);
    case EstimatorId::jkh_real: return real_jkh(samples, ctx.kernel, ctx.G, sched, ctx.clip, grid, opt);
    default: break;
    }
    throw Error(ErrorKind::unsupported, "unknown estimator");
}

struct RateReport {
    std::string estimator;
    std::string density;
    std::string quantity;  // "sup_error" or "gap"
    Mode mode = Mode::h4;
    int dim = 1;
    std::vector<std::size_t> n_values;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    /// errors[i][k]: replication k at n_values[i].
    std::vector<std::vector<double>> errors;
    std::vector<double> median, q25, q75;
    double slope = 0.0;
    double intercept = 0.0;
    double target_slope = 0.0;
    std::size_t clamp_events = 0;
    std::size_t mass_checks = 0;
    std::size_t mass_violations = 0;
    double worst_mass_deviation = 0.0;
};

namespace detail {

/// Type-7 sample quantile.
inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double target_slope(EstimatorId id, Mode mode, int d) {
    if (id == EstimatorId::classical) return 2.0 / (4.0 + d);
    return mode == Mode::h6 ? 6.0 / 13.0 : 4.0 / (8.0 + d);
}

inline void check_mode(EstimatorId id, Mode mode, int d) {
    switch (id) {
    case EstimatorId::mckay_ideal:
    case EstimatorId::mckay_real:
    case EstimatorId::abramson_ideal:
        require(mode == Mode::h4, ErrorKind::unsupported, std::string(to_string(id)) + " runs in h4 mode");
        break;
    case EstimatorId::hhm_ideal:
        require(mode == Mode::h4 && d == 1, ErrorKind::unsupported, "hhm_ideal runs in h4 mode with d = 1");
        break;
    case EstimatorId::jkh_ideal:
    case EstimatorId::jkh_real:
        require(mode == Mode::h6 && d == 1, ErrorKind::unsupported, std::string(to_string(id)) + " runs in h6 mode with d = 1");
        break;
    case EstimatorId::classical: break;
    default: throw Error(ErrorKind::unsupported, std::string(to_string(id)) + " is not a density estimator");
    }
}

struct Workspace {
    const ExperimentSetup& setup;
    EstimatorContext ctx;
    EvalGrid grid;
    Region region;
};

/// Integral of a field over a padded grid fine enough to resolve the
/// narrowest summand.
inline double mass_of(const SampleSet& samples, double h, double min_scale,
                      double max_scale, const RadialKernel& kernel, const std::function<EstimateField(const EvalGrid&)>& eval) {
    const double extent_pad = h * std::sqrt(kernel.support_T()) / min_scale;
    const double narrow = h * std::sqrt(kernel.support_T()) / max_scale;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : samples.flat()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo + 2.0 * extent_pad;
    const std::size_t pts = static_cast<std::size_t>(std::ceil(span / (narrow / 40.0))) | 1u;
    const EvalGrid g = padded_grid(samples, h, kernel.support_T(), min_scale, std::max<std::size_t>(pts, 801));
    return field_integral(eval(g));
}

struct CellResult {
    double error = 0.0;
    double gap = 0.0;
    std::size_t clamps = 0;
    bool mass_checked = false;
    double mass_deviation = 0.0;
};

/// One (replication, n) cell: estimator field, its sup error over the oracle
/// region and, when requested, its sup gap to the ideal counterpart.
inline CellResult run_cell(const Workspace& ws, EstimatorId id, const SampleSet& samples, bool want_gap) {
    const auto& s = ws.setup;
    const DensityModel& f = *s.density;
    const int d = f.dim;
    const EvalOptions opt{Strategy::bucketed, 1};
    const auto sched = schedule_for(samples.size(), d, s.mode);
    CellResult out;
    EstimateField field;
    std::optional<EstimateField> ideal;
    switch (id) {
    case EstimatorId::mckay_real: {
        const auto fit = preliminary_fit(samples, ws.ctx.kernel, sched, nullptr, opt);
        field = real_mckay(samples, ws.ctx.kernel, sched, s.clip, ws.grid, fit, opt);
        if (want_gap) ideal = ideal_mckay(samples, ws.ctx.kernel, sched.h2, s.clip, f, ws.grid, opt);
        if (s.check_mass && d <= 2) {
            double amax = 0.0;
            for (double v : fit.fhat) amax = std::max(amax, s.clip.alpha(v));
            const double m = mass_of(samples, sched.h2, field.meta.min_scale, amax, ws.ctx.kernel, [&](const EvalGrid& g) {
                return real_mckay(samples, ws.ctx.kernel, sched, s.clip, g, fit, opt);
            });
            out.mass_checked = true;
            out.mass_deviation = std::abs(m - 1.0);
        }
        break;
    }
    case EstimatorId::jkh_real:
        field = estimate(id, samples, ws.ctx, ws.grid, opt);
        out.clamps = field.meta.clamp_count;
        if (want_gap) ideal = ideal_jkh_clamped(samples, ws.ctx.kernel, ws.ctx.G, sched, s.clip, f, ws.grid, opt);
        break;
    default: field = estimate(id, samples, ws.ctx, ws.grid, opt);
    }
    out.error = sup_error(field, f, ws.region);
    if (ideal) out.gap = ideal_real_gap(*ideal, field);
    return out;
}

inline RateReport make_report(const ExperimentSetup& s, EstimatorId id, std::string quantity,
                              std::vector<std::vector<double>> errors) {
    RateReport rep;
    rep.estimator = std::string(to_string(id));
    rep.density = s.density->id;
    rep.quantity = std::move(quantity);
    rep.mode = s.mode;
    rep.dim = s.density->dim;
    rep.n_values = s.n_values;
    rep.replications = s.replications;
    rep.seed = s.seed;
    rep.errors = std::move(errors);
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rep.n_values.size(); ++i) {
        rep.median.push_back(quantile(rep.errors[i], 0.5));
        rep.q25.push_back(quantile(rep.errors[i], 0.25));
        rep.q75.push_back(quantile(rep.errors[i], 0.75));
        const double n = static_cast<double>(rep.n_values[i]);
        lx.push_back(std::log(std::log(n) / n));
        ly.push_back(std::log(rep.median.back()));
    }
    const auto fit = fit_line(lx, ly);
    rep.slope = fit.slope;
    rep.intercept = fit.intercept;
    rep.target_slope = target_slope(id, s.mode, rep.dim);
    return rep;
}

} // namespace detail

/// Sup-error reports for `id` and, optionally, its real-vs-ideal gap, from
/// one pass over the same samples.
struct HarnessResult {
    RateReport rate;
    std::optional<RateReport> gap;
};

inline HarnessResult run_harness(const ExperimentSetup& s, EstimatorId id, bool want_gap) {
    require(s.density != nullptr, ErrorKind::invalid_argument, "experiment has no density");
    require(s.n_values.size() >= 3, ErrorKind::insufficient_data, "rate experiments need >= 3 sample sizes");
    require(std::is_sorted(s.n_values.begin(), s.n_values.end()) &&
                std::adjacent_find(s.n_values.begin(), s.n_values.end()) == s.n_values.end(),
            ErrorKind::invalid_argument, "n_values must be strictly increasing");
    require(s.n_values.front() >= 2, ErrorKind::invalid_argument, "n_values must be >= 2");
    require(s.replications >= 1, ErrorKind::invalid_argument, "replications must be >= 1");
    const DensityModel& f = *s.density;
    const int d = f.dim;
    detail::check_mode(id, s.mode, d);
    if (want_gap)
        require(id == EstimatorId::mckay_real || id == EstimatorId::jkh_real, ErrorKind::unsupported,
                "gap is defined for the real plug-in estimators");

    const EvalGrid grid = region_grid(f, s.r, s.grid_points);
    detail::Workspace ws{s, make_context(s), grid, build_region(f, s.r, s.clip, grid)};

    const std::size_t n_max = s.n_values.back();
    const std::size_t cells = s.n_values.size();
    std::vector<std::vector<detail::CellResult>> results(s.replications);
    detail::parallel_for(s.replications, s.workers, [&](std::size_t rep) {
        // One draw stream per replication; smaller n use its prefixes.
        const auto stream = f.draw(n_max, derive_seed(s.seed, 0x5A4D, rep));
        results[rep].resize(cells);
        for (std::size_t i = 0; i < cells; ++i) {
            const auto samples = SampleSet::prefix(stream, s.n_values[i], d);
            results[rep][i] = detail::run_cell(ws, id, samples, want_gap);
        }
    });

    std::vector<std::vector<double>> err(cells, std::vector<double>(s.replications));
    std::vector<std::vector<double>> gap(cells, std::vector<double>(s.replications));
    HarnessResult out;
    std::size_t clamps = 0, checks = 0, violations = 0;
    double worst = 0.0;
    const double mass_tol = d == 1 ? 1e-6 : 1e-4;
    for (std::size_t rep = 0; rep < s.replications; ++rep) {
        for (std::size_t i = 0; i < cells; ++i) {
            const auto& c = results[rep][i];
            err[i][rep] = c.error;
            gap[i][rep] = c.gap;
            clamps += c.clamps;
            if (c.mass_checked) {
                ++checks;
                worst = std::max(worst, c.mass_deviation);
                if (!(c.mass_deviation <= mass_tol)) ++violations;
            }
        }
    }
    out.rate = detail::make_report(s, id, "sup_error", std::move(err));
    out.rate.clamp_events = clamps;
    out.rate.mass_checks = checks;
    out.rate.mass_violations = violations;
    out.rate.worst_mass_deviation = worst;
    if (want_gap) {
        out.gap = detail::make_report(s, id, "gap", std::move(gap));
        out.gap->clamp_events = clamps;
    }
    return out;
}

inline RateReport rate_experiment(const ExperimentSetup& s, EstimatorId id) { return run_harness(s, id, false).rate; }

/// Sup over the full grid of |real - ideal| (McKay in h4 mode, h6 estimator in h6 mode).
inline RateReport gap_experiment(const ExperimentSetup& s) {
    const EstimatorId id = s.mode == Mode::h4 ? EstimatorId::mckay_real : EstimatorId::jkh_real;
    ExperimentSetup quiet = s;
    quiet.check_mass = false;
    return *run_harness(quiet, id, true).gap;
}

/// Fraction of replications whose estimated region lies inside the oracle one.
struct ContainmentResult {
    std::size_t replications = 0;
    std::size_t contained = 0;
    double fraction() const { return replications ? static_cast<double>(contained) / replications : 0.0; }
};

inline ContainmentResult containment_experiment(const ExperimentSetup& s, std::size_t n) {
    require(s.density != nullptr, ErrorKind::invalid_argument, "experiment has no density");
    const DensityModel& f = *s.density;
    const int d = f.dim;
    auto kernel = RadialKernel::polynomial(s.profile_coeffs, s.support_T, d);
    const EvalGrid grid = region_grid(f, s.r, s.grid_points);
    const Region oracle = build_region(f, s.r, s.clip, grid);
    const auto sched = schedule_for(n, d, s.mode);
    std::vector<char> ok(s.replications, 0);
    detail::parallel_for(s.replications, s.workers, [&](std::size_t rep) {
        const SampleSet samples(f.draw(n, derive_seed(s.seed, 0xC0DE, rep)), d);
        const auto pilot = classical_kde(samples, kernel, sched.h1, grid);
        ok[rep] = region_contained(build_region(pilot, s.r, s.clip), oracle) ? 1 : 0;
    });
    ContainmentResult res;
    res.replications = s.replications;
    res.contained = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    return res;
}

} // namespace vbkde
