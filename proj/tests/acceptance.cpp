// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include "vbkde/cli/app.hpp"
#include "vbkde/vbkde.hpp"

using namespace vbkde;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds) {
    std::printf("[%s] %2d  %s  (%.1f s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

void info(const std::string& s) {
    std::printf("          %s\n", s.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... xs) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, xs...);
    return buf;
}

template <class F>
void criterion(int id, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string what;
    try {
        std::tie(pass, what) = body();
    } catch (const std::exception& e) {
        what = std::string("exception: ") + e.what();
    }
    report(id, pass, what, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

template <class F>
double simpson(F&& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

unsigned workers() {
    if (const char* w = std::getenv("VBKDE_ACCEPT_WORKERS")) return static_cast<unsigned>(std::max(1, std::atoi(w)));
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Every probability-density estimator that runs in dimension d, at size n.
std::vector<EstimateField> density_fields(const SampleSet& s, const DensityModel& truth, std::size_t points) {
    const int d = s.dim();
    const auto k = make_default_profile(d);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto s4 = schedule_for(s.size(), d, Mode::h4);
    const EvalGrid grid = padded_grid(s, s4.h2, 1.0, clip.c(), points);
    std::vector<EstimateField> out;
    out.push_back(classical_kde(s, k, s4.h1, grid));
    out.push_back(ideal_mckay(s, k, s4.h2, clip, truth, grid));
    out.push_back(real_mckay(s, k, s4, clip, grid));
    out.push_back(ideal_abramson(s, k, s4.h2, truth, grid));
    if (d == 1) {
        const auto G = make_fourth_order_kernel();
        const auto s6 = schedule_for(s.size(), 1, Mode::h6);
        out.push_back(ideal_hhm(s, k, s4.h2, 1.0 / clip.c(), truth, grid));
        out.push_back(ideal_jkh(s, k, 0.1, clip, beta_from_density(truth, moments(k, 4)), grid));
        out.push_back(ideal_jkh_clamped(s, k, G, s6, clip, truth, grid));
        out.push_back(real_jkh(s, k, G, s6, clip, grid));
    }
    return out;
}

/// Padded-grid quadrature of a plug-in estimate, with a grid fine enough for
/// its narrowest bump.
double mass(const SampleSet& s, const std::function<EstimateField(const EvalGrid&)>& eval, double h,
            double min_scale, double max_scale) {
    const int d = s.dim();
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (double v : s.point(i)) lo = std::min(lo, v), hi = std::max(hi, v);
    const double span = hi - lo + 2 * h / min_scale;
    const double narrow = h / max_scale;
    const std::size_t per = d == 1 ? std::max<std::size_t>(4001, static_cast<std::size_t>(span / (narrow / 60)) | 1u)
                                   : std::max<std::size_t>(301, static_cast<std::size_t>(span / (narrow / 12)) | 1u);
    return field_integral(eval(padded_grid(s, h, 1.0, min_scale, per)));
}

} // namespace

int main() {
    DensityCatalog cat;
    const auto& g1 = cat.get("gauss1");
    const auto& g2 = cat.get("gauss2");
    const auto k1 = make_default_profile(1);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto G = make_fourth_order_kernel();
    const unsigned W = workers();
    std::printf("vbkde acceptance, %u worker(s)\n", W);

    criterion(1, [&] {
        double worst1 = 0.0, worst2 = 0.0;
        std::size_t clamps = 0;
        for (std::size_t n : {100, 1000, 10000}) {
            const SampleSet s(g1.draw(n, derive_seed(1, 0xACC1, n)), 1);
            const auto s4 = schedule_for(n, 1, Mode::h4);
            const auto fit = preliminary_fit(s, k1, s4, nullptr);
            double amax = 0.0;
            for (double v : fit.fhat) amax = std::max(amax, clip.alpha(v));
            const auto probe = real_mckay(s, k1, s4, clip, EvalGrid({0.0}, 1), fit);
            const double m1 = mass(s, [&](const EvalGrid& g) { return real_mckay(s, k1, s4, clip, g, fit); }, s4.h2,
                                   probe.meta.min_scale, amax);
            const auto s6 = schedule_for(n, 1, Mode::h6);
            const auto fit6 = preliminary_fit(s, k1, s6, &G);
            const auto probe6 = real_jkh(s, k1, G, s6, clip, EvalGrid({0.0}, 1), fit6);
            std::size_t c = 0;
            const auto scales = jkh_real_scales(fit6, moments(k1, 4), clip, s6.h2, c);
            clamps += c;
            const double m2 = mass(s, [&](const EvalGrid& g) { return real_jkh(s, k1, G, s6, clip, g, fit6); }, s6.h2,
                                   probe6.meta.min_scale, *std::max_element(scales.begin(), scales.end()));
            info(fmt("d=1 n=%zu  mckay_real mass-1 = %.2e  jkh_real mass-1 = %.2e  (jkh clamps %zu)", n, m1 - 1, m2 - 1, c));
            worst1 = std::max({worst1, std::abs(m1 - 1), std::abs(m2 - 1)});

            const SampleSet s2(g2.draw(n, derive_seed(1, 0xACC2, n)), 2);
            const auto k2 = make_default_profile(2);
            const auto t4 = schedule_for(n, 2, Mode::h4);
            const auto fit2 = preliminary_fit(s2, k2, t4, nullptr);
            double amax2 = 0.0;
            for (double v : fit2.fhat) amax2 = std::max(amax2, clip.alpha(v));
            const double zero[2] = {0.0, 0.0};
            const auto probe2 = real_mckay(s2, k2, t4, clip, EvalGrid({zero[0], zero[1]}, 2), fit2);
            const double m3 = mass(s2, [&](const EvalGrid& g) { return real_mckay(s2, k2, t4, clip, g, fit2); }, t4.h2,
                                   probe2.meta.min_scale, amax2);
            info(fmt("d=2 n=%zu  mckay_real mass-1 = %.2e", n, m3 - 1));
            worst2 = std::max(worst2, std::abs(m3 - 1));
        }
        return std::pair{worst1 <= 1e-6 && worst2 <= 1e-4,
                         fmt("integrate to one: max |mass-1| d=1 %.2e (tol 1e-6), d=2 %.2e (tol 1e-4); %zu jkh clamps",
                             worst1, worst2, clamps)};
    });

    criterion(2, [&] {
        double lowest = 1.0;
        std::size_t fields = 0;
        for (std::size_t n : {100, 1000, 10000}) {
            for (const char* id : {"gauss1", "mix1", "gauss2", "iso2"}) {
                const auto& f = cat.get(id);
                const SampleSet s(f.draw(n, derive_seed(2, 0xACC3, n)), f.dim);
                for (const auto& fld : density_fields(s, f, f.dim == 1 ? 2001 : 61)) {
                    lowest = std::min(lowest, *std::min_element(fld.values.begin(), fld.values.end()));
                    ++fields;
                }
            }
        }
        return std::pair{lowest >= 0.0, fmt("nonnegativity: min value %.3g over %zu fields", lowest, fields)};
    });

    criterion(3, [&] {
        const double m1 = simpson([&](double x) { return k1(std::span<const double>(&x, 1)); }, -1, 1, 20000);
        const auto k2 = make_default_profile(2);
        const double m2 = simpson(
            [&](double x) {
                const double w = std::sqrt(std::max(0.0, 1 - x * x));
                return simpson([&](double y) {
                    const double p[2] = {x, y};
                    return k2(std::span<const double>(p, 2));
                }, -w, w, 2000);
            },
            -1, 1, 2000);
        double worst = std::max(std::abs(m1 - 1), std::abs(m2 - 1));
        double gmax = 0.0;
        for (int i = 1; i <= 3; ++i)
            gmax = std::max(gmax, std::abs(simpson([&](double z) { return std::pow(z, i) * G.G(z); }, -1, 1, 20000)));
        const double m4 = simpson([&](double z) { return z * z * z * z * G.G(z); }, -1, 1, 20000);
        const double g0 = simpson([&](double z) { return G.G(z); }, -1, 1, 20000);
        worst = std::max(worst, std::abs(g0 - 1));
        return std::pair{worst <= 1e-8 && gmax <= 1e-8 && std::abs(m4) > 1e-3,
                         fmt("kernel moments: |mass-1| %.1e, max |G moment 1..3| %.1e, G m4 %.6f", worst, gmax, m4)};
    });

    const double t03 = 0.3;
    const std::span<const double> at(&t03, 1);
    const auto hs = log_spaced(0.05, 0.4, 8);
    const auto tau = moments(k1, 4);
    auto sub_slopes = [&](const ScaleModel& sc) {
        for (double top : {0.3, 0.2}) {
            const auto sub = log_spaced(0.05, top, 8);
            info(fmt("h in [0.05, %.2f]: slope %.3f", top, fit_bias_order(g1, k1, sc, at, sub)));
        }
    };

    criterion(4, [&] {
        const auto sc = ScaleModel::mckay(g1, clip);
        const double s = fit_bias_order(g1, k1, sc, at, hs);
        sub_slopes(sc);
        return std::pair{s >= 3.7 && s <= 4.3, fmt("McKay bias order at t=0.3, h in [0.05, 0.4]: slope %.3f in [3.7, 4.3]", s)};
    });

    criterion(5, [&] {
        const auto sc = ScaleModel::jkh(g1, clip, tau);
        const double s = fit_bias_order(g1, k1, sc, at, hs);
        sub_slopes(sc);
        return std::pair{s >= 5.6 && s <= 6.4, fmt("h6 bias order at t=0.3, h in [0.05, 0.4]: slope %.3f in [5.6, 6.4]", s)};
    });

    criterion(6, [&] {
        const double s = fit_bias_order(g1, k1, ScaleModel::constant(1.0), at, hs);
        return std::pair{s >= 1.85 && s <= 2.15, fmt("classical bias order: slope %.3f in [1.85, 2.15]", s)};
    });

    criterion(7, [&] {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 20; ++i) pts.push_back({-2.0 + 4.0 * (i + 0.5) / 20});
        bool inside = true;
        for (const auto& p : pts) inside = inside && g1.pdf1(p[0]) > 0.05;
        const auto b = bias_coefficients(g1, ScaleModel::mckay(g1, clip), k1, pts, 2);
        double worst = 0.0;
        for (double a2 : b.per_delta[1]) worst = std::max(worst, std::abs(a2));
        return std::pair{inside && worst < 1e-6, fmt("a2 vanishing: max |a2| = %.2e at 20 points of the region", worst)};
    });

    ExperimentSetup rate;
    rate.density = &g1;
    rate.n_values = {4096, 8192, 16384, 32768, 65536, 131072, 262144};
    rate.replications = 20;
    rate.seed = 0;
    rate.workers = W;
    std::optional<HarnessResult> harness;
    criterion(8, [&] {
        harness = run_harness(rate, EstimatorId::mckay_real, true);
        const auto& r = harness->rate;
        for (std::size_t i = 0; i < r.n_values.size(); ++i)
            info(fmt("n=%-7zu median %.5f  [q25 %.5f, q75 %.5f]", r.n_values[i], r.median[i], r.q25[i], r.q75[i]));
        info(fmt("mass checks %zu, violations %zu, worst |mass-1| %.2e", r.mass_checks, r.mass_violations,
                 r.worst_mass_deviation));
        // Deterministic part: sup over the region of the ideal estimator's bias at the scheduled h2.
        const auto grid = region_grid(g1, rate.r, 1024);
        const auto reg = build_region(g1, rate.r, clip, grid);
        const auto sc = ScaleModel::mckay(g1, clip);
        std::vector<double> lx, ly;
        for (std::size_t n : rate.n_values) {
            const double h = schedule_for(n, 1, Mode::h4).h2;
            double worst = 0.0;
            for (std::size_t q = 0; q < grid.size(); q += 8) {
                if (!reg.mask[q]) continue;
                const double t = grid.point(q)[0];
                worst = std::max(worst, std::abs(expected_ideal(g1, k1, h, sc, std::span<const double>(&t, 1)) - g1.pdf1(t)));
            }
            lx.push_back(io::log_rate_abscissa(n));
            ly.push_back(std::log(worst));
        }
        info(fmt("sup bias of the ideal estimator at h2: %.5f (n=2^12) .. %.5f (n=2^18), slope %.3f", std::exp(ly.front()),
                 std::exp(ly.back()), detail::fit_line(lx, ly).slope));
        return std::pair{r.slope >= 0.30 && r.slope <= 0.60 && r.mass_violations == 0,
                         fmt("sup-norm rate, McKay d=1: slope %.3f in [0.30, 0.60] (target %.3f)", r.slope, r.target_slope)};
    });

    criterion(9, [&] {
        if (!harness) return std::pair{false, std::string("gap: harness did not run")};
        const auto& g = *harness->gap;
        std::size_t ok = 0;
        const std::size_t pairs = g.median.size() - 1;
        for (std::size_t i = 0; i + 1 < g.median.size(); ++i) ok += g.median[i + 1] <= g.median[i];
        for (std::size_t i = 0; i < g.n_values.size(); ++i) info(fmt("n=%-7zu gap median %.6f", g.n_values[i], g.median[i]));
        return std::pair{static_cast<double>(ok) >= 0.9 * static_cast<double>(pairs),
                         fmt("real-vs-ideal gap: %zu of %zu adjacent medians non-increasing (need 90%%)", ok, pairs)};
    });

    criterion(10, [&] {
        ExperimentSetup s = rate;
        s.replications = 50;
        const auto c = containment_experiment(s, 65536);
        return std::pair{c.fraction() >= 0.95,
                         fmt("region containment at n=2^16: %zu / %zu replications", c.contained, c.replications)};
    });

    criterion(11, [&] {
        std::mt19937_64 rng(11);
        double worst = 0.0;
        std::size_t comparisons = 0;
        for (int inst = 0; inst < 100; ++inst) {
            const int d = 1 + inst % 2;
            const std::size_t n = 2 + rng() % 199;
            const auto& f = cat.get(d == 1 ? (inst % 4 ? "gauss1" : "mix1") : (inst % 4 == 1 ? "gauss2" : "iso2"));
            const SampleSet s(f.draw(n, rng()), d);
            const auto k = make_default_profile(d);
            const auto s4 = schedule_for(n, d, Mode::h4);
            const EvalGrid grid = d == 1 ? EvalGrid::uniform_1d(-4, 4, 257) : [] {
                const double lo[2] = {-3.5, -3.5}, hi[2] = {3.5, 3.5};
                return EvalGrid::tensor(lo, hi, 33);
            }();
            const EvalOptions naive{Strategy::naive, 1}, fast{Strategy::bucketed, W};
            auto cmp = [&](const EstimateField& a, const EstimateField& b) {
                for (std::size_t q = 0; q < a.values.size(); ++q) worst = std::max(worst, std::abs(a.values[q] - b.values[q]));
                ++comparisons;
            };
            cmp(classical_kde(s, k, s4.h1, grid, naive), classical_kde(s, k, s4.h1, grid, fast));
            cmp(ideal_mckay(s, k, s4.h2, clip, f, grid, naive), ideal_mckay(s, k, s4.h2, clip, f, grid, fast));
            cmp(real_mckay(s, k, s4, clip, grid, naive), real_mckay(s, k, s4, clip, grid, fast));
            cmp(ideal_abramson(s, k, s4.h2, f, grid, naive), ideal_abramson(s, k, s4.h2, f, grid, fast));
            if (d == 1) {
                const auto s6 = schedule_for(n, 1, Mode::h6);
                cmp(real_jkh(s, k, G, s6, clip, grid, naive), real_jkh(s, k, G, s6, clip, grid, fast));
                cmp(ideal_hhm(s, k, s4.h2, 10.0, f, grid, naive), ideal_hhm(s, k, s4.h2, 10.0, f, grid, fast));
            }
        }
        return std::pair{worst <= 1e-12,
                         fmt("bucketed vs naive: max |diff| %.2e over %zu comparisons on 100 instances", worst, comparisons)};
    });

    criterion(12, [&] {
        std::vector<std::pair<std::string, ExperimentConfig>> runs;
        for (const char* est : {"classical", "mckay_ideal", "mckay_real", "abramson_ideal", "hhm_ideal"}) {
            ExperimentConfig c;
            c.estimator = est;
            c.n = 3000;
            c.seed = 12;
            runs.emplace_back("estimate", c);
        }
        ExperimentConfig j;
        j.estimator = "jkh_real";
        j.mode = Mode::h6;
        j.n = 3000;
        runs.emplace_back("estimate", j);
        ExperimentConfig d2;
        d2.density = "iso2";
        d2.n = 2000;
        runs.emplace_back("estimate", d2);
        ExperimentConfig r;
        r.n_values = {1024, 2048, 4096};
        r.replications = 6;
        r.grid_points = 257;
        runs.emplace_back("rates", r);
        ExperimentConfig g = r;
        g.mode = Mode::h6;
        runs.emplace_back("gap", g);
        ExperimentConfig b;
        b.estimator = "jkh_ideal";
        b.mode = Mode::h6;
        b.bias_h_hi = 0.2;
        runs.emplace_back("bias-scan", b);
        std::size_t files = 0, mismatches = 0;
        for (const auto& [cmd, cfg] : runs) {
            for (const char* format : {"csv", "json"}) {
                const auto base = cli::produce({cmd, format, 1}, cfg, cat);
                for (unsigned w : {1u, 3u, std::max(2u, W)}) {
                    const auto again = cli::produce({cmd, format, w}, cfg, cat);
                    if (again.files() != base.files()) ++mismatches;
                }
                files += base.files().size();
            }
        }
        return std::pair{mismatches == 0,
                         fmt("determinism: %zu output files re-produced at 1, 3 and %u workers, %zu mismatches", files,
                             std::max(2u, W), mismatches)};
    });

    std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
