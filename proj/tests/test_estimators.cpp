#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "vbkde/density.hpp"
#include "vbkde/estimators.hpp"

using namespace vbkde;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * kPi); }

// Hand-normalized (1 - |x|^2)^3 kernels: 35/32 on the line, 4/pi in the plane.
double k_line(double u) { return std::abs(u) >= 1 ? 0.0 : 35.0 / 32.0 * std::pow(1 - u * u, 3); }
double k_plane(double r2) { return r2 >= 1 ? 0.0 : 4.0 / kPi * std::pow(1 - r2, 3); }

double p_quintic(double t) {
    if (t <= 0) return 1.0;
    if (t >= 2) return t;
    const double s = t - 2;
    return 1 + std::pow(t, 6) / 64 * (1 - 2 * s + 2.25 * s * s - 1.75 * s * s * s + 0.875 * s * s * s * s);
}

double alpha_of(double f, double c = 0.1) { return c * std::sqrt(p_quintic(f / (c * c))); }

// (1/(n h)) sum_i s_i K((t - X_i) s_i / h) in a plain loop over unsorted data.
double oracle_1d(const std::vector<double>& xs, const std::vector<double>& s, double h, double t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += s[i] * k_line((t - xs[i]) * s[i] / h);
    return acc / (xs.size() * h);
}

double oracle_2d(const std::vector<double>& xs, const std::vector<double>& s, double h, double tx, double ty) {
    const std::size_t n = xs.size() / 2;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = tx - xs[2 * i], dy = ty - xs[2 * i + 1];
        acc += s[i] * s[i] * k_plane((dx * dx + dy * dy) * s[i] * s[i] / (h * h));
    }
    return acc / (n * h * h);
}

// Fourth-order kernel derivatives written out by hand.
struct GDerivs {
    double A, B;
    double w(double z) const { return std::pow(1 - z * z, 4); }
    double w1(double z) const { return -8 * z * std::pow(1 - z * z, 3); }
    double w2(double z) const { return -8 * std::pow(1 - z * z, 3) + 48 * z * z * std::pow(1 - z * z, 2); }
    double d1(double z) const { return std::abs(z) >= 1 ? 0.0 : 2 * B * z * w(z) + (A + B * z * z) * w1(z); }
    double d2(double z) const {
        return std::abs(z) >= 1 ? 0.0 : 2 * B * w(z) + 4 * B * z * w1(z) + (A + B * z * z) * w2(z);
    }
};

std::vector<double> draw_normal(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

EvalGrid tensor2(double lo, double hi, std::size_t points) {
    const double a[2] = {lo, lo}, b[2] = {hi, hi};
    return EvalGrid::tensor(a, b, points);
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::construction;
}

} // namespace

TEST_CASE("bandwidth schedules follow the stated exponents") {
    const double base = std::log(1000.0) / 1000.0;
    const auto h4 = schedule_for(1000, 1, Mode::h4);
    CHECK(h4.h1 == Approx(std::pow(base, 0.2)).epsilon(1e-15));
    CHECK(h4.h2 == Approx(std::pow(base, 1.0 / 9.0)).epsilon(1e-15));
    CHECK_FALSE(h4.h3.has_value());
    const auto h4d2 = schedule_for(1000, 2, Mode::h4);
    CHECK(h4d2.h1 == Approx(std::pow(base, 1.0 / 6.0)).epsilon(1e-15));
    CHECK(h4d2.h2 == Approx(std::pow(base, 0.1)).epsilon(1e-15));
    const auto h6 = schedule_for(1000, 1, Mode::h6);
    CHECK(h6.h1 == Approx(std::pow(base, 0.2)).epsilon(1e-15));
    CHECK(h6.h2 == Approx(std::pow(base, 1.0 / 13.0)).epsilon(1e-15));
    CHECK(*h6.h3 == Approx(std::pow(base, 1.0 / 11.0)).epsilon(1e-15));
    CHECK(*h6.h4 == h6.h2);
    CHECK(kind_of([] { schedule_for(1, 1, Mode::h4); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([] { schedule_for(100, 2, Mode::h6); }) == ErrorKind::unsupported);
}

TEST_CASE("classical estimator matches a brute-force loop") {
    const auto xs = draw_normal(150, 1);
    const SampleSet s(xs, 1);
    const auto k = make_default_profile(1);
    const auto grid = EvalGrid::uniform_1d(-3, 3, 41);
    const double h = 0.45;
    const auto f = classical_kde(s, k, h, grid);
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(f.values[q] == Approx(oracle_1d(xs, ones(xs.size()), h, grid.point(q)[0])).margin(1e-14));
    CHECK(f.estimator == EstimatorId::classical);

    const auto xy = draw_normal(240, 2);
    const SampleSet s2(xy, 2);
    const auto k2 = make_default_profile(2);
    const auto g2 = tensor2(-2, 2, 9);
    const auto f2 = classical_kde(s2, k2, 0.7, g2);
    for (std::size_t q = 0; q < g2.size(); ++q) {
        const auto t = g2.point(q);
        CHECK(f2.values[q] == Approx(oracle_2d(xy, ones(120), 0.7, t[0], t[1])).margin(1e-14));
    }
}

TEST_CASE("ideal and real clipped estimators match brute-force loops") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const auto xs = draw_normal(180, 3);
    const SampleSet s(xs, 1);
    const auto k = make_default_profile(1);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto grid = EvalGrid::uniform_1d(-4, 4, 33);
    const auto sched = schedule_for(xs.size(), 1, Mode::h4);

    std::vector<double> ideal_scale(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ideal_scale[i] = alpha_of(phi(xs[i]));
    const auto ideal = ideal_mckay(s, k, sched.h2, clip, gauss, grid);
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(ideal.values[q] == Approx(oracle_1d(xs, ideal_scale, sched.h2, grid.point(q)[0])).margin(1e-14));

    std::vector<double> pilot_scale(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) pilot_scale[i] = alpha_of(oracle_1d(xs, ones(xs.size()), sched.h1, xs[i]));
    const auto real = real_mckay(s, k, sched, clip, grid);
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(real.values[q] == Approx(oracle_1d(xs, pilot_scale, sched.h2, grid.point(q)[0])).margin(1e-13));
    CHECK(real.meta.min_scale >= clip.c());
}

TEST_CASE("square-root-law estimators match brute-force loops") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const auto xs = draw_normal(120, 4);
    const SampleSet s(xs, 1);
    const auto k = make_default_profile(1);
    const auto grid = EvalGrid::uniform_1d(-3.5, 3.5, 29);
    const double h = 0.5;

    const auto ab = ideal_abramson(s, k, h, gauss, grid);
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double t = grid.point(q)[0];
        double acc = 0.0;
        for (double x : xs) {
            const double sc = std::sqrt(std::max(phi(x), phi(t) / 10));
            acc += sc * k_line((t - x) * sc / h);
        }
        CHECK(ab.values[q] == Approx(acc / (xs.size() * h)).margin(1e-14));
    }

    const double B = 1.3;
    const auto hhm = ideal_hhm(s, k, h, B, gauss, grid);
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double t = grid.point(q)[0];
        double acc = 0.0;
        for (double x : xs) {
            if (std::abs(t - x) >= h * B) continue;
            const double sc = std::sqrt(phi(x));
            acc += sc * k_line((t - x) * sc / h);
        }
        CHECK(hhm.values[q] == Approx(acc / (xs.size() * h)).margin(1e-14));
    }
}

TEST_CASE("h6 estimators match brute-force loops") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const auto xs = draw_normal(200, 5);
    const SampleSet s(xs, 1);
    const auto k = make_default_profile(1);
    const auto G = make_fourth_order_kernel();
    const auto tau = moments(k, 4);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto grid = EvalGrid::uniform_1d(-3, 3, 25);
    const double coef = (1.0 / 33.0) / (24.0 * (1.0 / 9.0));

    const double h = 0.2;
    const auto ideal = ideal_jkh(s, k, h, clip, beta_from_density(gauss, tau), grid);
    std::vector<double> sc(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double x = xs[i], f = phi(x), a = alpha_of(f);
        const double beta = coef * ((x * x - 1) * f * f - 2 * x * x * f * f) / std::pow(a, 6);
        sc[i] = a / (1 + h * h * beta);
    }
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(ideal.values[q] == Approx(oracle_1d(xs, sc, h, grid.point(q)[0])).margin(1e-13));

    const auto sched = schedule_for(xs.size(), 1, Mode::h6);
    const GDerivs gd{G.A(), G.B()};
    const double n = xs.size(), h3 = *sched.h3, h4 = *sched.h4;
    std::vector<double> fhat(xs.size()), d1(xs.size()), d2(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        fhat[i] = oracle_1d(xs, ones(xs.size()), sched.h1, xs[i]);
        for (double x : xs) {
            d1[i] += gd.d1((xs[i] - x) / h3);
            d2[i] += gd.d2((xs[i] - x) / h4);
        }
        d1[i] /= n * h3 * h3;
        d2[i] /= n * h4 * h4 * h4;
    }
    auto real_oracle = [&](double delta, std::size_t& clamps) {
        double amax = 0.0;
        for (double f : fhat) amax = std::max(amax, alpha_of(f));
        std::vector<double> g(xs.size());
        clamps = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double a = alpha_of(fhat[i]);
            const double beta = coef * (d2[i] * fhat[i] - 2 * d1[i] * d1[i]) / std::pow(a, 6);
            const double den = 1 + delta * delta * beta;
            double v = den > 0 ? a / den : 2 * amax;
            if (!(den > 0) || v < 0.05 || v > 2 * amax) {
                ++clamps;
                v = std::clamp(v, 0.05, 2 * amax);
            }
            g[i] = v;
        }
        return g;
    };
    std::size_t clamps = 0;
    const auto real_scale = real_oracle(sched.h2, clamps);
    const auto real = real_jkh(s, k, G, sched, clip, grid);
    CHECK(real.meta.clamp_count == clamps);
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(real.values[q] == Approx(oracle_1d(xs, real_scale, sched.h2, grid.point(q)[0])).margin(1e-12));

    // With no correction bandwidth the scale collapses to alpha(fhat).
    const auto flat = real_jkh(s, k, G, sched, clip, grid, {}, 0.0);
    std::vector<double> plain(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) plain[i] = alpha_of(fhat[i]);
    for (std::size_t q = 0; q < grid.size(); ++q)
        CHECK(flat.values[q] == Approx(oracle_1d(xs, plain, sched.h2, grid.point(q)[0])).margin(1e-13));

    const auto df1 = deriv_field(s, G, h3, 1, grid);
    for (std::size_t q = 0; q < grid.size(); ++q) {
        double acc = 0.0;
        for (double x : xs) acc += gd.d1((grid.point(q)[0] - x) / h3);
        CHECK(df1.values[q] == Approx(acc / (n * h3 * h3)).margin(1e-12));
    }
}

TEST_CASE("bucketed evaluation equals the naive double loop") {
    DensityCatalog cat;
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 1 + trial % 2;
        const std::size_t n = 20 + rng() % 181;
        const auto xs = draw_normal(n * d, rng(), 1.0 + 0.1 * (trial % 5));
        const SampleSet s(xs, d);
        const auto k = make_default_profile(d);
        const auto clip = ClippingSpec::mckay_quintic(0.1);
        const auto grid = d == 1 ? EvalGrid::uniform_1d(-3.5, 3.5, 71) : tensor2(-3, 3, 15);
        const auto sched = schedule_for(n, d, Mode::h4);
        const auto& truth = cat.get(d == 1 ? "gauss1" : "gauss2");
        const EvalOptions naive{Strategy::naive, 1}, fast{Strategy::bucketed, 1};
        auto same = [](const EstimateField& a, const EstimateField& b) {
            for (std::size_t q = 0; q < a.values.size(); ++q) CHECK(std::abs(a.values[q] - b.values[q]) <= 1e-12);
        };
        same(classical_kde(s, k, sched.h1, grid, naive), classical_kde(s, k, sched.h1, grid, fast));
        same(ideal_mckay(s, k, sched.h2, clip, truth, grid, naive), ideal_mckay(s, k, sched.h2, clip, truth, grid, fast));
        same(real_mckay(s, k, sched, clip, grid, naive), real_mckay(s, k, sched, clip, grid, fast));
        same(ideal_abramson(s, k, sched.h2, truth, grid, naive), ideal_abramson(s, k, sched.h2, truth, grid, fast));
        if (d == 1) {
            const auto G = make_fourth_order_kernel();
            const auto s6 = schedule_for(n, 1, Mode::h6);
            same(real_jkh(s, k, G, s6, clip, grid, naive), real_jkh(s, k, G, s6, clip, grid, fast));
            same(ideal_hhm(s, k, sched.h2, 2.0, truth, grid, naive), ideal_hhm(s, k, sched.h2, 2.0, truth, grid, fast));
        }
    }
}

TEST_CASE("outputs are bitwise invariant to sample order and worker count") {
    auto xs = draw_normal(500, 6);
    const auto k = make_default_profile(1);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto grid = EvalGrid::uniform_1d(-3, 3, 101);
    const auto sched = schedule_for(xs.size(), 1, Mode::h4);
    const auto base = real_mckay(SampleSet(xs, 1), k, sched, clip, grid);
    std::mt19937_64 rng(8);
    std::shuffle(xs.begin(), xs.end(), rng);
    const auto shuffled = real_mckay(SampleSet(xs, 1), k, sched, clip, grid);
    const auto threaded = real_mckay(SampleSet(xs, 1), k, sched, clip, grid, {Strategy::bucketed, 4});
    CHECK(base.values == shuffled.values);
    CHECK(base.values == threaded.values);

    auto xy = draw_normal(600, 7);
    const auto k2 = make_default_profile(2);
    const auto g2 = tensor2(-2, 2, 11);
    const auto s2 = schedule_for(300, 2, Mode::h4);
    const auto a = real_mckay(SampleSet(xy, 2), k2, s2, clip, g2);
    // Shuffle whole points, not coordinates.
    std::vector<std::size_t> order(300);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> permuted;
    for (auto i : order) permuted.insert(permuted.end(), {xy[2 * i], xy[2 * i + 1]});
    const auto b = real_mckay(SampleSet(permuted, 2), k2, s2, clip, g2, {Strategy::bucketed, 3});
    CHECK(a.values == b.values);
}

TEST_CASE("far samples do not influence the ideal estimator") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    auto xs = draw_normal(200, 9);
    const auto k = make_default_profile(1);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const double h = 0.3, t = -0.5;
    const EvalGrid grid({t}, 1);
    // Every sample beyond h sqrt(T) / c from t is outside all supports.
    xs.push_back(t + h / clip.c() * 1.01);
    const auto with = ideal_mckay(SampleSet(xs, 1), k, h, clip, gauss, grid);
    xs.pop_back();
    const auto without = ideal_mckay(SampleSet(xs, 1), k, h, clip, gauss, grid);
    CHECK(with.values[0] * 201 == Approx(without.values[0] * 200).epsilon(1e-14));
}

TEST_CASE("density estimators integrate to one and are nonnegative") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const auto k = make_default_profile(1);
    const auto G = make_fourth_order_kernel();
    const auto tau = moments(k, 4);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    for (std::size_t n : {100, 1000}) {
        const SampleSet s(draw_normal(n, 10 + n), 1);
        const auto s4 = schedule_for(n, 1, Mode::h4);
        const auto s6 = schedule_for(n, 1, Mode::h6);
        std::vector<std::pair<EstimateField, double>> fields;
        auto grid_for = [&](double h, double min_scale) { return padded_grid(s, h, 1.0, min_scale, 6001); };
        fields.emplace_back(classical_kde(s, k, s4.h1, grid_for(s4.h1, 1.0)), 1.0);
        fields.emplace_back(ideal_mckay(s, k, s4.h2, clip, gauss, grid_for(s4.h2, clip.c())), clip.c());
        fields.emplace_back(real_mckay(s, k, s4, clip, grid_for(s4.h2, clip.c())), clip.c());
        fields.emplace_back(ideal_jkh(s, k, 0.1, clip, beta_from_density(gauss, tau), grid_for(0.1, clip.c() / 1.5)),
                            clip.c() / 1.5);
        fields.emplace_back(real_jkh(s, k, G, s6, clip, grid_for(s6.h2, clip.c() / 2)), clip.c() / 2);
        for (const auto& [f, floor] : fields) {
            INFO(to_string(f.estimator) << " n=" << n);
            CHECK(field_integral(f) == Approx(1.0).margin(1e-6));
            CHECK(*std::min_element(f.values.begin(), f.values.end()) >= 0.0);
        }
    }
    const SampleSet s2(draw_normal(800, 11), 2);
    const auto k2 = make_default_profile(2);
    const auto sched = schedule_for(400, 2, Mode::h4);
    const auto f2 = real_mckay(s2, k2, sched, clip, padded_grid(s2, sched.h2, 1.0, clip.c(), 301));
    CHECK(field_integral(f2) == Approx(1.0).margin(1e-4));
}

TEST_CASE("gap between fields is the sup of the pointwise difference") {
    const auto grid = EvalGrid::uniform_1d(0, 1, 5);
    EstimateField a{grid, {0.1, 0.2, 0.3, 0.4, 0.5}, EstimatorId::mckay_ideal, {}};
    CHECK(ideal_real_gap(a, a) == 0.0);
    auto b = a;
    b.values[2] += 0.5;
    CHECK(ideal_real_gap(a, b) == Approx(0.5).epsilon(1e-15));
    EstimateField c{EvalGrid::uniform_1d(0, 2, 5), a.values, EstimatorId::mckay_real, {}};
    CHECK(kind_of([&] { ideal_real_gap(a, c); }) == ErrorKind::grid_mismatch);
}

TEST_CASE("field quadrature is exact for low-degree polynomials") {
    const auto grid = EvalGrid::uniform_1d(-1, 2, 31);
    EstimateField f{grid, {}, EstimatorId::classical, {}};
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double x = grid.point(q)[0];
        f.values.push_back(x * x * x - x + 2);
    }
    // int_{-1}^{2} x^3 - x + 2 dx = 15/4 - 3/2 + 6.
    CHECK(field_integral(f) == Approx(8.25).epsilon(1e-13));
}

TEST_CASE("invalid estimator inputs raise typed errors") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const SampleSet s(draw_normal(50, 12), 1);
    const auto k = make_default_profile(1);
    const auto grid = EvalGrid::uniform_1d(-1, 1, 5);
    CHECK(kind_of([&] { classical_kde(s, k, 0.0, grid); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([&] { classical_kde(s, make_default_profile(2), 0.3, grid); }) == ErrorKind::invalid_dimension);
    CHECK(kind_of([&] {
              real_mckay(s, k, schedule_for(50, 1, Mode::h6), ClippingSpec::mckay_quintic(0.1), grid);
          }) == ErrorKind::unsupported);
    // A sample and an evaluation point deep in the tail where f underflows to 0.
    const SampleSet tail(std::vector<double>{0.0, 45.0}, 1);
    CHECK(kind_of([&] { ideal_abramson(tail, k, 0.3, gauss, EvalGrid({45.0}, 1)); }) ==
          ErrorKind::zero_scale);
    CHECK(kind_of([&] { SampleSet(std::vector<double>{0.0, std::nan("")}, 1); }) == ErrorKind::invalid_argument);
}

TEST_CASE("clamped ideal h6 estimator reduces to the plain one when nothing clamps") {
    DensityCatalog cat;
    const auto& gauss = cat.get("gauss1");
    const auto xs = draw_normal(300, 13);
    const SampleSet s(xs, 1);
    const auto k = make_default_profile(1);
    const auto G = make_fourth_order_kernel();
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto grid = EvalGrid::uniform_1d(-3, 3, 61);
    auto sched = schedule_for(300, 1, Mode::h6);
    sched.h2 = 0.1;
    const auto plain = ideal_jkh(s, k, 0.1, clip, beta_from_density(gauss, moments(k, 4)), grid);
    const auto clamped = ideal_jkh_clamped(s, k, G, sched, clip, gauss, grid);
    CHECK(clamped.meta.clamp_count == 0);
    for (std::size_t q = 0; q < grid.size(); ++q) CHECK(clamped.values[q] == Approx(plain.values[q]).margin(1e-14));
    // At the scheduled h2 the plain version refuses, the clamped one does not.
    const auto full = schedule_for(300, 1, Mode::h6);
    CHECK(kind_of([&] { ideal_jkh(s, k, full.h2, clip, beta_from_density(gauss, moments(k, 4)), grid); }) ==
          ErrorKind::bandwidth_too_large);
    CHECK(ideal_jkh_clamped(s, k, G, full, clip, gauss, grid).meta.clamp_count > 0);
}
