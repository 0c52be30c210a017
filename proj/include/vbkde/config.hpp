#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vbkde/clipping.hpp"
#include "vbkde/density.hpp"
#include "vbkde/error.hpp"
#include "vbkde/estimators.hpp"
#include "vbkde/kernels.hpp"

namespace vbkde {

/// Everything a run needs, read from a JSON document. Omitted keys take the
/// defaults below; `to_json` always writes every key, so a written config
/// reads back to an identical value.
struct ExperimentConfig {
    std::string estimator = "mckay_real";
    std::string density = "gauss1";
    Mode mode = Mode::h4;

    std::vector<double> kernel_coeffs{1.0, -3.0, 3.0, -1.0};
    double kernel_T = 1.0;
    std::string fourth_order = "default";

    double clip_c = 0.1;
    double clip_t0 = 2.0;
    std::optional<ClipSpline> clip_spline;

    std::size_t n = 1000;
    std::vector<std::size_t> n_values{4096, 8192, 16384, 32768, 65536, 131072, 262144};
    std::size_t replications = 20;
    std::uint64_t seed = 0;
    double region_r = 0.05;
    /// Points per axis; 0 picks 1024 (d = 1) or 128 (d = 2).
    std::size_t grid_points = 0;
    std::optional<double> hhm_B;

    std::vector<double> bias_points{0.3};
    double bias_h_lo = 0.05;
    double bias_h_hi = 0.4;
    std::size_t bias_h_count = 8;

    std::string output_prefix;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline bool operator==(const ClipSpline& a, const ClipSpline& b) { return a.breaks == b.breaks && a.coeffs == b.coeffs; }

namespace config {

using json = nlohmann::json;

inline json to_json(const ExperimentConfig& c) {
    json clip = {{"c", c.clip_c}, {"t0", c.clip_t0}};
    if (c.clip_spline)
        clip["p"] = {{"spline", {{"breaks", c.clip_spline->breaks}, {"coeffs", c.clip_spline->coeffs}}}};
    else
        clip["p"] = "mckay-quintic";
    json j = {{"estimator", c.estimator},
              {"density", c.density},
              {"mode", std::string(to_string(c.mode))},
              {"kernel", {{"profile", "poly"}, {"coeffs", c.kernel_coeffs}, {"T", c.kernel_T}}},
              {"fourth_order", c.fourth_order},
              {"clip", clip},
              {"n", c.n},
              {"n_values", c.n_values},
              {"replications", c.replications},
              {"seed", c.seed},
              {"region", {{"r", c.region_r}}},
              {"grid", {{"points", c.grid_points}}},
              {"bias", {{"points", c.bias_points}, {"h_lo", c.bias_h_lo}, {"h_hi", c.bias_h_hi}, {"h_count", c.bias_h_count}}},
              {"output", {{"prefix", c.output_prefix}}}};
    j["hhm"] = c.hhm_B ? json{{"B", *c.hhm_B}} : json{{"B", nullptr}};
    return j;
}

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        require(ok, ErrorKind::invalid_argument, "unknown config key '" + where + k + "'");
    }
}

template <class T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

/// Parses and validates shape and ranges; ids are resolved later, against a catalog.
inline ExperimentConfig from_json(const json& j) {
    require(j.is_object(), ErrorKind::invalid_argument, "config must be a JSON object");
    detail::reject_unknown(j,
                           {"estimator", "density", "mode", "kernel", "fourth_order", "clip", "n", "n_values",
                            "replications", "seed", "region", "grid", "bias", "output", "hhm"},
                           "");
    ExperimentConfig c;
    try {
        detail::take(j, "estimator", c.estimator);
        detail::take(j, "density", c.density);
        if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
        if (j.contains("kernel")) {
            const auto& k = j.at("kernel");
            detail::reject_unknown(k, {"profile", "coeffs", "T"}, "kernel.");
            const std::string profile = k.value("profile", std::string("poly"));
            require(profile == "poly", ErrorKind::invalid_argument,
                    "kernel.profile must be \"poly\"; callable profiles are not serializable");
            detail::take(k, "coeffs", c.kernel_coeffs);
            detail::take(k, "T", c.kernel_T);
        }
        detail::take(j, "fourth_order", c.fourth_order);
        require(c.fourth_order == "default", ErrorKind::invalid_argument, "fourth_order must be \"default\"");
        if (j.contains("clip")) {
            const auto& k = j.at("clip");
            detail::reject_unknown(k, {"c", "t0", "p"}, "clip.");
            detail::take(k, "c", c.clip_c);
            detail::take(k, "t0", c.clip_t0);
            if (k.contains("p")) {
                const auto& p = k.at("p");
                if (p.is_string()) {
                    require(p.get<std::string>() == "mckay-quintic", ErrorKind::invalid_argument,
                            "clip.p must be \"mckay-quintic\" or {\"spline\": ...}");
                } else {
                    const auto& s = p.at("spline");
                    ClipSpline sp;
                    sp.breaks = s.at("breaks").get<std::vector<double>>();
                    sp.coeffs = s.at("coeffs").get<std::vector<std::vector<double>>>();
                    c.clip_spline = std::move(sp);
                }
            }
        }
        detail::take(j, "n", c.n);
        detail::take(j, "n_values", c.n_values);
        detail::take(j, "replications", c.replications);
        detail::take(j, "seed", c.seed);
        if (j.contains("region")) {
            detail::reject_unknown(j.at("region"), {"r"}, "region.");
            detail::take(j.at("region"), "r", c.region_r);
        }
        if (j.contains("grid")) {
            detail::reject_unknown(j.at("grid"), {"points"}, "grid.");
            detail::take(j.at("grid"), "points", c.grid_points);
        }
        if (j.contains("bias")) {
            const auto& b = j.at("bias");
            detail::reject_unknown(b, {"points", "h_lo", "h_hi", "h_count"}, "bias.");
            detail::take(b, "points", c.bias_points);
            detail::take(b, "h_lo", c.bias_h_lo);
            detail::take(b, "h_hi", c.bias_h_hi);
            detail::take(b, "h_count", c.bias_h_count);
        }
        if (j.contains("output")) {
            detail::reject_unknown(j.at("output"), {"prefix"}, "output.");
            detail::take(j.at("output"), "prefix", c.output_prefix);
        }
        if (j.contains("hhm")) {
            detail::reject_unknown(j.at("hhm"), {"B"}, "hhm.");
            const auto& b = j.at("hhm").at("B");
            if (!b.is_null()) c.hhm_B = b.get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed config: ") + e.what());
    }
    parse_estimator(c.estimator);
    require(c.kernel_T > 0.0, ErrorKind::invalid_argument, "kernel.T must be positive");
    require(c.n >= 2, ErrorKind::invalid_argument, "n must be >= 2");
    require(c.replications >= 1, ErrorKind::invalid_argument, "replications must be >= 1");
    require(c.bias_h_count >= 3, ErrorKind::invalid_argument, "bias.h_count must be >= 3");
    return c;
}

inline ExperimentConfig parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

inline std::string dump(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ClippingSpec clip_of(const ExperimentConfig& c) {
    if (c.clip_spline) return ClippingSpec::spline(c.clip_c, c.clip_t0, *c.clip_spline);
    require(c.clip_t0 == 2.0, ErrorKind::invalid_argument, "the mckay-quintic clipping function has t0 = 2");
    return ClippingSpec::mckay_quintic(c.clip_c);
}

inline std::size_t grid_points_of(const ExperimentConfig& c, int d) {
    if (c.grid_points) return c.grid_points;
    return d == 1 ? 1024 : 128;
}

} // namespace config
} // namespace vbkde
