#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vbkde/bias_oracle.hpp"
#include "vbkde/error.hpp"
#include "vbkde/estimators.hpp"
#include "vbkde/experiments.hpp"

namespace vbkde {

inline constexpr const char* kVersion = "0.3.0";

namespace io {

using json = nlohmann::json;

/// Shortest text that reads back to the same double.
inline std::string dec(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string hex(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

inline double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(end != s.c_str() && *end == '\0', ErrorKind::io, "not a number: '" + s + "'");
    return v;
}

inline json hex_array(std::span<const double> v) {
    json out = json::array();
    for (double x : v) out.push_back(hex(x));
    return out;
}

inline std::vector<double> from_hex_array(const json& j) {
    std::vector<double> out;
    for (const auto& s : j) out.push_back(parse_double(s.get<std::string>()));
    return out;
}

/// A set of files written all-or-nothing: each is staged to a temporary
/// sibling, and only renamed into place once every write succeeded.
class FileBatch {
public:
    void add(std::filesystem::path path, std::string content) {
        files_.emplace_back(std::move(path), std::move(content));
    }

    const std::vector<std::pair<std::filesystem::path, std::string>>& files() const { return files_; }

    void commit() const {
        std::vector<std::filesystem::path> staged;
        auto cleanup = [&] {
            std::error_code ec;
            for (const auto& p : staged) std::filesystem::remove(p, ec);
        };
        try {
            for (const auto& [path, content] : files_) {
                if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
                auto tmp = path;
                tmp += ".partial";
                std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
                staged.push_back(tmp);
                os << content;
                os.close();
                if (!os) throw Error(ErrorKind::io, "cannot write " + tmp.string());
            }
            for (std::size_t i = 0; i < files_.size(); ++i) std::filesystem::rename(staged[i], files_[i].first);
        } catch (const std::filesystem::filesystem_error& e) {
            cleanup();
            throw Error(ErrorKind::io, e.what());
        } catch (...) {
            cleanup();
            throw;
        }
    }

private:
    std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline json metadata_json(const FieldMetadata& m) {
    json b = json::object();
    for (const auto& [k, v] : m.bandwidths) b[k] = {{"value", v}, {"hex", hex(v)}};
    return {{"bandwidths", b},
            {"kernel", m.kernel_id},
            {"clip", m.clip_id},
            {"density", m.density_id},
            {"seed", m.seed},
            {"n", m.n},
            {"clamp_count", m.clamp_count},
            {"min_scale", m.min_scale},
            {"min_scale_hex", hex(m.min_scale)}};
}

// ---- EstimateField ---------------------------------------------------------

/// `# key: value` header (version, provenance json), then `x1,..,xd,value`.
inline std::string field_csv(const EstimateField& f, const json& provenance) {
    std::ostringstream os;
    os << "# vbkde " << kVersion << "\n";
    os << "# run: " << provenance.dump() << "\n";
    os << "# estimator: " << to_string(f.estimator) << "\n";
    os << "# metadata: " << metadata_json(f.meta).dump() << "\n";
    const std::size_t d = f.grid.dim();
    for (std::size_t k = 0; k < d; ++k) os << "x" << k + 1 << ",";
    os << "value\n";
    for (std::size_t q = 0; q < f.grid.size(); ++q) {
        const auto t = f.grid.point(q);
        for (double x : t) os << dec(x) << ",";
        os << dec(f.values[q]) << "\n";
    }
    return os.str();
}

inline json field_json(const EstimateField& f, const json& provenance) {
    return {{"vbkde", kVersion},
            {"run", provenance},
            {"estimator", std::string(to_string(f.estimator))},
            {"metadata", metadata_json(f.meta)},
            {"dim", f.grid.dim()},
            {"points", f.grid.flat()},
            {"points_hex", hex_array(f.grid.flat())},
            {"values", f.values},
            {"values_hex", hex_array(f.values)}};
}

/// Grid + values back from either format; the hex twins make JSON exact.
inline EstimateField read_field(const std::string& text) {
    EstimateField f;
    if (!text.empty() && text.front() == '{') {
        const json j = json::parse(text);
        f.estimator = parse_estimator(j.at("estimator").get<std::string>());
        f.grid = EvalGrid(from_hex_array(j.at("points_hex")), j.at("dim").get<int>());
        f.values = from_hex_array(j.at("values_hex"));
        return f;
    }
    std::istringstream is(text);
    std::string line;
    std::vector<double> pts;
    int d = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.rfind("# estimator: ", 0) == 0) f.estimator = parse_estimator(line.substr(13));
            continue;
        }
        if (line.front() == 'x') {
            d = static_cast<int>(std::count(line.begin(), line.end(), ','));
            continue;
        }
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell));
        require(static_cast<int>(row.size()) == d + 1, ErrorKind::io, "ragged field row");
        pts.insert(pts.end(), row.begin(), row.end() - 1);
        f.values.push_back(row.back());
    }
    require(d >= 1, ErrorKind::io, "field file has no column header");
    f.grid = EvalGrid(std::move(pts), d);
    return f;
}

/// The provenance object embedded in an output file.
inline json embedded_run(const std::string& text) {
    if (!text.empty() && text.front() == '{') return json::parse(text).at("run");
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("# run: ", 0) == 0) return json::parse(line.substr(7));
        if (!line.empty() && line.front() != '#') break;
    }
    throw Error(ErrorKind::io, "no embedded run configuration found");
}

// ---- RateReport ------------------------------------------------------------

inline double log_rate_abscissa(std::size_t n) {
    const double x = static_cast<double>(n);
    return std::log(std::log(x) / x);
}

inline json report_json(const RateReport& r, const json& provenance) {
    json per_n = json::array();
    for (std::size_t i = 0; i < r.n_values.size(); ++i) {
        per_n.push_back({{"n", r.n_values[i]},
                         {"median", r.median[i]},
                         {"median_hex", hex(r.median[i])},
                         {"q25", r.q25[i]},
                         {"q75", r.q75[i]},
                         {"errors", r.errors[i]},
                         {"errors_hex", hex_array(r.errors[i])}});
    }
    return {{"vbkde", kVersion},
            {"run", provenance},
            {"estimator", r.estimator},
            {"density", r.density},
            {"quantity", r.quantity},
            {"mode", std::string(to_string(r.mode))},
            {"dim", r.dim},
            {"replications", r.replications},
            {"seed", r.seed},
            {"slope", r.slope},
            {"slope_hex", hex(r.slope)},
            {"intercept", r.intercept},
            {"intercept_hex", hex(r.intercept)},
            {"target_slope", r.target_slope},
            {"clamp_events", r.clamp_events},
            {"mass_checks", r.mass_checks},
            {"mass_violations", r.mass_violations},
            {"worst_mass_deviation", r.worst_mass_deviation},
            {"per_n", per_n}};
}

inline std::string header_lines(const RateReport& r, const json& provenance) {
    std::ostringstream os;
    os << "# vbkde " << kVersion << "\n# run: " << provenance.dump() << "\n";
    os << "# estimator: " << r.estimator << "\n# quantity: " << r.quantity << "\n";
    return os.str();
}

/// One row per (n, replication).
inline std::string report_raw_csv(const RateReport& r, const json& provenance) {
    std::ostringstream os;
    os << header_lines(r, provenance) << "n,replication,value\n";
    for (std::size_t i = 0; i < r.n_values.size(); ++i)
        for (std::size_t k = 0; k < r.errors[i].size(); ++k)
            os << r.n_values[i] << "," << k << "," << dec(r.errors[i][k]) << "\n";
    return os.str();
}

/// Per-n medians and quartiles plus the fitted line.
inline std::string report_summary_csv(const RateReport& r, const json& provenance) {
    std::ostringstream os;
    os << header_lines(r, provenance);
    os << "# slope: " << dec(r.slope) << "\n# intercept: " << dec(r.intercept) << "\n# target_slope: " << dec(r.target_slope)
       << "\n# clamp_events: " << r.clamp_events << "\n";
    os << "n,log_rate,median,q25,q75,log_median,fitted\n";
    for (std::size_t i = 0; i < r.n_values.size(); ++i) {
        const double lx = log_rate_abscissa(r.n_values[i]);
        os << r.n_values[i] << "," << dec(lx) << "," << dec(r.median[i]) << "," << dec(r.q25[i]) << ","
           << dec(r.q75[i]) << "," << dec(std::log(r.median[i])) << "," << dec(r.intercept + r.slope * lx) << "\n";
    }
    return os.str();
}

/// Whitespace-separated columns for gnuplot: log((log n)/n), log median, fit.
inline std::string report_plot_data(const RateReport& r, const json& provenance) {
    std::ostringstream os;
    os << "# vbkde " << kVersion << "\n# run: " << provenance.dump() << "\n";
    os << "# " << r.estimator << " " << r.quantity << " slope " << dec(r.slope) << "\n";
    os << "# log_rate log_median fitted\n";
    for (std::size_t i = 0; i < r.n_values.size(); ++i) {
        const double lx = log_rate_abscissa(r.n_values[i]);
        os << dec(lx) << " " << dec(std::log(r.median[i])) << " " << dec(r.intercept + r.slope * lx) << "\n";
    }
    return os.str();
}

// ---- bias scan -------------------------------------------------------------

struct BiasScanResult {
    std::vector<double> points;
    std::vector<BiasScan> scans;
};

inline std::string bias_scan_csv(const BiasScanResult& b, const json& provenance) {
    std::ostringstream os;
    os << "# vbkde " << kVersion << "\n# run: " << provenance.dump() << "\n";
    os << "t,h,bias,slope\n";
    for (std::size_t p = 0; p < b.points.size(); ++p)
        for (const auto& row : b.scans[p].rows)
            os << dec(b.points[p]) << "," << dec(row.h) << "," << dec(row.bias) << "," << dec(b.scans[p].slope) << "\n";
    return os.str();
}

inline json bias_scan_json(const BiasScanResult& b, const json& provenance) {
    json scans = json::array();
    for (std::size_t p = 0; p < b.points.size(); ++p) {
        json rows = json::array();
        for (const auto& row : b.scans[p].rows)
            rows.push_back({{"h", row.h}, {"expected", row.expected}, {"bias", row.bias}, {"bias_hex", hex(row.bias)}});
        scans.push_back({{"t", b.points[p]},
                         {"slope", b.scans[p].slope},
                         {"slope_hex", hex(b.scans[p].slope)},
                         {"intercept", b.scans[p].intercept},
                         {"rows", rows}});
    }
    return {{"vbkde", kVersion}, {"run", provenance}, {"scans", scans}};
}

} // namespace io
} // namespace vbkde
