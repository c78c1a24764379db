#pragma once

// Error statistics between predictors, comparison tables, plot data, and the
// predictions CSV shared by the inference and baseline tools.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "error.hpp"
#include "mom.hpp"
#include "terrain.hpp"

namespace terrainprop::eval {

using json = nlohmann::json;

/// Error = prediction - reference, population standard deviation.
struct ErrorStats {
    double mean_error_db = 0.0;
    double std_error_db = 0.0;
    std::size_t n_points = 0;
    std::size_t excluded = 0;
};

/// Points dropped before the statistics. Floor-clamped points (either side at
/// or below mom::kFloorDb) are always dropped.
struct Mask {
    bool exclude_first = false;
    std::vector<bool> exclude;  // per point; empty = none
};

namespace detail {

inline bool floored(double v) { return v <= mom::kFloorDb; }

struct Accumulator {
    std::vector<double> errors;
    std::size_t excluded = 0;

    void add(std::span<const double> pred, std::span<const double> ref, const Mask& mask) {
        if (pred.size() != ref.size()) {
            throw DomainError("error_stats: length mismatch (" + std::to_string(pred.size()) + " vs " +
                              std::to_string(ref.size()) + ")");
        }
        if (!mask.exclude.empty() && mask.exclude.size() != pred.size()) {
            throw DomainError("error_stats: mask length " + std::to_string(mask.exclude.size()) + " != " +
                              std::to_string(pred.size()));
        }
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const bool drop = (mask.exclude_first && k == 0) || (!mask.exclude.empty() && mask.exclude[k]) ||
                              floored(pred[k]) || floored(ref[k]);
            if (drop) {
                ++excluded;
            } else {
                errors.push_back(pred[k] - ref[k]);
            }
        }
    }

    [[nodiscard]] ErrorStats finish() const {
        if (errors.empty()) throw DomainError("error_stats: every point is masked");
        double sum = 0.0;
        for (double e : errors) sum += e;
        const double mean = sum / static_cast<double>(errors.size());
        double ss = 0.0;
        for (double e : errors) ss += (e - mean) * (e - mean);
        return {mean, std::sqrt(ss / static_cast<double>(errors.size())), errors.size(), excluded};
    }
};

}  // namespace detail

inline ErrorStats error_stats(std::span<const double> pred, std::span<const double> ref, const Mask& mask = {}) {
    detail::Accumulator acc;
    acc.add(pred, ref, mask);
    return acc.finish();
}

inline ErrorStats error_stats(const mom::PathLossProfile& pred, const mom::PathLossProfile& ref,
                              const Mask& mask = {}) {
    return error_stats(pred.values_db, ref.values_db, mask);
}

/// Statistics pooled over every point of every record.
inline ErrorStats pooled_error_stats(std::span<const std::vector<double>> pred,
                                     std::span<const std::vector<double>> ref, const Mask& mask = {}) {
    if (pred.size() != ref.size()) {
        throw DomainError("error_stats: " + std::to_string(pred.size()) + " predicted records vs " +
                          std::to_string(ref.size()) + " reference records");
    }
    detail::Accumulator acc;
    for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], ref[i], mask);
    return acc.finish();
}

// ---------------------------------------------------------------- tables

using Series = std::vector<std::vector<double>>;  // records x points

struct Predictor {
    std::string name;
    Series values_db;
    std::vector<std::string> references;  // empty = compare against all
};

struct TableRow {
    std::string model;
    std::string reference;
    ErrorStats stats;
};

struct Report {
    std::vector<TableRow> rows;

    [[nodiscard]] std::string to_text() const {
        std::size_t wm = 5, wr = 9;
        for (const auto& r : rows) {
            wm = std::max(wm, r.model.size());
            wr = std::max(wr, r.reference.size());
        }
        std::ostringstream out;
        auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
        char buf[96];
        out << pad("model", wm) << "  " << pad("reference", wr) << "   mean_db    std_db  n_points  excluded\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%9.3f %9.3f %9zu %9zu", r.stats.mean_error_db, r.stats.std_error_db,
                          r.stats.n_points, r.stats.excluded);
            out << pad(r.model, wm) << "  " << pad(r.reference, wr) << ' ' << buf << '\n';
        }
        return out.str();
    }

    [[nodiscard]] json to_json() const {
        json arr = json::array();
        for (const auto& r : rows) {
            arr.push_back({{"model", r.model},
                           {"reference", r.reference},
                           {"mean_error_db", r.stats.mean_error_db},
                           {"std_error_db", r.stats.std_error_db},
                           {"n_points", r.stats.n_points},
                           {"excluded", r.stats.excluded}});
        }
        return {{"rows", arr}};
    }
};

/// One row per (predictor, reference): predictors in the given order,
/// references in name order.
inline Report compare_table(std::span<const Predictor> predictors, const std::map<std::string, Series>& refs,
                            const Mask& mask = {}) {
    if (refs.empty()) throw DomainError("compare_table: no references");
    Report report;
    for (const auto& p : predictors) {
        std::vector<std::string> against = p.references;
        if (against.empty()) {
            for (const auto& [name, _] : refs) against.push_back(name);
        } else {
            std::sort(against.begin(), against.end());
        }
        for (const auto& ref_name : against) {
            const auto it = refs.find(ref_name);
            if (it == refs.end()) {
                throw DomainError("compare_table: model '" + p.name + "' names missing reference '" + ref_name + "'");
            }
            try {
                report.rows.push_back({p.name, ref_name, pooled_error_stats(p.values_db, it->second, mask)});
            } catch (const DomainError& e) {
                throw DomainError("compare_table: " + p.name + " vs " + ref_name + ": " + e.what());
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------- number formatting

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

inline double parse_number(std::string_view s, const std::string& where, std::uint64_t offset = 0) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError(where + ": bad number '" + std::string(s) + "'", offset);
    }
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// ---------------------------------------------------------------- plot data

struct Band {
    std::vector<double> mean_db;
    std::vector<double> sigma_db;
};

struct PlotInput {
    terrain::TerrainProfile profile;
    std::vector<std::pair<std::string, std::vector<double>>> predictions;  // column order
    std::optional<Band> band;                                              // drawn as mean -/+ 2 sigma
};

inline void check_plot(const PlotInput& in) {
    const std::size_t n = in.profile.size();
    if (n < 2) throw DomainError("emit_plot_data: profile needs at least 2 points");
    for (const auto& [name, values] : in.predictions) {
        if (values.size() != n) {
            throw DomainError("emit_plot_data: '" + name + "' has " + std::to_string(values.size()) +
                              " points, profile has " + std::to_string(n));
        }
        if (name.find(',') != std::string::npos) throw DomainError("emit_plot_data: ',' in column name '" + name + "'");
    }
    if (in.band && (in.band->mean_db.size() != n || in.band->sigma_db.size() != n)) {
        throw DomainError("emit_plot_data: uncertainty band length != profile length");
    }
}

inline std::string plot_csv(const PlotInput& in) {
    check_plot(in);
    std::string out = "range_m,terrain_m";
    for (const auto& p : in.predictions) out += "," + p.first;
    if (in.band) out += ",band_low_db,band_high_db";
    out += '\n';
    for (std::size_t k = 0; k < in.profile.size(); ++k) {
        out += format_number(in.profile.range_m(k)) + ',' + format_number(in.profile.heights_m[k]);
        for (const auto& p : in.predictions) out += ',' + format_number(p.second[k]);
        if (in.band) {
            const double mu = in.band->mean_db[k], two_sigma = 2.0 * in.band->sigma_db[k];
            out += ',' + format_number(mu - two_sigma) + ',' + format_number(mu + two_sigma);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

struct Axis {
    double lo, hi;     // data range
    double p0, p1;     // pixel range
    [[nodiscard]] double map(double v) const { return p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

inline std::pair<double, double> padded_range(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double m = 0.05 * (hi - lo);
    return {lo - m, hi + m};
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

inline std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, const Axis& ax,
                            const Axis& ay, const std::string& style) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (floored(ys[i])) continue;
        pts += fmt(ax.map(xs[i])) + ',' + fmt(ay.map(ys[i])) + ' ';
    }
    return "<polyline fill=\"none\" " + style + " points=\"" + pts + "\"/>\n";
}

inline std::string y_ticks(const Axis& ay, double x_px, const std::string& label) {
    std::string s;
    for (int i = 0; i <= 4; ++i) {
        const double v = ay.lo + (ay.hi - ay.lo) * i / 4.0;
        const double y = ay.map(v);
        s += "<line x1=\"" + fmt(x_px - 4) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(x_px) + "\" y2=\"" + fmt(y) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + fmt(x_px - 6) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" + fmt(v) + "</text>\n";
    }
    const double mid = 0.5 * (ay.p0 + ay.p1);
    s += "<text transform=\"translate(" + fmt(x_px - 52) + "," + fmt(mid) + ") rotate(-90)\" text-anchor=\"middle\">" +
         label + "</text>\n";
    return s;
}

}  // namespace detail

/// Terrain panel above a path-loss panel; the band, when present, is grey.
inline std::string plot_svg(const PlotInput& in) {
    check_plot(in);
    using detail::fmt;
    constexpr double W = 900, left = 80, right = 870;
    constexpr double t_top = 30, t_bot = 190, p_top = 230, p_bot = 560, H = 610;
    static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    const std::size_t n = in.profile.size();
    std::vector<double> xs(n);
    for (std::size_t k = 0; k < n; ++k) xs[k] = in.profile.range_m(k) / 1000.0;
    const detail::Axis ax{xs.front(), xs.back(), left, right};

    const auto [hmin, hmax] = std::minmax_element(in.profile.heights_m.begin(), in.profile.heights_m.end());
    const auto [tlo, thi] = detail::padded_range(*hmin, *hmax);
    const detail::Axis at{tlo, thi, t_bot, t_top};

    double lo = 1e300, hi = -1e300;
    auto widen = [&](double v) {
        if (detail::floored(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    };
    for (const auto& p : in.predictions) std::for_each(p.second.begin(), p.second.end(), widen);
    if (in.band) {
        for (std::size_t k = 0; k < n; ++k) {
            widen(in.band->mean_db[k] - 2.0 * in.band->sigma_db[k]);
            widen(in.band->mean_db[k] + 2.0 * in.band->sigma_db[k]);
        }
    }
    if (lo > hi) lo = hi = 0.0;
    const auto [plo, phi] = detail::padded_range(lo, hi);
    const detail::Axis ap{plo, phi, p_bot, p_top};

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto [top, bot] : {std::pair{t_top, t_bot}, std::pair{p_top, p_bot}}) {
        s += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(right - left) + "\" height=\"" +
             fmt(bot - top) + "\" fill=\"none\" stroke=\"black\"/>\n";
    }

    // Terrain: filled to the panel floor.
    std::string ground = fmt(ax.map(xs.front())) + ',' + fmt(t_bot) + ' ';
    for (std::size_t k = 0; k < n; ++k) ground += fmt(ax.map(xs[k])) + ',' + fmt(at.map(in.profile.heights_m[k])) + ' ';
    ground += fmt(ax.map(xs.back())) + ',' + fmt(t_bot);
    s += "<polygon fill=\"#c8b99a\" stroke=\"#6b5b3e\" points=\"" + ground + "\"/>\n";
    s += detail::y_ticks(at, left, "height [m]");

    if (in.band) {
        std::string pts;
        for (std::size_t k = 0; k < n; ++k) {
            pts += fmt(ax.map(xs[k])) + ',' + fmt(ap.map(in.band->mean_db[k] + 2.0 * in.band->sigma_db[k])) + ' ';
        }
        for (std::size_t k = n; k-- > 0;) {
            pts += fmt(ax.map(xs[k])) + ',' + fmt(ap.map(in.band->mean_db[k] - 2.0 * in.band->sigma_db[k])) + ' ';
        }
        s += "<polygon fill=\"#bbbbbb\" fill-opacity=\"0.6\" stroke=\"none\" points=\"" + pts + "\"/>\n";
    }
    for (std::size_t i = 0; i < in.predictions.size(); ++i) {
        const std::string color = kColors[i % std::size(kColors)];
        s += detail::polyline(xs, in.predictions[i].second, ax, ap, "stroke=\"" + color + "\" stroke-width=\"1.2\"");
        const double ly = p_top + 16 + 14.0 * static_cast<double>(i);
        s += "<line x1=\"" + fmt(right - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(right - 130) + "\" y2=\"" +
             fmt(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fmt(right - 125) + "\" y=\"" + fmt(ly) + "\">" + in.predictions[i].first + "</text>\n";
    }
    s += detail::y_ticks(ap, left, "path gain [dB]");
    for (int i = 0; i <= 5; ++i) {
        const double v = ax.lo + (ax.hi - ax.lo) * i / 5.0;
        const double x = ax.map(v);
        s += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(p_bot) + "\" x2=\"" + fmt(x) + "\" y2=\"" + fmt(p_bot + 4) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(p_bot + 16) + "\" text-anchor=\"middle\">" + fmt(v) + "</text>\n";
    }
    s += "<text x=\"" + fmt(0.5 * (left + right)) + "\" y=\"" + fmt(p_bot + 36) +
         "\" text-anchor=\"middle\">range [km]</text>\n";
    s += "</svg>\n";
    return s;
}

struct PlotFiles {
    std::filesystem::path csv;
    std::filesystem::path svg;
};

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
inline PlotFiles emit_plot_data(const PlotInput& in, const std::filesystem::path& dir, const std::string& stem) {
    PlotFiles files{dir / (stem + ".csv"), dir / (stem + ".svg")};
    const std::string csv = plot_csv(in), svg = plot_svg(in);
    io::write_file_atomic(files.csv, csv);
    io::write_file_atomic(files.svg, svg);
    return files;
}

// ---------------------------------------------------------------- predictions CSV

/// Per-point predictions for a corpus:
///   record,k,range_m,height_m,mean_db[,sigma_db]
struct PredictionTable {
    std::vector<terrain::TerrainProfile> profiles;
    Series mean_db;
    std::optional<Series> sigma_db;
};

inline std::string encode_predictions(const PredictionTable& t) {
    if (t.profiles.size() != t.mean_db.size() || (t.sigma_db && t.sigma_db->size() != t.mean_db.size())) {
        throw DomainError("predictions: record count mismatch");
    }
    std::string out = t.sigma_db ? "record,k,range_m,height_m,mean_db,sigma_db\n" : "record,k,range_m,height_m,mean_db\n";
    for (std::size_t r = 0; r < t.profiles.size(); ++r) {
        const auto& p = t.profiles[r];
        if (t.mean_db[r].size() != p.size() || (t.sigma_db && (*t.sigma_db)[r].size() != p.size())) {
            throw DomainError("predictions: record " + std::to_string(r) + " length mismatch");
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            out += std::to_string(r) + ',' + std::to_string(k) + ',' + format_number(p.range_m(k)) + ',' +
                   format_number(p.heights_m[k]) + ',' + format_number(t.mean_db[r][k]);
            if (t.sigma_db) out += ',' + format_number((*t.sigma_db)[r][k]);
            out += '\n';
        }
    }
    return out;
}

inline PredictionTable decode_predictions(std::string_view text, const std::string& source = "predictions") {
    PredictionTable t;
    std::size_t line_no = 0;
    bool header_seen = false, with_sigma = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::uint64_t at = pos;
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        if (!header_seen) {
            if (line == "record,k,range_m,height_m,mean_db,sigma_db") {
                with_sigma = true;
            } else if (line != "record,k,range_m,height_m,mean_db") {
                throw FormatError(where + ": unexpected header '" + std::string(line) + "'", at);
            }
            header_seen = true;
            if (with_sigma) t.sigma_db.emplace();
            continue;
        }
        const auto cols = split_csv(line);
        if (cols.size() != (with_sigma ? 6u : 5u)) throw FormatError(where + ": wrong column count", at);
        const double rec = parse_number(cols[0], where, at), k = parse_number(cols[1], where, at);
        if (rec != static_cast<double>(t.profiles.size()) - 1 && rec != static_cast<double>(t.profiles.size())) {
            throw FormatError(where + ": records must be consecutive", at);
        }
        if (rec == static_cast<double>(t.profiles.size())) {
            t.profiles.emplace_back();
            t.mean_db.emplace_back();
            if (with_sigma) t.sigma_db->emplace_back();
        }
        auto& p = t.profiles.back();
        if (k != static_cast<double>(p.heights_m.size())) throw FormatError(where + ": point index out of order", at);
        const double range = parse_number(cols[2], where, at);
        if (p.heights_m.size() == 1) p.spacing_m = range;
        p.heights_m.push_back(parse_number(cols[3], where, at));
        t.mean_db.back().push_back(parse_number(cols[4], where, at));
        if (with_sigma) t.sigma_db->back().push_back(parse_number(cols[5], where, at));
    }
    if (!header_seen || t.profiles.empty()) throw FormatError(source + ": no prediction rows", text.size());
    return t;
}

inline void write_predictions(const std::filesystem::path& path, const PredictionTable& t) {
    io::write_file_atomic(path, encode_predictions(t));
}

inline PredictionTable read_predictions(const std::filesystem::path& path) {
    return decode_predictions(io::read_file(path), path.string());
}

}  // namespace terrainprop::eval
