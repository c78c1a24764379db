#pragma once

// TPL1 path-loss datasets: generation, binary persistence, splitting and
// ingestion of measured text tables.
//
// Layout (little-endian):
//   "TPL1" | u32 version | u64 json_length | json metadata
//   n_records x { f32 heights[n] | f32 path_loss_db[n] | u64 seed | u8 solver_tag }
// where n = metadata.radio.n_points. Values are stored as float32.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "em_core.hpp"
#include "error.hpp"
#include "mom.hpp"
#include "terrain.hpp"

namespace terrainprop::dataset {

using json = nlohmann::json;

inline constexpr std::string_view kMagic = "TPL1";
inline constexpr std::uint32_t kVersion = 1;

/// `none` marks terrain-only records whose path loss has not been solved.
enum class SolverTag : std::uint8_t { none = 0, faffa = 1, exact = 2, measured = 3 };

inline std::string_view to_string(SolverTag t) {
    switch (t) {
        case SolverTag::none: return "none";
        case SolverTag::faffa: return "faffa";
        case SolverTag::exact: return "exact";
        case SolverTag::measured: return "measured";
    }
    return "?";
}

inline SolverTag tag_for(mom::Method m) { return m == mom::Method::exact ? SolverTag::exact : SolverTag::faffa; }

struct PathLossRecord {
    terrain::TerrainProfile profile;
    std::vector<double> path_loss_db;
    SolverTag solver_tag = SolverTag::none;

    bool operator==(const PathLossRecord&) const = default;
};

/// Terrain generator plus its parameters; only the member matching `kind` is used.
struct GeneratorSpec {
    terrain::GeneratorTag kind = terrain::GeneratorTag::gaussian;
    terrain::GaussianParams gaussian;
    terrain::FractalParams fractal;

    bool operator==(const GeneratorSpec&) const = default;
};

struct CorpusStats {
    double mean_db = 0.0;
    double variance_db2 = 0.0;  // population variance
    std::uint64_t count = 0;    // values used; clamped and unsolved values are skipped

    bool operator==(const CorpusStats&) const = default;
};

struct DatasetHeader {
    std::uint32_t version = kVersion;
    em::RadioConfig radio;
    GeneratorSpec generator;
    std::optional<mom::SolverConfig> solver;  // absent for terrain-only or measured files
    std::uint64_t n_records = 0;
    std::uint64_t base_seed = 0;
    std::optional<CorpusStats> path_loss_stats;
};

struct Dataset {
    DatasetHeader header;
    std::vector<PathLossRecord> records;
};

// ---------------------------------------------------------------- metadata

inline json radio_to_json(const em::RadioConfig& r) {
    return {{"frequency_hz", r.frequency_hz}, {"tx_height_m", r.tx_height_m}, {"rx_height_m", r.rx_height_m},
            {"rx_spacing_m", r.rx_spacing_m}, {"n_points", r.n_points}};
}

inline em::RadioConfig radio_from_json(const json& j) {
    em::RadioConfig r;
    r.frequency_hz = j.at("frequency_hz").get<double>();
    r.tx_height_m = j.at("tx_height_m").get<double>();
    r.rx_height_m = j.at("rx_height_m").get<double>();
    r.rx_spacing_m = j.at("rx_spacing_m").get<double>();
    r.n_points = j.at("n_points").get<int>();
    return r;
}

inline json generator_to_json(const GeneratorSpec& g) {
    json params = json::object();
    if (g.kind == terrain::GeneratorTag::gaussian) {
        params = {{"rms_height_m", g.gaussian.rms_height_m}, {"corr_length_m", g.gaussian.corr_length_m}};
    } else if (g.kind == terrain::GeneratorTag::fractal) {
        params = {{"variance", g.fractal.variance}, {"hurst", g.fractal.hurst}};
    }
    return {{"kind", terrain::to_string(g.kind)}, {"params", params}};
}

inline GeneratorSpec generator_from_json(const json& j) {
    GeneratorSpec g;
    g.kind = terrain::generator_from_string(j.at("kind").get<std::string>());
    const json& p = j.at("params");
    if (g.kind == terrain::GeneratorTag::gaussian) {
        g.gaussian = {p.at("rms_height_m").get<double>(), p.at("corr_length_m").get<double>()};
    } else if (g.kind == terrain::GeneratorTag::fractal) {
        g.fractal = {p.at("variance").get<double>(), p.at("hurst").get<double>()};
    }
    return g;
}

inline json solver_to_json(const mom::SolverConfig& s) {
    return {{"method", mom::to_string(s.method)},
            {"samples_per_wavelength", s.samples_per_wavelength},
            {"groups_per_segment", s.groups_per_segment},
            {"max_group_wavelengths", s.max_group_wavelengths},
            {"near_group_factor", s.faffa.near_group_factor},
            {"translation", s.faffa.translation == mom::Translation::phase_only ? "phase" : "phase_spreading"}};
}

inline mom::SolverConfig solver_from_json(const json& j, const em::RadioConfig& radio) {
    mom::SolverConfig s;
    s.radio = radio;
    s.method = mom::method_from_string(j.at("method").get<std::string>());
    s.samples_per_wavelength = j.at("samples_per_wavelength").get<double>();
    s.groups_per_segment = j.at("groups_per_segment").get<int>();
    s.max_group_wavelengths = j.at("max_group_wavelengths").get<double>();
    s.faffa.near_group_factor = j.at("near_group_factor").get<double>();
    s.faffa.translation =
        j.at("translation").get<std::string>() == "phase" ? mom::Translation::phase_only : mom::Translation::phase_and_spreading;
    return s;
}

inline json header_to_json(const DatasetHeader& h) {
    json j = {{"radio", radio_to_json(h.radio)},
              {"generator", generator_to_json(h.generator)},
              {"solver", h.solver ? solver_to_json(*h.solver) : json(nullptr)},
              {"n_records", h.n_records},
              {"base_seed", h.base_seed},
              {"path_loss_stats", nullptr}};
    if (h.path_loss_stats) {
        j["path_loss_stats"] = {{"mean_db", h.path_loss_stats->mean_db},
                                {"variance_db2", h.path_loss_stats->variance_db2},
                                {"count", h.path_loss_stats->count}};
    }
    return j;
}

inline DatasetHeader header_from_json(const json& j) {
    DatasetHeader h;
    h.radio = radio_from_json(j.at("radio"));
    h.generator = generator_from_json(j.at("generator"));
    if (!j.at("solver").is_null()) h.solver = solver_from_json(j.at("solver"), h.radio);
    h.n_records = j.at("n_records").get<std::uint64_t>();
    h.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (const auto& s = j.at("path_loss_stats"); !s.is_null()) {
        h.path_loss_stats = CorpusStats{s.at("mean_db").get<double>(), s.at("variance_db2").get<double>(),
                                        s.at("count").get<std::uint64_t>()};
    }
    return h;
}

// ---------------------------------------------------------------- records

inline std::size_t record_stride(std::size_t n_points) { return n_points * 8 + 9; }

inline CorpusStats corpus_stats(const std::vector<PathLossRecord>& records) {
    // Welford keeps the variance accurate for large corpora.
    CorpusStats s;
    double m2 = 0.0;
    for (const auto& r : records) {
        if (r.solver_tag == SolverTag::none) continue;
        for (double v : r.path_loss_db) {
            if (v <= mom::kFloorDb) continue;
            ++s.count;
            const double d = v - s.mean_db;
            s.mean_db += d / static_cast<double>(s.count);
            m2 += d * (v - s.mean_db);
        }
    }
    if (s.count > 0) s.variance_db2 = m2 / static_cast<double>(s.count);
    return s;
}

inline void check_record(const PathLossRecord& r, std::size_t n_points, std::size_t index) {
    const auto where = " (record " + std::to_string(index) + ")";
    if (r.profile.size() != n_points || r.path_loss_db.size() != n_points) {
        throw DomainError("record length does not match n_points" + where);
    }
    for (std::size_t k = 0; k < n_points; ++k) {
        if (!std::isfinite(r.profile.heights_m[k]) || !std::isfinite(r.path_loss_db[k])) {
            throw DomainError("non-finite value" + where);
        }
    }
}

inline void encode_record(io::ByteWriter& w, const PathLossRecord& r) {
    for (double h : r.profile.heights_m) w.f32(static_cast<float>(h));
    for (double v : r.path_loss_db) w.f32(static_cast<float>(v));
    w.u64(r.profile.seed);
    w.u8(static_cast<std::uint8_t>(r.solver_tag));
}

/// Serializes header + records. n_records and path_loss_stats are derived
/// from `records`; values are rounded to float32.
inline std::string encode(DatasetHeader header, const std::vector<PathLossRecord>& records) {
    header.radio.validate();
    if (records.empty()) throw DomainError("encode: a dataset needs at least one record");
    const auto n = static_cast<std::size_t>(header.radio.n_points);
    for (std::size_t i = 0; i < records.size(); ++i) check_record(records[i], n, i);
    header.n_records = records.size();
    const auto stats = corpus_stats(records);
    header.path_loss_stats = stats.count > 0 ? std::optional(stats) : std::nullopt;

    const std::string meta = header_to_json(header).dump();
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(header.version);
    w.u64(meta.size());
    w.raw(meta);
    for (const auto& r : records) encode_record(w, r);
    return w.bytes();
}

inline void write_records(const std::filesystem::path& path, const DatasetHeader& header,
                          const std::vector<PathLossRecord>& records) {
    io::write_file_atomic(path, encode(header, records));
}

inline DatasetHeader decode_header(io::ByteReader& in) {
    const auto magic = in.raw(4, "magic");
    if (magic != kMagic) throw FormatError("bad magic, expected TPL1", 0);
    const std::size_t version_at = in.offset();
    const auto version = in.u32("version");
    if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version), version_at);
    const auto length = in.u64("metadata length");
    const std::size_t meta_at = in.offset();
    const auto meta = in.raw(length, "metadata");
    DatasetHeader h;
    try {
        h = header_from_json(json::parse(meta));
        h.radio.validate();
    } catch (const std::exception& e) {
        throw FormatError(std::string("bad metadata: ") + e.what(), meta_at);
    }
    if (h.n_records < 1) throw FormatError("metadata declares no records", meta_at);
    h.version = version;
    return h;
}

inline Dataset decode(std::string_view bytes) {
    io::ByteReader in(bytes);
    Dataset ds;
    ds.header = decode_header(in);
    const auto n = static_cast<std::size_t>(ds.header.radio.n_points);
    const std::size_t stride = record_stride(n);
    ds.records.reserve(std::min<std::uint64_t>(ds.header.n_records, in.remaining() / stride));
    for (std::uint64_t i = 0; i < ds.header.n_records; ++i) {
        const std::size_t start = in.offset();
        if (in.remaining() < stride) {
            throw FormatError("record " + std::to_string(i) + " truncated: " + std::to_string(in.remaining()) +
                                  " of " + std::to_string(stride) + " bytes",
                              start);
        }
        PathLossRecord r;
        r.profile.spacing_m = ds.header.radio.rx_spacing_m;
        r.profile.generator = ds.header.generator.kind;
        r.profile.heights_m.resize(n);
        r.path_loss_db.resize(n);
        for (auto& h : r.profile.heights_m) h = in.f32("height");
        for (auto& v : r.path_loss_db) v = in.f32("path loss");
        r.profile.seed = in.u64("seed");
        const auto tag = in.u8("solver tag");
        if (tag > static_cast<std::uint8_t>(SolverTag::measured)) {
            throw FormatError("record " + std::to_string(i) + " has unknown solver tag " + std::to_string(tag),
                              in.offset() - 1);
        }
        r.solver_tag = static_cast<SolverTag>(tag);
        if (r.solver_tag == SolverTag::measured) r.profile.generator = terrain::GeneratorTag::external;
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(r.profile.heights_m[k]) || !std::isfinite(r.path_loss_db[k])) {
                throw FormatError("record " + std::to_string(i) + " holds a non-finite value", start);
            }
        }
        ds.records.push_back(std::move(r));
    }
    if (!in.at_end()) {
        throw FormatError(std::to_string(in.remaining()) + " trailing bytes after record " +
                              std::to_string(ds.header.n_records - 1),
                          in.offset());
    }
    return ds;
}

inline Dataset read_records(const std::filesystem::path& path) { return decode(io::read_file(path)); }

// ---------------------------------------------------------------- generation

inline terrain::TerrainProfile make_profile(const GeneratorSpec& g, std::size_t n, double spacing, std::uint64_t seed) {
    switch (g.kind) {
        case terrain::GeneratorTag::gaussian: return terrain::gen_gaussian(g.gaussian, n, spacing, seed);
        case terrain::GeneratorTag::fractal: return terrain::gen_fractal(g.fractal, n, spacing, seed);
        default: throw DomainError("make_profile: generator must be gaussian or fractal");
    }
}

/// One record, fully determined by its arguments.
inline PathLossRecord generate_record(const GeneratorSpec& g, const mom::SolverConfig& cfg, std::uint64_t seed,
                                      bool solve = true) {
    PathLossRecord r;
    r.profile = make_profile(g, static_cast<std::size_t>(cfg.radio.n_points), cfg.radio.rx_spacing_m, seed);
    if (solve) {
        r.path_loss_db = mom::solve_profile(r.profile, cfg).values_db;
        r.solver_tag = tag_for(cfg.method);
    } else {
        r.path_loss_db.assign(r.profile.size(), 0.0);
    }
    return r;
}

struct GenerateOptions {
    unsigned jobs = 1;
    bool solve = true;
    /// Called from worker threads after each record, serialized by the caller's lock.
    std::function<void(std::uint64_t index, const std::string& error)> on_record;
};

/// Records i = 0..n-1 with seed base_seed + i. Records whose generation or
/// solve throws are skipped and reported through on_record; the returned
/// dataset holds the survivors in index order.
inline Dataset generate_dataset(std::uint64_t n, const GeneratorSpec& g, const mom::SolverConfig& cfg,
                                std::uint64_t base_seed, const GenerateOptions& opts = {}) {
    if (n < 1) throw DomainError("generate_dataset: n must be >= 1");
    cfg.validate();
    std::vector<std::optional<PathLossRecord>> slots(n);
    std::atomic<std::uint64_t> next{0};
    std::mutex report;
    // The GP sampler's factorization is shared by all records.
    std::optional<terrain::GaussianSampler> sampler;
    if (g.kind == terrain::GeneratorTag::gaussian) {
        sampler.emplace(g.gaussian, static_cast<std::size_t>(cfg.radio.n_points), cfg.radio.rx_spacing_m);
    }
    auto worker = [&] {
        for (std::uint64_t i = next++; i < n; i = next++) {
            std::string error;
            try {
                const std::uint64_t seed = base_seed + i;
                PathLossRecord r;
                if (sampler) {
                    r.profile = sampler->sample(seed);
                    if (opts.solve) {
                        r.path_loss_db = mom::solve_profile(r.profile, cfg).values_db;
                        r.solver_tag = tag_for(cfg.method);
                    } else {
                        r.path_loss_db.assign(r.profile.size(), 0.0);
                    }
                } else {
                    r = generate_record(g, cfg, seed, opts.solve);
                }
                slots[i] = std::move(r);
            } catch (const std::exception& e) {
                error = e.what();
            }
            if (opts.on_record) {
                std::lock_guard lock(report);
                opts.on_record(i, error);
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(n)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    Dataset ds;
    ds.header.radio = cfg.radio;
    ds.header.generator = g;
    if (opts.solve) ds.header.solver = cfg;
    ds.header.base_seed = base_seed;
    for (auto& s : slots) {
        if (s) ds.records.push_back(std::move(*s));
    }
    ds.header.n_records = ds.records.size();
    const auto stats = corpus_stats(ds.records);
    if (stats.count > 0) ds.header.path_loss_stats = stats;
    return ds;
}

// ---------------------------------------------------------------- splitting

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Disjoint random index sets, each sorted. Fisher-Yates over mt19937_64 with
/// rejection sampling, so the result does not depend on the standard library.
inline Split split(std::size_t n_records, std::size_t n_train, std::size_t n_val, std::uint64_t seed) {
    if (n_train + n_val > n_records) throw DomainError("split: n_train + n_val exceeds the record count");
    std::vector<std::size_t> idx(n_records);
    for (std::size_t i = 0; i < n_records; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n_records; i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t draw;
        do draw = rng(); while (draw >= limit);
        std::swap(idx[i - 1], idx[draw % bound]);
    }
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

// ---------------------------------------------------------------- measured data

/// Two whitespace-separated numeric columns; '#' starts a comment.
inline std::vector<std::pair<double, double>> read_text_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::pair<double, double>> rows;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string a, b, extra;
        if (!(fields >> a)) continue;
        auto parse = [&](const std::string& s) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
                throw DomainError(path.string() + ":" + std::to_string(line_no) + ": not a number: " + s);
            }
            return v;
        };
        if (!(fields >> b) || (fields >> extra)) {
            throw DomainError(path.string() + ":" + std::to_string(line_no) + ": expected two columns");
        }
        rows.emplace_back(parse(a), parse(b));
    }
    return rows;
}

/// Builds a measured record from a terrain table (range m, height m) and a
/// path-loss table (range m, dB) sampled at the same uniformly spaced ranges.
/// Ranges are taken relative to the first row, which must be the transmitter site.
inline PathLossRecord ingest_measured(const std::vector<std::pair<double, double>>& terrain_rows,
                                      const std::vector<std::pair<double, double>>& loss_rows) {
    if (terrain_rows.size() < 2) throw DomainError("ingest_measured: terrain table needs at least 2 rows");
    if (loss_rows.size() != terrain_rows.size()) throw DomainError("ingest_measured: tables differ in length");
    const double spacing = terrain_rows[1].first - terrain_rows[0].first;
    if (!(spacing > 0.0)) throw DomainError("ingest_measured: ranges must increase");
    const double tol = 1e-6 * spacing;
    PathLossRecord r;
    r.solver_tag = SolverTag::measured;
    r.profile.spacing_m = spacing;
    r.profile.generator = terrain::GeneratorTag::external;
    for (std::size_t k = 0; k < terrain_rows.size(); ++k) {
        const double want = terrain_rows[0].first + spacing * static_cast<double>(k);
        if (std::abs(terrain_rows[k].first - want) > tol) {
            throw DomainError("ingest_measured: terrain ranges are not uniformly spaced at row " + std::to_string(k));
        }
        if (std::abs(loss_rows[k].first - terrain_rows[k].first) > tol) {
            throw DomainError("ingest_measured: path-loss range differs from terrain range at row " + std::to_string(k));
        }
        r.profile.heights_m.push_back(terrain_rows[k].second);
        r.path_loss_db.push_back(loss_rows[k].second);
    }
    return r;
}

inline PathLossRecord ingest_measured_files(const std::filesystem::path& terrain_path,
                                            const std::filesystem::path& loss_path) {
    return ingest_measured(read_text_table(terrain_path), read_text_table(loss_path));
}

}  // namespace terrainprop::dataset
