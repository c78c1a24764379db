// terrainprop: terrain generation, MoM solves, surrogate inference, baselines
// and evaluation from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_support.hpp"
#include "terrainprop/baselines.hpp"
#include "terrainprop/dataset.hpp"
#include "terrainprop/eval.hpp"
#include "terrainprop/mom.hpp"
#include "terrainprop/unet.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace ds = terrainprop::dataset;
namespace ev = terrainprop::eval;
namespace mom = terrainprop::mom;
namespace tr = terrainprop::terrain;
namespace un = terrainprop::unet;
namespace em = terrainprop::em;

constexpr std::size_t kExactWarnUnknowns = 50'000;

void note(bool quiet, const std::string& msg) {
    if (!quiet) std::fprintf(stderr, "%s\n", msg.c_str());
}

/// Radio settings a command may override; unset fields keep the input file's values.
struct RadioFlags {
    std::optional<double> freq, tx_height, rx_height;

    void add(CLI::App* sub) {
        sub->add_option("--freq", freq, "Frequency in Hz (default: from the input file)");
        sub->add_option("--tx-height", tx_height, "Transmitter height above the first terrain point, m");
        sub->add_option("--rx-height", rx_height, "Receiver height above local terrain, m");
    }

    [[nodiscard]] em::RadioConfig apply(em::RadioConfig r) const {
        if (freq) r.frequency_hz = *freq;
        if (tx_height) r.tx_height_m = *tx_height;
        if (rx_height) r.rx_height_m = *rx_height;
        try {
            r.validate();
        } catch (const terrainprop::DomainError& e) {
            throw cli::UsageError(e.what());
        }
        return r;
    }
};

// ---------------------------------------------------------------- terrain

struct TerrainArgs {
    std::string kind = "gp";
    double rms = 20.0, corr = 800.0, variance = 30.0, hurst = 1.2;
    std::uint64_t n = 0, seed = 0;
    int points = 256;
    double spacing = 50.0;
    std::string out;
    unsigned jobs = 1;
    bool quiet = false;
};

int cmd_terrain(const TerrainArgs& a) {
    ds::GeneratorSpec g;
    g.kind = a.kind == "fractal" ? tr::GeneratorTag::fractal : tr::GeneratorTag::gaussian;
    g.gaussian = {a.rms, a.corr};
    g.fractal = {a.variance, a.hurst};
    mom::SolverConfig cfg;
    cfg.radio.n_points = a.points;
    cfg.radio.rx_spacing_m = a.spacing;
    try {
        if (a.n < 1) throw terrainprop::DomainError("--n must be >= 1");
        cfg.radio.validate();
        g.kind == tr::GeneratorTag::fractal ? g.fractal.validate() : g.gaussian.validate();
    } catch (const terrainprop::DomainError& e) {
        throw cli::UsageError(e.what());
    }
    cli::require_output_dir(a.out);

    cli::Progress progress("terrain", a.n, a.quiet);
    ds::GenerateOptions opts;
    opts.jobs = a.jobs;
    opts.solve = false;
    std::vector<std::string> failures;
    opts.on_record = [&](std::uint64_t i, const std::string& err) {
        if (!err.empty()) failures.push_back("record " + std::to_string(i) + ": " + err);
        progress.tick();
    };
    const auto data = ds::generate_dataset(a.n, g, cfg, a.seed, opts);
    for (const auto& f : failures) std::fprintf(stderr, "terrain: skipped %s\n", f.c_str());
    if (data.records.empty()) throw std::runtime_error("no profile could be generated");
    ds::write_records(a.out, data.header, data.records);

    cli::Manifest m{"terrain"};
    m.settings = {{"generator", ds::generator_to_json(g)}, {"n", a.n},           {"seed", a.seed},
                  {"points", a.points},                    {"spacing_m", a.spacing}};
    m.outputs = {a.out};
    m.extra["records"] = data.records.size();
    m.write(cli::manifest_path(a.out));
    note(a.quiet, "terrain: wrote " + std::to_string(data.records.size()) + " profiles to " + a.out);
    return cli::kExitOk;
}

// ---------------------------------------------------------------- solve

struct SolveArgs {
    std::string in, out, method = "faffa", translation = "spreading";
    RadioFlags radio;
    double samples_per_lambda = 10.0, near_factor = 2.0, max_group_wavelengths = 20.0;
    int groups_per_segment = 0;
    unsigned jobs = 1;
    bool quiet = false;
};

int cmd_solve(const SolveArgs& a) {
    cli::require_input(a.in);
    cli::require_output_dir(a.out);
    const auto input = ds::read_records(a.in);

    mom::SolverConfig cfg;
    cfg.radio = a.radio.apply(input.header.radio);
    cfg.method = mom::method_from_string(a.method);
    cfg.samples_per_wavelength = a.samples_per_lambda;
    cfg.groups_per_segment = a.groups_per_segment;
    cfg.max_group_wavelengths = a.max_group_wavelengths;
    cfg.faffa.near_group_factor = a.near_factor;
    cfg.faffa.translation = a.translation == "phase" ? mom::Translation::phase_only : mom::Translation::phase_and_spreading;
    try {
        cfg.validate();
    } catch (const terrainprop::DomainError& e) {
        throw cli::UsageError(e.what());
    }

    const auto& records = input.records;
    if (cfg.method == mom::Method::exact) {
        std::size_t worst = 0;
        for (const auto& r : records) worst = std::max(worst, mom::count_unknowns(r.profile, cfg));
        if (worst > kExactWarnUnknowns) {
            std::fprintf(stderr,
                         "solve: warning: exact solve with up to %zu unknowns per profile; cost grows as N^2 "
                         "(faffa is much faster)\n",
                         worst);
        }
    }

    cli::Progress progress("solve", records.size(), a.quiet);
    std::vector<ds::PathLossRecord> solved(records.size());
    const auto errors = cli::parallel_for(records.size(), a.jobs, [&](std::size_t i) {
        auto r = records[i];
        r.path_loss_db = mom::solve_profile(r.profile, cfg).values_db;
        r.solver_tag = ds::tag_for(cfg.method);
        solved[i] = std::move(r);
        progress.tick();
    });
    std::vector<ds::PathLossRecord> kept;
    json skipped = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (errors[i].empty()) {
            kept.push_back(std::move(solved[i]));
        } else {
            std::fprintf(stderr, "solve: skipped record %zu: %s\n", i, errors[i].c_str());
            skipped.push_back({{"record", i}, {"error", errors[i]}});
        }
    }
    if (kept.empty()) throw std::runtime_error("every record failed to solve");

    ds::DatasetHeader header = input.header;
    header.radio = cfg.radio;
    header.solver = cfg;
    ds::write_records(a.out, header, kept);

    cli::Manifest m{"solve"};
    m.settings = ds::solver_to_json(cfg);
    m.settings["radio"] = ds::radio_to_json(cfg.radio);
    m.inputs = {a.in};
    m.outputs = {a.out};
    m.extra["records"] = kept.size();
    m.extra["skipped"] = skipped;
    m.write(cli::manifest_path(a.out));
    note(a.quiet, "solve: wrote " + std::to_string(kept.size()) + " records to " + a.out);
    return cli::kExitOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    std::string weights, in, out;
    bool with_uncertainty = false, no_arch_check = false, quiet = false;
    std::size_t batch = 128;
    unsigned jobs = 0;
};

int cmd_infer(const InferArgs& a) {
    cli::require_input(a.weights);
    cli::require_input(a.in);
    cli::require_output_dir(a.out);
    if (a.batch < 1) throw cli::UsageError("--batch must be >= 1");
    const auto w = un::load_weights(a.weights, un::LoadOptions{!a.no_arch_check});
    if (a.with_uncertainty && w.heads != 2) {
        throw cli::UsageError("--with-uncertainty needs a two-head model; " + a.weights + " has heads=" +
                              std::to_string(w.heads));
    }
    const auto input = ds::read_records(a.in);
    std::vector<tr::TerrainProfile> profiles;
    for (const auto& r : input.records) profiles.push_back(r.profile);
    if (static_cast<int>(profiles.front().size()) != w.metadata.input_length) {
        throw std::runtime_error("profiles have " + std::to_string(profiles.front().size()) +
                                 " points, the model expects " + std::to_string(w.metadata.input_length));
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto preds = un::forward_batch(w, profiles, a.batch, a.jobs);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    ev::PredictionTable table;
    table.profiles = profiles;
    if (a.with_uncertainty) table.sigma_db.emplace();
    for (const auto& p : preds) {
        table.mean_db.push_back(p.mean_db);
        if (a.with_uncertainty) table.sigma_db->push_back(*p.sigma_db);
    }
    ev::write_predictions(a.out, table);

    cli::Manifest m{"infer"};
    m.settings = {{"with_uncertainty", a.with_uncertainty}, {"batch", a.batch}, {"arch_check", !a.no_arch_check}};
    m.inputs = {a.weights, a.in};
    m.outputs = {a.out};
    m.extra["records"] = preds.size();
    m.extra["heads"] = w.heads;
    m.write(cli::manifest_path(a.out));

    char buf[160];
    std::snprintf(buf, sizeof buf, "infer: %zu profiles in %.3f s, %.3f ms per profile (batch %zu)", preds.size(),
                  seconds, 1e3 * seconds / static_cast<double>(preds.size()), a.batch);
    std::fprintf(stderr, "%s\n", buf);  // latency is always reported, even with --quiet
    note(a.quiet, "infer: wrote " + a.out);
    return cli::kExitOk;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
    std::string in, out, model;
    RadioFlags radio;
    int edges = 3;
    unsigned jobs = 1;
    bool quiet = false;
};

/// Deygout over the terrain, or two-ray over flat ground (terrain ignored).
std::vector<double> baseline_curve(const std::string& model, const tr::TerrainProfile& profile,
                                   const em::RadioConfig& radio, int edges) {
    namespace bl = terrainprop::baselines;
    const double k0 = em::wavenumber(radio.frequency_hz);
    std::vector<double> out(profile.size());
    for (std::size_t k = 0; k < profile.size(); ++k) {
        if (model == "tworay") {
            const double d = profile.range_m(k);
            out[k] = d == 0.0 && radio.tx_height_m == radio.rx_height_m
                         ? mom::kFloorDb
                         : bl::two_ray_reference(d, radio.tx_height_m, radio.rx_height_m, k0);
        } else if (k == 0) {
            const double d = std::abs(radio.tx_height_m - radio.rx_height_m);
            out[k] = d > 0.0 ? bl::free_space_gain_db(d, k0) : mom::kFloorDb;
        } else {
            out[k] = bl::deygout_loss(profile, radio, k, edges).path_gain_db;
        }
    }
    return out;
}

int cmd_baseline(const BaselineArgs& a) {
    cli::require_input(a.in);
    cli::require_output_dir(a.out);
    const auto input = ds::read_records(a.in);
    const auto radio = a.radio.apply(input.header.radio);

    cli::Progress progress("baseline", input.records.size(), a.quiet);
    ev::PredictionTable table;
    table.mean_db.resize(input.records.size());
    const auto errors = cli::parallel_for(input.records.size(), a.jobs, [&](std::size_t i) {
        table.mean_db[i] = baseline_curve(a.model, input.records[i].profile, radio, a.edges);
        progress.tick();
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) throw std::runtime_error("record " + std::to_string(i) + ": " + errors[i]);
    }
    for (const auto& r : input.records) table.profiles.push_back(r.profile);
    ev::write_predictions(a.out, table);

    cli::Manifest m{"baseline"};
    m.settings = {{"model", a.model}, {"radio", ds::radio_to_json(radio)}};
    if (a.model == "deygout") m.settings["edges"] = a.edges;
    m.inputs = {a.in};
    m.outputs = {a.out};
    m.extra["records"] = input.records.size();
    m.write(cli::manifest_path(a.out));
    note(a.quiet, "baseline: wrote " + a.out);
    return cli::kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::vector<std::string> preds, refs;
    std::string out_dir;
    bool exclude_first = false, quiet = false;
    std::size_t plot_record = 0;
};

struct Source {
    std::string name;
    fs::path path;
    std::vector<tr::TerrainProfile> profiles;
    ev::Series values;
    std::optional<ev::Series> sigma;
};

/// "name=path", or a bare path named after its stem.
std::pair<std::string, fs::path> parse_named(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
    if (eq == 0 || eq + 1 == arg.size()) throw cli::UsageError("expected NAME=PATH, got '" + arg + "'");
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

Source load_source(const std::string& arg) {
    auto [name, path] = parse_named(arg);
    cli::require_input(path);
    Source s{name, path, {}, {}, std::nullopt};
    const std::string bytes = terrainprop::io::read_file(path);
    if (bytes.compare(0, ds::kMagic.size(), ds::kMagic) == 0) {
        const auto data = ds::decode(bytes);
        for (const auto& r : data.records) {
            if (r.solver_tag == ds::SolverTag::none) {
                throw std::runtime_error(path.string() + " holds terrain only (no path loss); run solve first");
            }
            s.profiles.push_back(r.profile);
            s.values.push_back(r.path_loss_db);
        }
    } else {
        auto t = ev::decode_predictions(bytes, path.string());
        s.profiles = std::move(t.profiles);
        s.values = std::move(t.mean_db);
        s.sigma = std::move(t.sigma_db);
    }
    return s;
}

int cmd_eval(const EvalArgs& a) {
    std::vector<std::pair<std::string, fs::path>> named;
    for (const auto& p : a.preds) named.push_back(parse_named(p));
    for (const auto& r : a.refs) named.push_back(parse_named(r));
    for (const auto& [_, path] : named) cli::require_input(path);

    std::vector<Source> preds, refs;
    for (const auto& p : a.preds) preds.push_back(load_source(p));
    for (const auto& r : a.refs) refs.push_back(load_source(r));

    std::map<std::string, ev::Series> ref_map;
    for (const auto& r : refs) {
        if (!ref_map.emplace(r.name, r.values).second) throw cli::UsageError("duplicate reference name '" + r.name + "'");
    }
    std::vector<ev::Predictor> predictors;
    for (const auto& p : preds) predictors.push_back({p.name, p.values, {}});
    const ev::Mask mask{a.exclude_first, {}};
    const auto report = ev::compare_table(predictors, ref_map, mask);

    // Plot one record: references first (name order), then predictors.
    const Source& base = *std::min_element(refs.begin(), refs.end(),
                                           [](const Source& x, const Source& y) { return x.name < y.name; });
    if (a.plot_record >= base.profiles.size()) {
        throw cli::UsageError("--plot-record " + std::to_string(a.plot_record) + " out of range (" +
                              std::to_string(base.profiles.size()) + " records)");
    }
    ev::PlotInput plot{base.profiles[a.plot_record], {}, std::nullopt};
    for (const auto& [name, values] : ref_map) plot.predictions.emplace_back(name, values[a.plot_record]);
    for (const auto& p : preds) {
        const std::string column = ref_map.count(p.name) ? p.name + "_pred" : p.name;
        plot.predictions.emplace_back(column, p.values[a.plot_record]);
        if (p.sigma && !plot.band) plot.band = ev::Band{p.values[a.plot_record], (*p.sigma)[a.plot_record]};
    }

    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (!fs::is_directory(a.out_dir)) throw std::runtime_error("cannot create output directory " + a.out_dir);
    const fs::path dir(a.out_dir);
    terrainprop::io::write_file_atomic(dir / "report.txt", report.to_text());
    terrainprop::io::write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    const auto files = ev::emit_plot_data(plot, dir, "plot_record" + std::to_string(a.plot_record));
    std::fputs(report.to_text().c_str(), stdout);

    cli::Manifest m{"eval"};
    m.settings = {{"exclude_first", a.exclude_first}, {"plot_record", a.plot_record}};
    json names = json::object();
    for (const auto& p : preds) names["predictions"].push_back(p.name);
    for (const auto& r : refs) names["references"].push_back(r.name);
    m.settings["names"] = names;
    for (const auto& s : preds) m.inputs.push_back(s.path);
    for (const auto& s : refs) m.inputs.push_back(s.path);
    m.outputs = {dir / "report.txt", dir / "report.json", files.csv, files.svg};
    m.write(dir / "manifest.json");
    note(a.quiet, "eval: wrote report and plot data to " + a.out_dir);
    return cli::kExitOk;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
    std::string terrain, pathloss, out;
    RadioFlags radio;
    bool quiet = false;
};

int cmd_ingest(const IngestArgs& a) {
    cli::require_input(a.terrain);
    cli::require_input(a.pathloss);
    cli::require_output_dir(a.out);
    const auto rec = ds::ingest_measured_files(a.terrain, a.pathloss);
    em::RadioConfig base;
    base.n_points = static_cast<int>(rec.profile.size());
    base.rx_spacing_m = rec.profile.spacing_m;
    ds::DatasetHeader header;
    header.radio = a.radio.apply(base);
    header.generator.kind = tr::GeneratorTag::external;
    ds::write_records(a.out, header, {rec});

    cli::Manifest m{"ingest"};
    m.settings = {{"radio", ds::radio_to_json(header.radio)}};
    m.inputs = {a.terrain, a.pathloss};
    m.outputs = {a.out};
    m.write(cli::manifest_path(a.out));
    note(a.quiet, "ingest: wrote 1 measured record (" + std::to_string(rec.profile.size()) + " points) to " + a.out);
    return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Terrain radio-propagation lab: MoM path loss, U-Net surrogate, baselines, evaluation"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<cli::JsonConfig>(&app));
    app.set_config("--config", "", "JSON file of option values; explicit flags take precedence")->check(CLI::ExistingFile);
    app.fallthrough();
    app.set_version_flag("--version", TERRAINPROP_VERSION);

    TerrainArgs ta;
    auto* terrain = app.add_subcommand("terrain", "Generate a corpus of random terrain profiles (no path loss)");
    terrain->add_option("--kind", ta.kind, "Generator")->check(CLI::IsMember({"gp", "gaussian", "fractal"}))->capture_default_str();
    terrain->add_option("--rms", ta.rms, "GP rms height, m")->capture_default_str();
    terrain->add_option("--corr", ta.corr, "GP correlation length, m")->capture_default_str();
    terrain->add_option("--variance", ta.variance, "Fractal top-level displacement variance, m^2")->capture_default_str();
    terrain->add_option("--hurst", ta.hurst, "Fractal Hurst exponent")->capture_default_str();
    terrain->add_option("--n", ta.n, "Number of profiles")->required();
    terrain->add_option("--seed", ta.seed, "Base seed; record i uses seed + i")->capture_default_str();
    terrain->add_option("--points", ta.points, "Samples per profile")->capture_default_str();
    terrain->add_option("--spacing", ta.spacing, "Sample spacing, m")->capture_default_str();
    terrain->add_option("--out", ta.out, "Output dataset (.tpl)")->required();
    terrain->add_option("--jobs", ta.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    terrain->add_flag("--quiet", ta.quiet, "No progress output");

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "Solve every profile of a dataset for path loss");
    solve->add_option("--in", sa.in, "Input dataset")->required();
    solve->add_option("--out", sa.out, "Output dataset")->required();
    solve->add_option("--method", sa.method, "Solver")->check(CLI::IsMember({"exact", "faffa"}))->capture_default_str();
    sa.radio.add(solve);
    solve->add_option("--samples-per-lambda", sa.samples_per_lambda, "Unknowns per wavelength")->capture_default_str();
    solve->add_option("--translation", sa.translation, "FAFFA far-group translation")
        ->check(CLI::IsMember({"spreading", "phase"}))
        ->capture_default_str();
    solve->add_option("--groups-per-segment", sa.groups_per_segment, "FAFFA groups per segment (0 = automatic)")
        ->capture_default_str();
    solve->add_option("--max-group-wavelengths", sa.max_group_wavelengths, "Automatic group size limit, wavelengths")
        ->capture_default_str();
    solve->add_option("--near-factor", sa.near_factor, "Near-pair distance in group lengths")->capture_default_str();
    solve->add_option("--jobs", sa.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    solve->add_flag("--quiet", sa.quiet, "No progress output");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "Run the U-Net surrogate on a dataset's profiles");
    infer->add_option("--weights", ia.weights, "UNET1D01 weight file")->required();
    infer->add_option("--in", ia.in, "Input dataset")->required();
    infer->add_option("--out", ia.out, "Predictions CSV")->required();
    infer->add_flag("--with-uncertainty", ia.with_uncertainty, "Also write sigma (two-head models)");
    infer->add_option("--batch", ia.batch, "Profiles per forward batch")->capture_default_str();
    infer->add_option("--jobs", ia.jobs, "Threads per batch (0 = all cores)")->capture_default_str();
    infer->add_flag("--no-arch-check", ia.no_arch_check, "Accept graphs that differ from the reference U-Net");
    infer->add_flag("--quiet", ia.quiet, "No progress output");

    BaselineArgs ba;
    auto* baseline = app.add_subcommand("baseline", "Deygout knife-edge or flat-ground two-ray predictions");
    baseline->add_option("--in", ba.in, "Input dataset")->required();
    baseline->add_option("--model", ba.model, "Baseline model")->required()->check(CLI::IsMember({"deygout", "tworay"}));
    baseline->add_option("--out", ba.out, "Predictions CSV")->required();
    ba.radio.add(baseline);
    baseline->add_option("--edges", ba.edges, "Deygout edges (1 or 3)")->check(CLI::IsMember({1, 3}))->capture_default_str();
    baseline->add_option("--jobs", ba.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    baseline->add_flag("--quiet", ba.quiet, "No progress output");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Error statistics and plot data against reference path loss");
    eval->add_option("--pred", ea.preds, "Predictions, NAME=PATH (dataset or predictions CSV)")->required();
    eval->add_option("--ref", ea.refs, "Reference, NAME=PATH (dataset or predictions CSV)")->required();
    eval->add_option("--out-dir", ea.out_dir, "Directory for report and plot files")->required();
    eval->add_flag("--exclude-first", ea.exclude_first, "Mask the receiver at range 0");
    eval->add_option("--plot-record", ea.plot_record, "Record to plot")->capture_default_str();
    eval->add_flag("--quiet", ea.quiet, "No progress output");

    IngestArgs ga;
    auto* ingest = app.add_subcommand("ingest", "Convert measured terrain and path-gain tables to a dataset");
    ingest->add_option("--terrain", ga.terrain, "Two-column table: range m, height m")->required();
    ingest->add_option("--pathloss", ga.pathloss, "Two-column table: range m, path gain dB")->required();
    ingest->add_option("--out", ga.out, "Output dataset")->required();
    ga.radio.add(ingest);
    ingest->add_flag("--quiet", ga.quiet, "No progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        std::fprintf(stderr, "Run with --help for usage.\n");
        return cli::kExitUsage;
    }

    try {
        if (*terrain) return cmd_terrain(ta);
        if (*solve) return cmd_solve(sa);
        if (*infer) return cmd_infer(ia);
        if (*baseline) return cmd_baseline(ba);
        if (*eval) return cmd_eval(ea);
        if (*ingest) return cmd_ingest(ga);
    } catch (const cli::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kExitFailure;
    }
    return cli::kExitUsage;
}
