#pragma once

// Plumbing shared by the terrainprop subcommands: JSON config files, exit-code
// classification, path checks, run manifests, a parallel map and progress.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "terrainprop/binary_io.hpp"

namespace cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Bad arguments discovered after parsing; exits 2 like a parse error.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------- JSON config

/// CLI11 config adapter. Top-level keys name options of the subcommand being
/// run; a nested object keyed by a subcommand name targets that subcommand
/// only. Values from the file apply only where no flag was given.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        return j.dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        const CLI::App* sub = nullptr;
        if (const auto subs = root_->get_subcommands(); !subs.empty()) sub = subs.front();
        const std::string selected = sub ? sub->get_name() : "";

        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                if (root_->get_subcommand_no_throw(key) == nullptr) {
                    throw CLI::ConfigError("unknown config section '" + key + "'");
                }
                if (key != selected) continue;  // section for another subcommand
                for (const auto& [k2, v2] : value.items()) items.push_back(item(sub, k2, v2));
            } else {
                items.push_back(item(sub, key, value));
            }
        }
        return items;
    }

private:
    static std::string scalar(const std::string& key, const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("config key '" + key + "': unsupported value " + v.dump());
    }

    // Unknown keys are rejected just like unknown flags.
    static CLI::ConfigItem item(const CLI::App* sub, const std::string& key, const json& v) {
        const CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
        if (opt == nullptr || !opt->get_configurable()) throw CLI::ConfigError("unknown config key '" + key + "'");
        CLI::ConfigItem it;
        it.parents = {sub->get_name()};
        it.name = key;
        if (v.is_array()) {
            for (const auto& e : v) it.inputs.push_back(scalar(key, e));
        } else {
            it.inputs.push_back(scalar(key, v));
        }
        return it;
    }

    const CLI::App* root_;
};

// ---------------------------------------------------------------- paths

/// Inputs must exist and be regular files; checked before any work starts.
inline void require_input(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw std::runtime_error("input file not found: " + p.string());
}

/// The directory an output lands in must already exist.
inline void require_output_dir(const fs::path& p) {
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw std::runtime_error("output directory does not exist: " + dir.string());
    if (fs::is_directory(p, ec)) throw std::runtime_error("output path is a directory: " + p.string());
}

// ---------------------------------------------------------------- manifests

/// FNV-1a 64; identifies file contents in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline json file_entry(const fs::path& p) {
    const std::string bytes = terrainprop::io::read_file(p);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return {{"path", p.string()}, {"bytes", bytes.size()}, {"fnv1a64", hex}};
}

/// Everything needed to rerun a command; contains no timestamps or timings so
/// identical runs produce identical manifests.
struct Manifest {
    std::string command;
    json settings = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    json extra = json::object();

    [[nodiscard]] json to_json() const {
        json in = json::array(), out = json::array();
        for (const auto& p : inputs) in.push_back(file_entry(p));
        for (const auto& p : outputs) out.push_back(file_entry(p));
        json j = {{"tool", "terrainprop"},
                  {"version", TERRAINPROP_VERSION},
                  {"command", command},
                  {"settings", settings},
                  {"inputs", in},
                  {"outputs", out}};
        for (const auto& [k, v] : extra.items()) j[k] = v;
        return j;
    }

    void write(const fs::path& path) const { terrainprop::io::write_file_atomic(path, to_json().dump(2) + "\n"); }
};

/// `<output>.manifest.json`
inline fs::path manifest_path(const fs::path& output) {
    fs::path p = output;
    p += ".manifest.json";
    return p;
}

// ---------------------------------------------------------------- progress

class Progress {
public:
    Progress(std::string label, std::size_t total, bool quiet)
        : label_(std::move(label)), total_(total), quiet_(quiet) {}

    void tick() {
        const std::size_t done = ++done_;
        if (quiet_ || total_ == 0) return;
        const std::size_t step = done * 10 / total_;
        std::lock_guard lock(mutex_);
        if (step > last_step_ || done == total_) {
            last_step_ = step;
            std::fprintf(stderr, "%s: %zu/%zu\n", label_.c_str(), done, total_);
        }
    }

private:
    std::string label_;
    std::size_t total_;
    bool quiet_;
    std::atomic<std::size_t> done_{0};
    std::size_t last_step_ = 0;
    std::mutex mutex_;
};

// ---------------------------------------------------------------- parallel map

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Returns the error
/// message of each failed index (empty on success).
inline std::vector<std::string> parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                if (errors[i].empty()) errors[i] = "unknown error";
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return errors;
}

}  // namespace cli
