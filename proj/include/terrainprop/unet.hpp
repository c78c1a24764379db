#pragma once

// 1D U-Net inference from UNET1D01 weight files.
//
// File layout (little-endian):
//   "UNET1D01" | u32 version | u64 manifest_length | json manifest | float32 tensors
// Tensors follow manifest order (layer by layer, tensor by tensor), row-major.
//
// Activations are stored channel-major with the batch index innermost,
// (c, l, b) -> (c * L + l) * B + b, so every kernel streams over l*B
// contiguous floats and each output element is reduced in the same order
// whatever the batch size: batched and single forwards agree bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <exception>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#if defined(__FMA__) && defined(__AVX__)
#include <immintrin.h>
#endif

#include "binary_io.hpp"
#include "error.hpp"
#include "terrain.hpp"

namespace terrainprop::unet {

using json = nlohmann::json;

inline constexpr std::string_view kMagic = "UNET1D01";
inline constexpr std::uint32_t kVersion = 1;

enum class LayerKind : std::uint8_t {
    conv1d,
    batchnorm1d,
    relu,
    maxpool,
    upsample_linear,
    concat_skip,
    dropout,
    output_head,
};

inline std::string_view to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::batchnorm1d: return "batchnorm1d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::upsample_linear: return "upsample_linear";
        case LayerKind::concat_skip: return "concat_skip";
        case LayerKind::dropout: return "dropout";
        case LayerKind::output_head: return "output_head";
    }
    return "?";
}

inline std::optional<LayerKind> kind_from_string(std::string_view s) {
    for (auto k : {LayerKind::conv1d, LayerKind::batchnorm1d, LayerKind::relu, LayerKind::maxpool,
                   LayerKind::upsample_linear, LayerKind::concat_skip, LayerKind::dropout, LayerKind::output_head}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;

    [[nodiscard]] std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::relu;
    // conv1d / output_head
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 1;
    // batchnorm1d
    int channels = 0;
    double eps = 1e-5;
    // maxpool
    int pool = 2;
    // upsample_linear
    int scale = 2;
    bool align_corners = false;
    // dropout (inference: identity)
    double p = 0.0;
    // Any layer may publish its output as a skip; concat_skip consumes one.
    std::string save_as;
    std::string from;
    std::vector<Tensor> tensors;

    [[nodiscard]] const Tensor& tensor(std::string_view n) const {
        for (const auto& t : tensors) {
            if (t.name == n) return t;
        }
        throw ModelError(name, "missing tensor '" + std::string(n) + "'");
    }
    Tensor& tensor(std::string_view n) { return const_cast<Tensor&>(std::as_const(*this).tensor(n)); }
};

struct Metadata {
    int input_length = 256;
    double input_mean = 0.0;  // heights are standardized as (h - mean) / std
    double input_std = 1.0;
    json extra = json::object();  // unrecognized keys, preserved on save
};

struct UNetWeights {
    std::uint32_t version = kVersion;
    int heads = 1;
    Metadata metadata;
    std::vector<Layer> layers;
};

struct SurrogatePrediction {
    std::vector<double> mean_db;
    std::optional<std::vector<double>> sigma_db;
};

// ---------------------------------------------------------------- manifest

namespace detail {

inline std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const Layer& l) {
    const auto out = static_cast<std::size_t>(l.out_channels);
    const auto in = static_cast<std::size_t>(l.in_channels);
    const auto k = static_cast<std::size_t>(l.kernel_size);
    const auto c = static_cast<std::size_t>(l.channels);
    switch (l.kind) {
        case LayerKind::conv1d:
        case LayerKind::output_head: return {{"weight", {out, in, k}}, {"bias", {out}}};
        case LayerKind::batchnorm1d:
            return {{"weight", {c}}, {"bias", {c}}, {"running_mean", {c}}, {"running_var", {c}}};
        default: return {};
    }
}

inline json layer_to_json(const Layer& l) {
    json j = {{"name", l.name}, {"kind", to_string(l.kind)}};
    switch (l.kind) {
        case LayerKind::conv1d:
        case LayerKind::output_head:
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel_size"] = l.kernel_size;
            break;
        case LayerKind::batchnorm1d:
            j["channels"] = l.channels;
            j["eps"] = l.eps;
            break;
        case LayerKind::maxpool: j["kernel_size"] = l.pool; break;
        case LayerKind::upsample_linear:
            j["scale"] = l.scale;
            j["align_corners"] = l.align_corners;
            break;
        case LayerKind::concat_skip: j["from"] = l.from; break;
        case LayerKind::dropout: j["p"] = l.p; break;
        case LayerKind::relu: break;
    }
    if (!l.save_as.empty()) j["save_as"] = l.save_as;
    json tensors = json::array();
    for (const auto& t : l.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    j["tensors"] = tensors;
    return j;
}

inline Layer layer_from_json(const json& j, std::size_t index) {
    Layer l;
    l.name = j.value("name", "#" + std::to_string(index));
    const auto kind = kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw ModelError(l.name, "unknown kind '" + j.at("kind").get<std::string>() + "'");
    l.kind = *kind;
    switch (l.kind) {
        case LayerKind::conv1d:
        case LayerKind::output_head:
            l.in_channels = j.at("in_channels").get<int>();
            l.out_channels = j.at("out_channels").get<int>();
            l.kernel_size = j.at("kernel_size").get<int>();
            break;
        case LayerKind::batchnorm1d:
            l.channels = j.at("channels").get<int>();
            l.eps = j.value("eps", 1e-5);
            break;
        case LayerKind::maxpool: l.pool = j.value("kernel_size", 2); break;
        case LayerKind::upsample_linear:
            l.scale = j.value("scale", 2);
            l.align_corners = j.value("align_corners", false);
            break;
        case LayerKind::concat_skip: l.from = j.at("from").get<std::string>(); break;
        case LayerKind::dropout: l.p = j.value("p", 0.0); break;
        case LayerKind::relu: break;
    }
    l.save_as = j.value("save_as", "");
    for (const auto& t : j.value("tensors", json::array())) {
        l.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>(), {}});
    }
    return l;
}

}  // namespace detail

inline json manifest(const UNetWeights& w) {
    json meta = w.metadata.extra;
    meta["input_length"] = w.metadata.input_length;
    meta["input_mean"] = w.metadata.input_mean;
    meta["input_std"] = w.metadata.input_std;
    json layers = json::array();
    for (const auto& l : w.layers) layers.push_back(detail::layer_to_json(l));
    return {{"format", kMagic}, {"heads", w.heads}, {"metadata", meta}, {"layers", layers}};
}

// ---------------------------------------------------------------- validation

/// Checks the layer graph: attributes, tensor shapes against attributes,
/// channel chaining from a 1-channel input, skip wiring, finite values and
/// positive running variances. Errors name the offending layer.
inline void validate(const UNetWeights& w) {
    if (w.heads != 1 && w.heads != 2) throw ModelError("<model>", "heads must be 1 or 2");
    if (w.metadata.input_length < 1) throw ModelError("<model>", "input_length must be positive");
    if (!(w.metadata.input_std > 0.0) || !std::isfinite(w.metadata.input_mean)) {
        throw ModelError("<model>", "input standardization needs finite mean and std > 0");
    }
    if (w.layers.empty() || w.layers.back().kind != LayerKind::output_head) {
        throw ModelError(w.layers.empty() ? "<model>" : w.layers.back().name, "last layer must be output_head");
    }
    std::map<std::string, std::pair<int, int>> skips;  // name -> (channels, length)
    int channels = 1;
    int length = w.metadata.input_length;
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const Layer& l = w.layers[i];
        const auto fail = [&](const std::string& what) { throw ModelError(l.name, what); };
        if (l.kind == LayerKind::output_head && i + 1 != w.layers.size()) fail("output_head must be the last layer");
        const auto expected = detail::expected_tensors(l);
        if (l.tensors.size() != expected.size()) {
            fail("expected " + std::to_string(expected.size()) + " tensors, manifest lists " +
                 std::to_string(l.tensors.size()));
        }
        for (std::size_t t = 0; t < expected.size(); ++t) {
            const Tensor& tensor = l.tensors[t];
            if (tensor.name != expected[t].first) {
                fail("tensor " + std::to_string(t) + " should be '" + expected[t].first + "', got '" + tensor.name + "'");
            }
            if (tensor.shape != expected[t].second) fail("tensor '" + tensor.name + "' has a shape inconsistent with the layer");
            if (tensor.data.size() != tensor.numel()) fail("tensor '" + tensor.name + "' holds the wrong number of values");
            for (float v : tensor.data) {
                if (!std::isfinite(v)) fail("tensor '" + tensor.name + "' holds a non-finite value");
            }
        }
        switch (l.kind) {
            case LayerKind::conv1d:
            case LayerKind::output_head:
                if (l.in_channels != channels) {
                    fail("in_channels " + std::to_string(l.in_channels) + " but the incoming activation has " +
                         std::to_string(channels));
                }
                if (l.out_channels < 1) fail("out_channels must be positive");
                if (l.kernel_size < 1 || l.kernel_size % 2 == 0) fail("kernel_size must be odd for same padding");
                if (l.kind == LayerKind::output_head && l.out_channels != w.heads) {
                    fail("output_head has " + std::to_string(l.out_channels) + " channels for " +
                         std::to_string(w.heads) + " heads");
                }
                channels = l.out_channels;
                break;
            case LayerKind::batchnorm1d:
                if (l.channels != channels) fail("channels do not match the incoming activation");
                if (!(l.eps >= 0.0)) fail("eps must be >= 0");
                for (float v : l.tensor("running_var").data) {
                    if (!(v > 0.0f)) fail("running_var must be > 0");
                }
                break;
            case LayerKind::maxpool:
                if (l.pool != 2) fail("only kernel_size 2 pooling is supported");
                if (length % 2 != 0) fail("odd length " + std::to_string(length) + " cannot be pooled");
                length /= 2;
                break;
            case LayerKind::upsample_linear:
                if (l.scale != 2) fail("only scale 2 upsampling is supported");
                length *= 2;
                break;
            case LayerKind::concat_skip: {
                const auto it = skips.find(l.from);
                if (it == skips.end()) fail("skip '" + l.from + "' was not saved by an earlier layer");
                if (it->second.second != length) {
                    fail("skip '" + l.from + "' has length " + std::to_string(it->second.second) + ", activation has " +
                         std::to_string(length));
                }
                channels += it->second.first;
                break;
            }
            case LayerKind::dropout:
                if (!(l.p >= 0.0 && l.p < 1.0)) fail("dropout p must lie in [0, 1)");
                break;
            case LayerKind::relu: break;
        }
        if (!l.save_as.empty()) {
            if (!skips.emplace(l.save_as, std::pair{channels, length}).second) fail("duplicate skip '" + l.save_as + "'");
        }
    }
    if (length != w.metadata.input_length) {
        throw ModelError(w.layers.back().name, "output length " + std::to_string(length) + " differs from input length");
    }
}

inline constexpr int kReferenceWidths[5] = {16, 32, 64, 128, 256};

/// Reference architecture: four max-pool stages, encoder/bottleneck widths
/// 16-32-64-128-256, kernel 11 on the first two convolutions and 3 elsewhere,
/// 1x1 output head, skips consumed in reverse order of saving with matching
/// depth.
inline void check_architecture(const UNetWeights& w) {
    std::vector<int> stage_widths;
    std::vector<std::string> saved;
    int last_conv_width = 0;
    int n_conv = 0, n_pool = 0, n_up = 0;
    bool decoding = false;
    for (const auto& l : w.layers) {
        switch (l.kind) {
            case LayerKind::conv1d: {
                const int want = n_conv < 2 ? 11 : 3;
                if (l.kernel_size != want) {
                    throw ModelError(l.name, "kernel_size " + std::to_string(l.kernel_size) + ", architecture needs " +
                                                 std::to_string(want));
                }
                ++n_conv;
                last_conv_width = l.out_channels;
                break;
            }
            case LayerKind::output_head:
                if (l.kernel_size != 1) throw ModelError(l.name, "output head must be a 1x1 convolution");
                break;
            case LayerKind::maxpool:
                if (decoding) throw ModelError(l.name, "pooling after the first upsampling");
                stage_widths.push_back(last_conv_width);
                ++n_pool;
                break;
            case LayerKind::upsample_linear:
                if (!decoding) stage_widths.push_back(last_conv_width);
                decoding = true;
                ++n_up;
                break;
            case LayerKind::concat_skip:
                if (saved.empty() || saved.back() != l.from) {
                    throw ModelError(l.name, "skip '" + l.from + "' does not mirror the encoder depth");
                }
                saved.pop_back();
                break;
            default: break;
        }
        if (!l.save_as.empty()) {
            if (decoding) throw ModelError(l.name, "decoder layers must not publish skips");
            saved.push_back(l.save_as);
        }
    }
    const std::string model = "<model>";
    if (n_pool != 4 || n_up != 4) {
        throw ModelError(model, "needs 4 pooling and 4 upsampling stages, found " + std::to_string(n_pool) + " and " +
                                    std::to_string(n_up));
    }
    if (!saved.empty()) throw ModelError(model, "skip '" + saved.back() + "' is never consumed");
    for (int s = 0; s < 5; ++s) {
        if (stage_widths[static_cast<std::size_t>(s)] != kReferenceWidths[s]) {
            throw ModelError(model, "stage " + std::to_string(s + 1) + " width " +
                                        std::to_string(stage_widths[static_cast<std::size_t>(s)]) + ", architecture needs " +
                                        std::to_string(kReferenceWidths[s]));
        }
    }
}

// ---------------------------------------------------------------- I/O

inline std::string encode(const UNetWeights& w) {
    validate(w);
    const std::string meta = manifest(w).dump();
    io::ByteWriter out;
    out.raw(kMagic);
    out.u32(w.version);
    out.u64(meta.size());
    out.raw(meta);
    for (const auto& l : w.layers) {
        for (const auto& t : l.tensors) {
            for (float v : t.data) out.f32(v);
        }
    }
    return out.bytes();
}

inline void save_weights(const std::filesystem::path& path, const UNetWeights& w) {
    io::write_file_atomic(path, encode(w));
}

struct LoadOptions {
    bool check_architecture = true;
};

inline UNetWeights decode(std::string_view bytes, const LoadOptions& opts = {}) {
    io::ByteReader in(bytes);
    if (in.raw(std::min<std::size_t>(8, bytes.size()), "magic") != kMagic) {
        throw FormatError("bad magic, expected UNET1D01", 0);
    }
    UNetWeights w;
    const std::size_t version_at = in.offset();
    w.version = in.u32("version");
    if (w.version != kVersion) throw FormatError("unsupported version " + std::to_string(w.version), version_at);
    const auto length = in.u64("manifest length");
    const std::size_t manifest_at = in.offset();
    const auto text = in.raw(length, "manifest");
    json m;
    try {
        m = json::parse(text);
        if (m.at("format").get<std::string>() != kMagic) throw std::runtime_error("format field is not UNET1D01");
        w.heads = m.at("heads").get<int>();
        json meta = m.at("metadata");
        w.metadata.input_length = meta.at("input_length").get<int>();
        w.metadata.input_mean = meta.value("input_mean", 0.0);
        w.metadata.input_std = meta.value("input_std", 1.0);
        for (const char* key : {"input_length", "input_mean", "input_std"}) meta.erase(key);
        w.metadata.extra = meta;
        const auto& layers = m.at("layers");
        for (std::size_t i = 0; i < layers.size(); ++i) w.layers.push_back(detail::layer_from_json(layers[i], i));
    } catch (const ModelError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("bad manifest: ") + e.what(), manifest_at);
    }
    for (auto& l : w.layers) {
        for (auto& t : l.tensors) {
            const std::size_t n = t.numel();
            if (in.remaining() / 4 < n) {
                throw FormatError("layer '" + l.name + "': tensor '" + t.name + "' truncated, needs " +
                                      std::to_string(4 * n) + " bytes, " + std::to_string(in.remaining()) + " left",
                                  in.offset());
            }
            t.data.resize(n);
            for (auto& v : t.data) v = in.f32("tensor");
        }
    }
    if (!in.at_end()) throw FormatError(std::to_string(in.remaining()) + " trailing bytes after the last tensor", in.offset());
    validate(w);
    if (opts.check_architecture) check_architecture(w);
    return w;
}

inline UNetWeights load_weights(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    return decode(io::read_file(path), opts);
}

// ---------------------------------------------------------------- builders

/// The reference architecture with every conv weight and bias zero, batch
/// norm as identity (gamma 1, beta 0, mean 0, var 1) and the given output
/// biases (one per head). Dropout layers sit after the 3rd and 4th pooling
/// and after the first upsampling.
inline UNetWeights reference_unet(int heads, std::span<const double> output_bias, double dropout_p = 0.5) {
    if (heads != 1 && heads != 2) throw DomainError("reference_unet: heads must be 1 or 2");
    if (output_bias.size() != static_cast<std::size_t>(heads)) throw DomainError("reference_unet: one bias per head");
    UNetWeights w;
    w.heads = heads;
    int channels = 1;
    auto conv = [&](const std::string& name, int out, int k) {
        Layer l{.name = name, .kind = LayerKind::conv1d, .in_channels = channels, .out_channels = out, .kernel_size = k};
        l.tensors = {{"weight", {std::size_t(out), std::size_t(channels), std::size_t(k)},
                      std::vector<float>(std::size_t(out * channels * k), 0.0f)},
                     {"bias", {std::size_t(out)}, std::vector<float>(std::size_t(out), 0.0f)}};
        w.layers.push_back(std::move(l));
        channels = out;
        Layer bn{.name = name + ".bn", .kind = LayerKind::batchnorm1d, .channels = out};
        const auto c = std::size_t(out);
        bn.tensors = {{"weight", {c}, std::vector<float>(c, 1.0f)},
                      {"bias", {c}, std::vector<float>(c, 0.0f)},
                      {"running_mean", {c}, std::vector<float>(c, 0.0f)},
                      {"running_var", {c}, std::vector<float>(c, 1.0f)}};
        w.layers.push_back(std::move(bn));
        w.layers.push_back({.name = name + ".relu", .kind = LayerKind::relu});
    };
    auto simple = [&](std::string name, LayerKind kind) {
        Layer l{.name = std::move(name), .kind = kind};
        if (kind == LayerKind::dropout) l.p = dropout_p;
        w.layers.push_back(std::move(l));
    };
    bool first = true;
    for (int s = 0; s < 4; ++s) {
        const std::string stage = "down" + std::to_string(s + 1);
        const int k = first ? 11 : 3;
        first = false;
        conv(stage + ".conv1", kReferenceWidths[s], k);
        conv(stage + ".conv2", kReferenceWidths[s], k);
        w.layers.back().save_as = "skip" + std::to_string(s + 1);
        simple(stage + ".pool", LayerKind::maxpool);
        if (s >= 2) simple(stage + ".dropout", LayerKind::dropout);
    }
    conv("bottleneck.conv1", kReferenceWidths[4], 3);
    conv("bottleneck.conv2", kReferenceWidths[4], 3);
    for (int s = 3; s >= 0; --s) {
        const std::string stage = "up" + std::to_string(4 - s);
        simple(stage + ".upsample", LayerKind::upsample_linear);
        if (s == 3) simple(stage + ".dropout", LayerKind::dropout);
        w.layers.push_back({.name = stage + ".concat", .kind = LayerKind::concat_skip, .from = "skip" + std::to_string(s + 1)});
        channels += kReferenceWidths[s];
        conv(stage + ".conv1", kReferenceWidths[s], 3);
        conv(stage + ".conv2", kReferenceWidths[s], 3);
    }
    Layer head{.name = "head", .kind = LayerKind::output_head, .in_channels = channels, .out_channels = heads, .kernel_size = 1};
    std::vector<float> bias;
    for (double b : output_bias) bias.push_back(static_cast<float>(b));
    head.tensors = {{"weight", {std::size_t(heads), std::size_t(channels), 1}, std::vector<float>(std::size_t(heads * channels), 0.0f)},
                    {"bias", {std::size_t(heads)}, bias}};
    w.layers.push_back(std::move(head));
    validate(w);
    return w;
}

/// Fills conv weights with He-scaled normals and batch-norm statistics with
/// plausible random values; biases of the output head are kept.
inline void randomize(UNetWeights& w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::uniform_real_distribution<float> uniform(0.5f, 1.5f);
    for (auto& l : w.layers) {
        if (l.kind == LayerKind::conv1d || l.kind == LayerKind::output_head) {
            const float scale = std::sqrt(2.0f / static_cast<float>(l.in_channels * l.kernel_size));
            for (auto& v : l.tensor("weight").data) v = scale * normal(rng);
            if (l.kind == LayerKind::conv1d) {
                for (auto& v : l.tensor("bias").data) v = 0.1f * normal(rng);
            }
        } else if (l.kind == LayerKind::batchnorm1d) {
            for (auto& v : l.tensor("weight").data) v = uniform(rng);
            for (auto& v : l.tensor("bias").data) v = 0.1f * normal(rng);
            for (auto& v : l.tensor("running_mean").data) v = 0.1f * normal(rng);
            for (auto& v : l.tensor("running_var").data) v = uniform(rng);
        }
    }
}

// ---------------------------------------------------------------- engine

/// Activation block: C channels x L positions x B samples, batch innermost.
struct Activation {
    int channels = 0;
    int length = 0;
    int batch = 0;
    std::vector<float> data;

    float* row(int c) { return data.data() + static_cast<std::size_t>(c) * length * batch; }
    [[nodiscard]] const float* row(int c) const { return data.data() + static_cast<std::size_t>(c) * length * batch; }
    [[nodiscard]] float at(int c, int l, int b) const {
        return data[(static_cast<std::size_t>(c) * length + l) * batch + b];
    }
};

namespace detail {

inline Activation make(int c, int l, int b) {
    return {c, l, b, std::vector<float>(static_cast<std::size_t>(c) * l * b, 0.0f)};
}

// y[o] = bias[o] + sum_c sum_t W[o,c,t] x[c, l + t - pad], zero padded.
//
// Register-tiled: a 4-row x 24-column block of y lives in registers for the
// whole (c, t) reduction. Rows and columns are padded so every element goes
// through the same instruction sequence, and the per-element order (bias,
// then c ascending, then t ascending) does not depend on the batch size.
namespace kernel {

constexpr int kRows = 4;
constexpr int kLanes = 8;
constexpr int kVecs = 3;
constexpr int kTile = kLanes * kVecs;

using Vec = float __attribute__((vector_size(32)));

inline Vec load(const float* p) {
    Vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline Vec splat(float s) { return Vec{s, s, s, s, s, s, s, s}; }

inline Vec madd(Vec a, Vec b, Vec c) {
#if defined(__FMA__) && defined(__AVX__)
    return reinterpret_cast<Vec>(_mm256_fmadd_ps(reinterpret_cast<__m256>(a), reinterpret_cast<__m256>(b),
                                                 reinterpret_cast<__m256>(c)));
#else
    return a * b + c;
#endif
}

}  // namespace kernel

inline Activation conv(const Layer& layer, const Activation& x) {
    using namespace kernel;
    const int out = layer.out_channels, in = layer.in_channels, k = layer.kernel_size;
    const int pad = (k - 1) / 2;
    const int L = x.length, B = x.batch;
    const auto& weight = layer.tensor("weight").data;
    const auto& bias = layer.tensor("bias").data;

    const auto row_len = static_cast<std::ptrdiff_t>(L) * B;
    const int taps = in * k;
    const std::vector<float> zero_row(static_cast<std::size_t>(taps), 0.0f);
    // One column tile of the shifted inputs, (c, t)-major: packed[(c*k + t)*kTile + i].
    std::vector<float> packed(static_cast<std::size_t>(taps) * kTile);

    Activation y = make(out, L, B);
    for (std::ptrdiff_t j0 = 0; j0 < row_len; j0 += kTile) {
        const auto n_store = static_cast<std::size_t>(std::min<std::ptrdiff_t>(kTile, row_len - j0));
        for (int c = 0; c < in; ++c) {
            const float* xr = x.row(c);
            for (int t = 0; t < k; ++t) {
                float* dst = packed.data() + static_cast<std::size_t>(c * k + t) * kTile;
                const std::ptrdiff_t src = j0 + static_cast<std::ptrdiff_t>(t - pad) * B;
                // Valid i: 0 <= src + i < row_len and j0 + i < row_len.
                const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-src, 0, kTile);
                const std::ptrdiff_t hi = std::max(lo, std::min<std::ptrdiff_t>({kTile, row_len - src, row_len - j0}));
                std::fill(dst, dst + lo, 0.0f);
                std::copy(xr + src + lo, xr + src + hi, dst + lo);
                std::fill(dst + hi, dst + kTile, 0.0f);
            }
        }
        for (int o0 = 0; o0 < out; o0 += kRows) {
            const float* w[kRows];
            Vec acc[kRows][kVecs];
            for (int q = 0; q < kRows; ++q) {
                const bool live = o0 + q < out;
                w[q] = live ? weight.data() + static_cast<std::size_t>(o0 + q) * taps : zero_row.data();
                const Vec b0 = splat(live ? bias[static_cast<std::size_t>(o0 + q)] : 0.0f);
                for (int v = 0; v < kVecs; ++v) acc[q][v] = b0;
            }
            const float* xs = packed.data();
            for (int ct = 0; ct < taps; ++ct, xs += kTile) {
                Vec xv[kVecs];
                for (int v = 0; v < kVecs; ++v) xv[v] = load(xs + v * kLanes);
                for (int q = 0; q < kRows; ++q) {
                    const Vec wv = splat(w[q][ct]);
                    for (int v = 0; v < kVecs; ++v) acc[q][v] = madd(wv, xv[v], acc[q][v]);
                }
            }
            for (int q = 0; q < kRows && o0 + q < out; ++q) {
                float tile[kTile];
                std::memcpy(tile, acc[q], sizeof tile);
                std::copy_n(tile, n_store, y.row(o0 + q) + j0);
            }
        }
    }
    return y;
}

inline void batchnorm(const Layer& layer, Activation& x) {
    const auto& gamma = layer.tensor("weight").data;
    const auto& beta = layer.tensor("bias").data;
    const auto& mean = layer.tensor("running_mean").data;
    const auto& var = layer.tensor("running_var").data;
    const std::size_t n = static_cast<std::size_t>(x.length) * x.batch;
    for (int c = 0; c < x.channels; ++c) {
        const auto i = static_cast<std::size_t>(c);
        const double scale = gamma[i] / std::sqrt(static_cast<double>(var[i]) + layer.eps);
        const auto a = static_cast<float>(scale);
        const auto b = static_cast<float>(beta[i] - mean[i] * scale);
        float* r = x.row(c);
        for (std::size_t j = 0; j < n; ++j) r[j] = r[j] * a + b;
    }
}

inline Activation maxpool(const Activation& x) {
    Activation y = make(x.channels, x.length / 2, x.batch);
    const int B = x.batch;
    for (int c = 0; c < x.channels; ++c) {
        const float* xr = x.row(c);
        float* yr = y.row(c);
        for (int l = 0; l < y.length; ++l) {
            const float* a = xr + static_cast<std::size_t>(2 * l) * B;
            const float* b = a + B;
            float* d = yr + static_cast<std::size_t>(l) * B;
            for (int s = 0; s < B; ++s) d[s] = std::max(a[s], b[s]);
        }
    }
    return y;
}

// Linear interpolation by 2 with PyTorch's source-index convention.
inline Activation upsample(const Layer& layer, const Activation& x) {
    const int L = x.length, out_len = 2 * L, B = x.batch;
    Activation y = make(x.channels, out_len, B);
    std::vector<int> i0(static_cast<std::size_t>(out_len)), i1(i0.size());
    std::vector<float> w1(i0.size());
    for (int i = 0; i < out_len; ++i) {
        float src;
        if (layer.align_corners) {
            src = out_len > 1 ? static_cast<float>(L - 1) / static_cast<float>(out_len - 1) * static_cast<float>(i) : 0.0f;
        } else {
            src = std::max(0.0f, 0.5f * (static_cast<float>(i) + 0.5f) - 0.5f);
        }
        const int lo = std::min(static_cast<int>(src), L - 1);
        const auto u = static_cast<std::size_t>(i);
        i0[u] = lo;
        i1[u] = std::min(lo + 1, L - 1);
        w1[u] = src - static_cast<float>(lo);
    }
    for (int c = 0; c < x.channels; ++c) {
        const float* xr = x.row(c);
        float* yr = y.row(c);
        for (int i = 0; i < out_len; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const float* a = xr + static_cast<std::size_t>(i0[u]) * B;
            const float* b = xr + static_cast<std::size_t>(i1[u]) * B;
            const float lam1 = w1[u], lam0 = 1.0f - lam1;
            float* d = yr + u * B;
            for (int s = 0; s < B; ++s) d[s] = lam0 * a[s] + lam1 * b[s];
        }
    }
    return y;
}

// Skip channels first, as in torch.cat([skip, x], dim=1).
inline Activation concat(const Activation& skip, const Activation& x) {
    Activation y{skip.channels + x.channels, x.length, x.batch, {}};
    y.data.reserve(skip.data.size() + x.data.size());
    y.data.insert(y.data.end(), skip.data.begin(), skip.data.end());
    y.data.insert(y.data.end(), x.data.begin(), x.data.end());
    return y;
}

}  // namespace detail

struct TraceEntry {
    std::string layer;
    Activation activation;
};

/// Runs the graph on a batch of height vectors. `trace`, when given,
/// receives the output of every layer.
inline Activation run(const UNetWeights& w, std::span<const std::vector<double>> heights,
                      std::vector<TraceEntry>* trace = nullptr) {
    if (heights.empty()) throw DomainError("forward_batch: empty batch");
    const int L = w.metadata.input_length;
    const int B = static_cast<int>(heights.size());
    Activation x = detail::make(1, L, B);
    for (int b = 0; b < B; ++b) {
        const auto& h = heights[static_cast<std::size_t>(b)];
        if (h.size() != static_cast<std::size_t>(L)) {
            throw DomainError("forward: profile " + std::to_string(b) + " has " + std::to_string(h.size()) +
                              " points, model expects " + std::to_string(L));
        }
        for (int l = 0; l < L; ++l) {
            x.data[static_cast<std::size_t>(l) * B + b] =
                static_cast<float>((h[static_cast<std::size_t>(l)] - w.metadata.input_mean) / w.metadata.input_std);
        }
    }
    std::map<std::string, Activation> skips;
    for (const auto& layer : w.layers) {
        switch (layer.kind) {
            case LayerKind::conv1d:
            case LayerKind::output_head: x = detail::conv(layer, x); break;
            case LayerKind::batchnorm1d: detail::batchnorm(layer, x); break;
            case LayerKind::relu:
                for (auto& v : x.data) v = std::max(v, 0.0f);
                break;
            case LayerKind::maxpool: x = detail::maxpool(x); break;
            case LayerKind::upsample_linear: x = detail::upsample(layer, x); break;
            case LayerKind::concat_skip: x = detail::concat(skips.at(layer.from), x); break;
            case LayerKind::dropout: break;
        }
        if (!layer.save_as.empty()) skips[layer.save_as] = x;
        if (trace) trace->push_back({layer.name, x});
    }
    return x;
}

inline std::vector<SurrogatePrediction> predictions_from(const UNetWeights& w, const Activation& out) {
    std::vector<SurrogatePrediction> preds(static_cast<std::size_t>(out.batch));
    for (int b = 0; b < out.batch; ++b) {
        auto& p = preds[static_cast<std::size_t>(b)];
        p.mean_db.resize(static_cast<std::size_t>(out.length));
        for (int l = 0; l < out.length; ++l) p.mean_db[static_cast<std::size_t>(l)] = out.at(0, l, b);
        if (w.heads == 2) {
            std::vector<double> sigma(static_cast<std::size_t>(out.length));
            for (int l = 0; l < out.length; ++l) {
                // The clamp only guards the exponent: sigma stays finite and positive.
                const double logvar = std::clamp(static_cast<double>(out.at(1, l, b)), -600.0, 600.0);
                sigma[static_cast<std::size_t>(l)] = std::exp(0.5 * logvar);
            }
            p.sigma_db = std::move(sigma);
        }
    }
    return preds;
}

/// Batched inference. Samples are processed in chunks of `chunk`, each chunk
/// split across up to `threads` workers (0 = hardware concurrency). Results
/// do not depend on either.
inline std::vector<SurrogatePrediction> forward_batch(const UNetWeights& w,
                                                      std::span<const terrain::TerrainProfile> profiles,
                                                      std::size_t chunk = 128, unsigned threads = 0) {
    if (profiles.empty()) throw DomainError("forward_batch: empty batch");
    chunk = std::max<std::size_t>(chunk, 1);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SurrogatePrediction> out(profiles.size());
    auto run_range = [&](std::size_t start, std::size_t stop) {
        std::vector<std::vector<double>> heights;
        for (std::size_t i = start; i < stop; ++i) heights.push_back(profiles[i].heights_m);
        auto preds = predictions_from(w, run(w, heights));
        std::move(preds.begin(), preds.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
    };
    for (std::size_t start = 0; start < profiles.size(); start += chunk) {
        const std::size_t stop = std::min(profiles.size(), start + chunk);
        const std::size_t parts = std::min<std::size_t>(threads, stop - start);
        if (parts <= 1) {
            run_range(start, stop);
            continue;
        }
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(parts);
        const std::size_t per = (stop - start + parts - 1) / parts;
        for (std::size_t p = 0; p < parts; ++p) {
            const std::size_t a = start + p * per, b = std::min(stop, a + per);
            if (a >= b) break;
            pool.emplace_back([&, p, a, b] {
                try {
                    run_range(a, b);
                } catch (...) {
                    errors[p] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return out;
}

inline SurrogatePrediction forward(const UNetWeights& w, const terrain::TerrainProfile& profile) {
    return forward_batch(w, std::span(&profile, 1), 1, 1).front();
}

/// Single-profile forward that also returns every layer's output (batch of 1).
inline std::vector<TraceEntry> forward_traced(const UNetWeights& w, const std::vector<double>& heights) {
    std::vector<TraceEntry> trace;
    run(w, std::span(&heights, 1), &trace);
    return trace;
}

}  // namespace terrainprop::unet
