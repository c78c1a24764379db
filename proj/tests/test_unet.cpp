#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <json.hpp>

#include "terrainprop/unet.hpp"

namespace tp = terrainprop;
namespace un = terrainprop::unet;
namespace tr = terrainprop::terrain;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = TERRAINPROP_FIXTURE_DIR;

std::vector<tr::TerrainProfile> random_profiles(std::size_t count, std::uint64_t seed) {
    std::vector<tr::TerrainProfile> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(tr::gen_gaussian({20.0, 800.0}, 256, 50.0, seed + i));
    return out;
}

un::UNetWeights random_two_head(std::uint64_t seed) {
    const double bias[] = {-134.0, 0.0};
    auto w = un::reference_unet(2, bias);
    un::randomize(w, seed);
    return w;
}

std::string expect_format_error(const std::string& bytes) {
    try {
        un::decode(bytes);
    } catch (const tp::FormatError& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected FormatError";
    return {};
}

}  // namespace

TEST(UNet, ZeroWeightsGiveConstantOutputBias) {
    const double bias[] = {-134.0};
    const auto w = un::reference_unet(1, bias);
    for (const auto& p : random_profiles(3, 10)) {
        const auto pred = un::forward(w, p);
        ASSERT_EQ(pred.mean_db.size(), 256u);
        for (double v : pred.mean_db) EXPECT_EQ(v, -134.0);
        EXPECT_FALSE(pred.sigma_db.has_value());
    }
}

TEST(UNet, TwoHeadSigmaIsPositive) {
    const double bias[] = {-134.0, 0.0};
    const auto zero = un::reference_unet(2, bias);
    const auto pred = un::forward(zero, random_profiles(1, 3)[0]);
    ASSERT_TRUE(pred.sigma_db.has_value());
    for (double s : *pred.sigma_db) EXPECT_EQ(s, 1.0);

    const auto w = random_two_head(4);
    auto extreme = random_profiles(1, 5)[0];
    for (auto& h : extreme.heights_m) h *= 500.0;
    for (const auto& p : {random_profiles(1, 6)[0], extreme}) {
        const auto r = un::forward(w, p);
        for (double s : *r.sigma_db) {
            EXPECT_GT(s, 0.0);
            EXPECT_TRUE(std::isfinite(s));
        }
    }
}

TEST(UNet, BatchMatchesSingleExactly) {
    const auto w = random_two_head(8);
    const auto profiles = random_profiles(7, 20);
    const auto batch = un::forward_batch(w, profiles);
    const auto chunked = un::forward_batch(w, profiles, 3);
    const auto threaded = un::forward_batch(w, profiles, 128, 4);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto single = un::forward(w, profiles[i]);
        EXPECT_EQ(batch[i].mean_db, single.mean_db);
        EXPECT_EQ(*batch[i].sigma_db, *single.sigma_db);
        EXPECT_EQ(chunked[i].mean_db, single.mean_db);
        EXPECT_EQ(threaded[i].mean_db, single.mean_db);
        EXPECT_EQ(*threaded[i].sigma_db, *single.sigma_db);
    }
    const std::vector<tr::TerrainProfile> repeated(128, profiles[0]);
    const auto rows = un::forward_batch(w, repeated);
    for (const auto& r : rows) EXPECT_EQ(r.mean_db, rows[0].mean_db);
    EXPECT_EQ(un::forward(w, profiles[0]).mean_db, un::forward(w, profiles[0]).mean_db);
}

TEST(UNet, RejectsBadInputs) {
    const auto w = random_two_head(1);
    tr::TerrainProfile short_profile{std::vector<double>(100, 0.0), 50.0, 0, tr::GeneratorTag::external};
    EXPECT_THROW(un::forward(w, short_profile), tp::DomainError);
    EXPECT_THROW(un::forward_batch(w, std::vector<tr::TerrainProfile>{}), tp::DomainError);
}

TEST(UNetFormat, RoundTrip) {
    auto w = random_two_head(2);
    w.metadata.input_mean = 4.0;
    w.metadata.input_std = 19.0;
    w.metadata.extra["note"] = "kept";
    const auto path = std::filesystem::temp_directory_path() / "terrainprop_unet_roundtrip.bin";
    un::save_weights(path, w);
    const auto back = un::load_weights(path);
    EXPECT_EQ(back.layers.size(), w.layers.size());
    EXPECT_EQ(back.heads, 2);
    EXPECT_EQ(back.metadata.extra.at("note"), "kept");
    EXPECT_EQ(un::encode(back), un::encode(w));
    const auto p = random_profiles(1, 30)[0];
    EXPECT_EQ(un::forward(back, p).mean_db, un::forward(w, p).mean_db);
}

TEST(UNetFormat, TruncatedTensorNamesTheLayer) {
    const std::string bytes = un::encode(random_two_head(3));
    const auto msg = expect_format_error(bytes.substr(0, bytes.size() - 100));
    EXPECT_NE(msg.find("layer 'head'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'weight'"), std::string::npos) << msg;
    expect_format_error(bytes + "xxxx");
}

TEST(UNetFormat, RejectsBadMagicVersionAndManifest) {
    const std::string bytes = un::encode(random_two_head(3));
    auto bad = bytes;
    bad[0] = 'X';
    expect_format_error(bad);
    expect_format_error(bytes.substr(0, 5));
    bad = bytes;
    bad[8] = 2;
    expect_format_error(bad);
    bad = bytes;
    bad[20] = '}';
    expect_format_error(bad);
}

TEST(UNetFormat, ShapeErrorsNameTheLayer) {
    auto w = random_two_head(5);
    w.layers[3].in_channels = 5;  // down1.conv2
    try {
        un::validate(w);
        FAIL();
    } catch (const tp::ModelError& e) {
        EXPECT_EQ(e.layer(), "down1.conv2");
    }

    w = random_two_head(5);
    w.layers[1].tensor("running_var").data[2] = 0.0f;
    try {
        un::validate(w);
        FAIL();
    } catch (const tp::ModelError& e) {
        EXPECT_EQ(e.layer(), "down1.conv1.bn");
    }

    w = random_two_head(5);
    w.layers[0].tensor("bias").data[0] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(un::validate(w), tp::ModelError);

    w = random_two_head(5);
    w.heads = 1;
    EXPECT_THROW(un::validate(w), tp::ModelError);

    // Tensor shape in the manifest disagreeing with the layer attributes.
    w = random_two_head(5);
    w.layers[0].tensors[0].shape = {16, 1, 9};
    w.layers[0].tensors[0].data.resize(16 * 9);
    EXPECT_THROW(un::validate(w), tp::ModelError);
}

TEST(UNetArchitecture, ReferenceConforms) {
    const double bias[] = {-134.0};
    EXPECT_NO_THROW(un::check_architecture(un::reference_unet(1, bias)));
    const auto w = un::reference_unet(1, bias);
    int pools = 0, dropouts = 0;
    for (const auto& l : w.layers) {
        pools += l.kind == un::LayerKind::maxpool;
        dropouts += l.kind == un::LayerKind::dropout;
    }
    EXPECT_EQ(pools, 4);
    EXPECT_EQ(dropouts, 3);
}

TEST(UNetArchitecture, DetectsDeviations) {
    const double bias[] = {-134.0};
    auto kernel = un::reference_unet(1, bias);
    kernel.layers[0].kernel_size = 3;
    EXPECT_THROW(un::check_architecture(kernel), tp::ModelError);

    auto later_kernel = un::reference_unet(1, bias);
    for (auto& l : later_kernel.layers) {
        if (l.name == "down2.conv1") l.kernel_size = 11;
    }
    EXPECT_THROW(un::check_architecture(later_kernel), tp::ModelError);

    auto width = un::reference_unet(1, bias);
    for (auto& l : width.layers) {
        if (l.name == "bottleneck.conv2") l.out_channels = 512;
    }
    EXPECT_THROW(un::check_architecture(width), tp::ModelError);

    auto skips = un::reference_unet(1, bias);
    for (auto& l : skips.layers) {
        if (l.name == "up1.concat") l.from = "skip3";
    }
    EXPECT_THROW(un::check_architecture(skips), tp::ModelError);
}

TEST(UNetArchitecture, LoaderEnforcesUnlessDisabled) {
    un::UNetWeights small;
    small.heads = 1;
    small.metadata.input_length = 8;
    un::Layer conv{.name = "c", .kind = un::LayerKind::conv1d, .in_channels = 1, .out_channels = 2, .kernel_size = 3};
    conv.tensors = {{"weight", {2, 1, 3}, {0, 1, 0, 0, 0, 1}}, {"bias", {2}, {0.5f, 0}}};
    un::Layer head{.name = "h", .kind = un::LayerKind::output_head, .in_channels = 2, .out_channels = 1, .kernel_size = 1};
    head.tensors = {{"weight", {1, 2, 1}, {1, 1}}, {"bias", {1}, {0}}};
    small.layers = {conv, {.name = "p", .kind = un::LayerKind::maxpool}, {.name = "u", .kind = un::LayerKind::upsample_linear},
                    head};
    const auto bytes = un::encode(small);
    EXPECT_THROW(un::decode(bytes), tp::ModelError);
    const auto loaded = un::decode(bytes, {.check_architecture = false});

    // Hand-evaluated: channel 0 = h + 0.5, channel 1 = h[l+1]; pool; upsample; sum.
    tr::TerrainProfile p{{1, 2, 3, 4, 5, 6, 7, 8}, 50.0, 0, tr::GeneratorTag::external};
    const auto out = un::forward(loaded, p).mean_db;
    // Pooled channel sum: (2.5 + 3, 4.5 + 5, 6.5 + 7, 8.5 + 8) = (5.5, 9.5, 13.5, 16.5),
    // then interpolated at source positions 0, .25, .75, 1.25, ..., 2.75, 3 (clamped).
    const std::vector<double> want{5.5, 6.5, 8.5, 10.5, 12.5, 14.25, 15.75, 16.5};
    for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(out[i], want[i]) << i;
}

TEST(UNetParity, MatchesTorchReference) {
    const auto fixture = json::parse(tp::io::read_file(kFixtures / "unet_parity.json"));
    const auto w = un::load_weights(kFixtures / fixture.at("weights").get<std::string>());
    EXPECT_EQ(w.heads, 2);
    EXPECT_EQ(w.metadata.extra.at("exported_by"), "make_unet_parity.py");
    const double tol = fixture.at("tolerance_db").get<double>();

    std::vector<tr::TerrainProfile> profiles;
    for (const auto& c : fixture.at("cases")) {
        profiles.push_back({c.at("input_heights_m").get<std::vector<double>>(), 50.0, 0, tr::GeneratorTag::external});
    }
    ASSERT_EQ(profiles.size(), 100u);
    const auto preds = un::forward_batch(w, profiles);
    double worst_mean = 0.0, worst_sigma = 0.0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto want_mean = fixture["cases"][i].at("mean_db").get<std::vector<double>>();
        const auto want_sigma = fixture["cases"][i].at("sigma_db").get<std::vector<double>>();
        for (std::size_t k = 0; k < 256; ++k) {
            worst_mean = std::max(worst_mean, std::abs(preds[i].mean_db[k] - want_mean[k]));
            worst_sigma = std::max(worst_sigma, std::abs((*preds[i].sigma_db)[k] - want_sigma[k]) / want_sigma[k]);
        }
    }
    EXPECT_LE(worst_mean, tol);
    EXPECT_LE(worst_sigma, 1e-4);

    const auto& taps = fixture.at("activations");
    const auto trace = un::forward_traced(w, profiles[taps.at("case").get<std::size_t>()].heights_m);
    for (const auto& tap : taps.at("layers")) {
        const auto name = tap.at("name").get<std::string>();
        const auto it = std::find_if(trace.begin(), trace.end(), [&](const un::TraceEntry& e) { return e.layer == name; });
        ASSERT_NE(it, trace.end()) << name;
        const auto shape = tap.at("shape").get<std::vector<int>>();
        ASSERT_EQ(it->activation.channels, shape[0]) << name;
        ASSERT_EQ(it->activation.length, shape[1]) << name;
        const auto data = tap.at("data").get<std::vector<double>>();
        double scale = 0.0, err = 0.0;
        for (int c = 0; c < shape[0]; ++c) {
            for (int l = 0; l < shape[1]; ++l) {
                const double want = data[static_cast<std::size_t>(c * shape[1] + l)];
                scale = std::max(scale, std::abs(want));
                err = std::max(err, std::abs(it->activation.at(c, l, 0) - want));
            }
        }
        EXPECT_LE(err, 1e-5 * std::max(scale, 1.0)) << name;
    }
}
