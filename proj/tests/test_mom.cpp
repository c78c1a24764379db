#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "terrainprop/baselines.hpp"
#include "terrainprop/mom.hpp"
#include "terrainprop/terrain.hpp"

namespace tp = terrainprop;
namespace mom = terrainprop::mom;
namespace tr = terrainprop::terrain;
using Complex = std::complex<double>;

namespace {

// ~16 sub-segments per 50 m segment: N ~ 4000 on a 256-point profile.
constexpr double kDeskFrequency = 9.3e6;

mom::SolverConfig desk_config(mom::Method method, double frequency = kDeskFrequency) {
    mom::SolverConfig cfg;
    cfg.method = method;
    cfg.radio.frequency_hz = frequency;
    return cfg;
}

tr::TerrainProfile flat_profile(std::size_t n = 256, double spacing = 50.0) {
    return {std::vector<double>(n, 0.0), spacing, 0, tr::GeneratorTag::external};
}

tr::TerrainProfile quantized(tr::TerrainProfile p) {
    for (auto& h : p.heights_m) h = static_cast<float>(h);
    return p;
}

double rms_difference(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum / static_cast<double>(a.size()));
}

// Dense forward substitution with an explicit matrix, written independently of the solver.
std::vector<Complex> dense_forward(const std::vector<std::vector<Complex>>& lower, const std::vector<Complex>& b) {
    std::vector<Complex> x(b.size());
    for (std::size_t m = 0; m < b.size(); ++m) {
        Complex acc = b[m];
        for (std::size_t n = 0; n < m; ++n) acc -= lower[m][n] * x[n];
        x[m] = acc / lower[m][m];
    }
    return x;
}

}  // namespace

TEST(Discretize, FlatSegmentAtFiveSamplesPerWavelength) {
    mom::SolverConfig cfg;
    cfg.samples_per_wavelength = 5.0;
    cfg.radio.frequency_hz = tp::em::kSpeedOfLight / 50.0;  // lambda = 50 m
    cfg.radio.n_points = 2;
    const auto basis = mom::discretize(flat_profile(2), cfg);
    EXPECT_EQ(basis.n_unknowns(), 5u);
    ASSERT_EQ(basis.n_groups(), 1u);
    EXPECT_DOUBLE_EQ(basis.groups[0].delta_m, 10.0);
    EXPECT_DOUBLE_EQ(basis.groups[0].centre.x, 25.0);
    EXPECT_DOUBLE_EQ(basis.midpoints[0].x, 5.0);
    EXPECT_DOUBLE_EQ(basis.midpoints[4].x, 45.0);
}

TEST(Discretize, FullScaleUnknownCountIsHundredsOfThousands) {
    mom::SolverConfig cfg;  // 970 MHz, 10 samples per wavelength
    const auto n = mom::count_unknowns(flat_profile(), cfg);
    EXPECT_EQ(n, 255u * 1618u);
    const auto hilly = tr::gen_gaussian({20.0, 800.0}, 256, 50.0, 1);
    EXPECT_GE(mom::count_unknowns(hilly, cfg), 255u * 1618u);
    EXPECT_LT(mom::count_unknowns(hilly, cfg), 430000u);
}

TEST(Discretize, GroupsFollowTerrainSegments) {
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 32, 50.0, 4);
    auto cfg = desk_config(mom::Method::faffa);
    cfg.radio.n_points = 32;
    const auto basis = mom::discretize(profile, cfg);
    const auto vertices = mom::surface_vertices(profile);
    ASSERT_EQ(basis.n_groups(), 31u);
    std::size_t expected_first = 0;
    for (std::size_t g = 0; g < basis.n_groups(); ++g) {
        const auto& group = basis.groups[g];
        EXPECT_EQ(group.first, expected_first);
        expected_first += group.count;
        const tp::Point2 a = vertices[g];
        const tp::Point2 b = vertices[g + 1];
        EXPECT_NEAR(group.centre.x, 0.5 * (a.x + b.x), 1e-9);
        EXPECT_NEAR(group.centre.y, 0.5 * (a.y + b.y), 1e-9);
        EXPECT_LE(group.delta_m, tp::em::wavelength(kDeskFrequency) / 10.0 + 1e-9);
        for (std::size_t i = group.first; i < group.first + group.count; ++i) {
            EXPECT_EQ(basis.group_index[i], g);
            // On the straight segment between the two terrain samples.
            const double t = (basis.midpoints[i].x - a.x) / (b.x - a.x);
            EXPECT_NEAR(basis.midpoints[i].y, a.y + t * (b.y - a.y), 1e-9);
        }
    }
    EXPECT_EQ(expected_first, basis.n_unknowns());
}

TEST(Discretize, SplitsSegmentsIntoSeveralGroups) {
    auto cfg = desk_config(mom::Method::faffa);
    cfg.groups_per_segment = 3;
    cfg.radio.n_points = 4;
    const auto basis = mom::discretize(flat_profile(4), cfg);
    EXPECT_EQ(basis.n_groups(), 9u);
    for (const auto& g : basis.groups) EXPECT_GE(g.count, 5u);
}

TEST(Discretize, RejectsSegmentsLongerThanHalfWavelength) {
    auto cfg = desk_config(mom::Method::faffa);
    cfg.samples_per_wavelength = 1.5;
    EXPECT_THROW(mom::discretize(flat_profile(), cfg), tp::DomainError);
}

TEST(ZElement, SymmetricLinearInDeltaAndDecaysAsInverseSqrt) {
    auto cfg = desk_config(mom::Method::exact, 300e6);
    cfg.radio.n_points = 2;
    auto profile = flat_profile(2, 400.0);
    auto basis = mom::discretize(profile, cfg);
    const double k0 = basis.k0;
    const double eta0 = basis.eta0;
    EXPECT_EQ(mom::z_element(3, 40, basis, k0, eta0), mom::z_element(40, 3, basis, k0, eta0));
    // Separations 100 lambda and 400 lambda: |Z| ratio 1/2.
    const double far1 = std::abs(mom::z_element(0, 1000, basis, k0, eta0));
    const double far4 = std::abs(mom::z_element(0, 4000 - 1, basis, k0, eta0));
    EXPECT_NEAR(far4 / far1, std::sqrt(1000.0 / 3999.0), 1e-3);
    const Complex before = mom::z_element(0, 7, basis, k0, eta0);
    for (auto& g : basis.groups) g.delta_m *= 0.5;
    EXPECT_NEAR(std::abs(mom::z_element(0, 7, basis, k0, eta0)), 0.5 * std::abs(before), 1e-15);
    EXPECT_THROW(mom::z_element(2, 2, basis, k0, eta0), tp::DomainError);
}

TEST(ZSelf, ClosedFormProperties) {
    const double k0 = 2.0;
    const double eta0 = tp::em::kEta0;
    EXPECT_LT(std::abs(mom::z_self_value(1e-12, k0, eta0)), 1e-6);
    EXPECT_EQ(mom::z_self_value(0.0, k0, eta0), Complex(0.0, 0.0));
    const Complex z = mom::z_self_value(0.1 / k0, k0, eta0);
    EXPECT_GT(z.real(), 0.0);
    EXPECT_GT(z.imag(), z.real());
    // Independent evaluation: (k eta / 4) delta [1 - j (2/pi) ln(gamma k delta / (4e))].
    const double delta = 0.05;
    const double gamma = std::exp(0.5772156649);
    const Complex want = 0.25 * k0 * eta0 * delta *
                         Complex(1.0, -(2.0 / std::numbers::pi) * std::log(gamma * k0 * delta / (4.0 * std::exp(1.0))));
    EXPECT_LE(std::abs(mom::z_self_value(delta, k0, eta0) - want), 1e-9 * std::abs(want));

    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 3;
    const auto basis = mom::discretize(flat_profile(3), cfg);
    EXPECT_EQ(mom::z_self(0, basis, basis.k0, basis.eta0), mom::z_self(basis.n_unknowns() - 1, basis, basis.k0, basis.eta0));
}

TEST(SolveExact, SingleUnknown) {
    mom::SolverConfig cfg;
    cfg.samples_per_wavelength = 5.0;
    cfg.radio.frequency_hz = tp::em::kSpeedOfLight / 250.0;
    cfg.radio.n_points = 2;
    const auto basis = mom::discretize(flat_profile(2), cfg);
    ASSERT_EQ(basis.n_unknowns(), 1u);
    const std::vector<Complex> rhs{Complex(0.3, -1.2)};
    const auto j = mom::solve_exact(basis, rhs);
    EXPECT_EQ(j.coeffs[0], rhs[0] / mom::z_self(0, basis, basis.k0, basis.eta0));
}

TEST(SolveExact, CausalInTheExcitation) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 12;
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 12, 50.0, 8);
    const auto basis = mom::discretize(profile, cfg);
    const auto rhs = mom::excitation(basis, mom::link_geometry(profile, cfg.radio).tx);
    const auto base = mom::solve_exact(basis, rhs);
    const std::size_t k = basis.n_unknowns() / 2;
    auto perturbed = rhs;
    perturbed[k] += Complex(1.0, 1.0);
    const auto changed = mom::solve_exact(basis, perturbed);
    for (std::size_t m = 0; m < k; ++m) EXPECT_EQ(changed.coeffs[m], base.coeffs[m]);
    for (std::size_t m = k; m < basis.n_unknowns(); ++m) EXPECT_NE(changed.coeffs[m], base.coeffs[m]);
}

TEST(SolveExact, TriangularResidualIsTiny) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 126;  // ~2000 unknowns
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 126, 50.0, 21);
    const auto basis = mom::discretize(profile, cfg);
    ASSERT_GE(basis.n_unknowns(), 1950u);
    const auto rhs = mom::excitation(basis, mom::link_geometry(profile, cfg.radio).tx);
    const auto j = mom::solve_exact(basis, rhs);
    const auto residual = mom::match_point_residual(j, basis, rhs);
    double worst = 0.0, scale = 0.0;
    for (std::size_t m = 0; m < rhs.size(); ++m) {
        worst = std::max(worst, std::abs(residual[m]));
        scale = std::max(scale, std::abs(rhs[m]));
    }
    EXPECT_LT(worst / scale, 1e-10);
}

TEST(SolveExact, RejectsSingularDiagonalAndBadRhs) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 2;
    auto basis = mom::discretize(flat_profile(2), cfg);
    std::vector<Complex> rhs(basis.n_unknowns(), Complex(1.0, 0.0));
    EXPECT_THROW(mom::solve_exact(basis, std::vector<Complex>(3)), tp::DomainError);
    basis.groups[0].delta_m = 1e-320;
    EXPECT_THROW(mom::solve_exact(basis, rhs), tp::SingularDiagonalError);
    EXPECT_THROW(mom::solve_faffa(basis, rhs), tp::SingularDiagonalError);
}

TEST(ToeplitzSolver, MatchesDenseForwardSubstitution) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (std::size_t g : {1u, 7u, 64u, 65u, 300u, 1618u}) {
        std::vector<Complex> kernel(g);
        for (std::size_t d = 0; d < g; ++d) {
            kernel[d] = Complex(normal(rng), normal(rng)) / std::sqrt(1.0 + d);
        }
        kernel[0] += Complex(4.0, 2.0);
        std::vector<Complex> b(g);
        for (auto& v : b) v = Complex(normal(rng), normal(rng));
        std::vector<std::vector<Complex>> lower(g, std::vector<Complex>(g));
        for (std::size_t m = 0; m < g; ++m)
            for (std::size_t n = 0; n <= m; ++n) lower[m][n] = kernel[m - n];
        const auto want = dense_forward(lower, b);
        std::vector<Complex> x(g);
        auto rhs = b;
        mom::detail::ToeplitzForwardSolver(kernel, 0).solve(rhs, x);
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            err = std::max(err, std::abs(x[i] - want[i]));
            scale = std::max(scale, std::abs(want[i]));
        }
        EXPECT_LT(err / scale, 1e-10) << "g = " << g;
    }
}

TEST(SolveFaffa, SingleGroupMatchesExact) {
    for (double frequency : {9.3e6, 60e6}) {  // 16 unknowns (direct block) and 100 (FFT path)
        auto cfg = desk_config(mom::Method::faffa, frequency);
        cfg.radio.n_points = 2;
        tr::TerrainProfile profile{{0.0, 3.0}, 50.0, 0, tr::GeneratorTag::external};
        const auto basis = mom::discretize(profile, cfg);
        ASSERT_EQ(basis.n_groups(), 1u);
        const auto rhs = mom::excitation(basis, mom::link_geometry(profile, cfg.radio).tx);
        const auto exact = mom::solve_exact(basis, rhs);
        const auto faffa = mom::solve_faffa(basis, rhs);
        // The FFT path is accurate relative to the largest coefficient, not each one.
        double err = 0.0, scale = 0.0;
        for (std::size_t m = 0; m < basis.n_unknowns(); ++m) {
            err = std::max(err, std::abs(faffa.coeffs[m] - exact.coeffs[m]));
            scale = std::max(scale, std::abs(exact.coeffs[m]));
        }
        EXPECT_LE(err, 1e-12 * scale) << "f = " << frequency;
    }
}

TEST(SolveFaffa, AllPairsNearReducesToExact) {
    auto cfg = desk_config(mom::Method::faffa);
    cfg.radio.n_points = 40;
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 40, 50.0, 12);
    const auto basis = mom::discretize(profile, cfg);
    const auto rhs = mom::excitation(basis, mom::link_geometry(profile, cfg.radio).tx);
    const auto exact = mom::solve_exact(basis, rhs);
    const auto faffa = mom::solve_faffa(basis, rhs, {1e9, mom::Translation::phase_and_spreading});
    for (std::size_t m = 0; m < basis.n_unknowns(); ++m) {
        EXPECT_LE(std::abs(faffa.coeffs[m] - exact.coeffs[m]), 1e-11 * std::abs(exact.coeffs[m]));
    }
}

TEST(SolveFaffa, AgreesWithExactPathLoss) {
    const auto profile = quantized(tr::gen_gaussian({20.0, 800.0}, 256, 50.0, 31));
    const auto exact = mom::solve_profile(profile, desk_config(mom::Method::exact));
    const auto faffa = mom::solve_profile(profile, desk_config(mom::Method::faffa));
    const double rms = rms_difference(exact.values_db, faffa.values_db);
    EXPECT_LE(rms, 1.0);
    EXPECT_LT(rms, 0.3);

    // The phase-only translation leaves a systematic spreading error.
    auto phase_only = desk_config(mom::Method::faffa);
    phase_only.faffa.translation = mom::Translation::phase_only;
    const auto rough = mom::solve_profile(profile, phase_only);
    EXPECT_GT(rms_difference(exact.values_db, rough.values_db), rms);
}

TEST(ScatteredField, ZeroAndSingleBasis) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 3;
    const auto basis = mom::discretize(flat_profile(3), cfg);
    const std::vector<tp::Point2> obs{{10.0, 5.0}, {70.0, 2.4}};
    mom::SurfaceCurrent zero{std::vector<Complex>(basis.n_unknowns())};
    for (const auto& e : mom::scattered_field(zero, basis, obs, basis.k0, basis.eta0)) EXPECT_EQ(e, Complex(0.0, 0.0));

    mom::SurfaceCurrent single{std::vector<Complex>(basis.n_unknowns())};
    single.coeffs[4] = 1.0;
    const auto e = mom::scattered_field(single, basis, obs, basis.k0, basis.eta0);
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const double r = tp::distance(obs[k], basis.midpoints[4]);
        const Complex want = -0.25 * basis.k0 * basis.eta0 * basis.seg_len(4) * tp::em::hankel2_0(basis.k0 * r);
        EXPECT_LE(std::abs(e[k] - want), 1e-14 * std::abs(want));
    }
}

TEST(ScatteredField, RejectsObserversOnTheSurface) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 3;
    const auto basis = mom::discretize(flat_profile(3), cfg);
    mom::SurfaceCurrent j{std::vector<Complex>(basis.n_unknowns(), Complex(1.0, 0.0))};
    const std::vector<tp::Point2> on_surface{{basis.midpoints[3].x + 0.1, 0.0}};
    EXPECT_THROW(mom::scattered_field(j, basis, on_surface, basis.k0, basis.eta0), tp::NearSingularError);
    const std::vector<tp::Point2> just_above{{basis.midpoints[3].x, 0.5}};
    EXPECT_NO_THROW(mom::scattered_field(j, basis, just_above, basis.k0, basis.eta0));
}

// Collocation: with the forward-scattering operator, total field vanishes at match points.
TEST(ScatteredField, BoundaryConditionHoldsAtMatchPoints) {
    auto cfg = desk_config(mom::Method::exact);
    cfg.radio.n_points = 64;
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 64, 50.0, 3);
    const auto basis = mom::discretize(profile, cfg);
    const auto tx = mom::link_geometry(profile, cfg.radio).tx;
    const auto rhs = mom::excitation(basis, tx);
    const auto j = mom::solve_exact(basis, rhs);
    const auto total = mom::match_point_residual(j, basis, rhs);
    double max_incident = 0.0;
    for (const auto& v : rhs) max_incident = std::max(max_incident, std::abs(v));
    for (std::size_t m = 0; m < total.size(); ++m) {
        EXPECT_LT(std::abs(total[m]), 1e-6 * max_incident);
        EXPECT_LT(std::abs(total[m]), 1e-6 * std::abs(rhs[m]));
    }
}

TEST(PathGain, FreeSpaceDecaysTwentyDbPerDecade) {
    const double k0 = tp::em::wavenumber(970e6);
    const tp::Point2 tx{0.0, 0.0};
    for (double r : {100.0, 1000.0}) {
        const std::vector<tp::Point2> rx{{r, 0.0}, {10.0 * r, 0.0}};
        const std::vector<Complex> e{tp::em::incident_field(tx, rx[0], k0), tp::em::incident_field(tx, rx[1], k0)};
        const auto pl = mom::path_gain(e, rx, tx, k0, tp::em::kEta0);
        EXPECT_NEAR(pl.values_db[0] - pl.values_db[1], 20.0, 0.2);
    }
    // Reference: free space reads 0 dB at 1 m.
    const std::vector<tp::Point2> one{{1.0, 0.0}};
    const std::vector<Complex> e1{tp::em::incident_field(tx, one[0], k0)};
    EXPECT_NEAR(mom::path_gain(e1, one, tx, k0, tp::em::kEta0).values_db[0], 0.0, 1e-12);
}

TEST(PathGain, ZeroFieldClampsAndCoincidentReceiverThrows) {
    const double k0 = 1.0;
    const std::vector<tp::Point2> rx{{5.0, 0.0}};
    const std::vector<Complex> zero{Complex(0.0, 0.0)};
    EXPECT_EQ(mom::path_gain(zero, rx, {0.0, 0.0}, k0, tp::em::kEta0).values_db[0], -300.0);
    EXPECT_THROW(mom::path_gain(zero, rx, {5.0, 0.0}, k0, tp::em::kEta0), tp::DomainError);
}

TEST(SolveProfile, FlatPlaneMatchesTwoRay) {
    const double frequency = 100e6;
    const auto pl = mom::solve_profile(flat_profile(), desk_config(mom::Method::faffa, frequency));
    const double k0 = tp::em::wavenumber(frequency);
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 1; k < 256; ++k) {
        const double want = tp::baselines::two_ray_reference(50.0 * k, 10.4, 2.4, k0);
        sum += (pl.values_db[k] - want) * (pl.values_db[k] - want);
        ++count;
    }
    EXPECT_LT(std::sqrt(sum / count), 1.5);
}

TEST(SolveProfile, HeightOffsetIsBitIdentical) {
    const auto profile = quantized(tr::gen_gaussian({20.0, 800.0}, 256, 50.0, 17));
    auto raised = profile;
    for (auto& h : raised.heights_m) h += 35.0;
    for (auto method : {mom::Method::exact, mom::Method::faffa}) {
        const auto a = mom::solve_profile(profile, desk_config(method));
        const auto b = mom::solve_profile(raised, desk_config(method));
        EXPECT_EQ(a.values_db, b.values_db) << mom::to_string(method);
    }
}

TEST(SolveProfile, CurrentIsCausalInTheTerrain) {
    auto cfg = desk_config(mom::Method::faffa);
    cfg.radio.n_points = 64;
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 64, 50.0, 40);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> bump(0.0, 5.0);
    for (std::size_t cut : {10u, 33u, 60u}) {
        auto changed = profile;
        for (std::size_t k = cut + 1; k < changed.size(); ++k) changed.heights_m[k] += bump(rng);
        for (auto method : {mom::Method::exact, mom::Method::faffa}) {
            cfg.method = method;
            const auto a = mom::solve_profile_detailed(profile, cfg);
            const auto b = mom::solve_profile_detailed(changed, cfg);
            // Groups 0 .. cut-1 use only vertices 0 .. cut.
            const auto& last = a.basis.groups[cut - 1];
            for (std::size_t m = 0; m < last.first + last.count; ++m) {
                ASSERT_EQ(a.current.coeffs[m], b.current.coeffs[m]) << "cut " << cut << " m " << m;
            }
        }
    }
}

TEST(SolveProfile, SelfConvergenceUnderRefinement) {
    const auto profile = tr::gen_gaussian({20.0, 800.0}, 256, 50.0, 51);
    auto coarse = desk_config(mom::Method::faffa);
    auto fine = coarse;
    fine.samples_per_wavelength = 20.0;
    const auto a = mom::solve_profile(profile, coarse);
    const auto b = mom::solve_profile(profile, fine);
    EXPECT_LT(rms_difference(a.values_db, b.values_db), 0.5);
}

TEST(SolveProfile, NeverExceedsFreeSpaceBySixDb) {
    for (std::uint64_t seed : {61u, 62u, 63u}) {
        const auto profile = tr::gen_gaussian({20.0, 800.0}, 256, 50.0, seed);
        const auto cfg = desk_config(mom::Method::faffa);
        const auto sol = mom::solve_profile_detailed(profile, cfg);
        const auto geometry = mom::link_geometry(profile, cfg.radio);
        for (std::size_t k = 0; k < 256; ++k) {
            const double fs = tp::baselines::free_space_gain_db(tp::distance(geometry.tx, geometry.rx[k]), sol.basis.k0);
            EXPECT_LE(sol.path_loss.values_db[k], fs + 6.0) << "seed " << seed << " k " << k;
        }
    }
}

TEST(SolveProfile, ValidatesShapeAgainstRadio) {
    EXPECT_THROW(mom::solve_profile(flat_profile(100), desk_config(mom::Method::faffa)), tp::DomainError);
    EXPECT_THROW(mom::solve_profile(flat_profile(256, 25.0), desk_config(mom::Method::faffa)), tp::DomainError);
    EXPECT_THROW(mom::method_from_string("lu"), tp::DomainError);
}
