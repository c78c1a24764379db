#pragma once

// Method-of-moments EFIE over a 1D PEC terrain profile (2D TM^z problem).
// Pulse basis, point matching at sub-segment midpoints, forward-scattering
// (lower-triangular) system solved by back substitution, either exactly or
// with the Fast Far Field Approximation (group-centre aggregation plus phase
// translation, FFT convolution inside each straight group).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "em_core.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "geometry.hpp"
#include "terrain.hpp"

namespace terrainprop::mom {

using em::Complex;

enum class Method : std::uint8_t { exact, faffa };

inline std::string_view to_string(Method m) { return m == Method::exact ? "exact" : "faffa"; }

inline Method method_from_string(std::string_view name) {
    if (name == "exact") return Method::exact;
    if (name == "faffa") return Method::faffa;
    throw DomainError("unknown solver method '" + std::string(name) + "' (expected exact or faffa)");
}

/// How a group-centre aggregate is carried to each observer of the receiving group.
enum class Translation : std::uint8_t {
    /// exp(-j k0 s_m) only, s_m = (r_m - c_l) . u_ll'.
    phase_only,
    /// Phase plus the cylindrical spreading ratio sqrt(D / (D + s_m)), D = |c_l - c_l'|.
    phase_and_spreading,
};

struct FaffaOptions {
    /// Group pairs whose centres are closer than this many group lengths are
    /// summed element by element instead of being translated.
    double near_group_factor = 2.0;
    Translation translation = Translation::phase_and_spreading;
};

struct SolverConfig {
    double samples_per_wavelength = 10.0;
    Method method = Method::faffa;
    em::RadioConfig radio;
    /// Each terrain segment is split into this many FAFFA groups; 0 picks the
    /// smallest count that keeps groups within max_group_wavelengths.
    int groups_per_segment = 0;
    double max_group_wavelengths = 20.0;
    FaffaOptions faffa;

    void validate() const {
        radio.validate();
        if (!(samples_per_wavelength >= 2.0)) {
            throw DomainError("SolverConfig: samples_per_wavelength must be >= 2 (segment longer than lambda/2)");
        }
        if (groups_per_segment < 0) throw DomainError("SolverConfig: groups_per_segment must be >= 0");
        if (!(max_group_wavelengths > 0.0)) throw DomainError("SolverConfig: max_group_wavelengths must be > 0");
        if (!(faffa.near_group_factor >= 0.0)) throw DomainError("SolverConfig: near_group_factor must be >= 0");
    }
};

/// A contiguous run of basis functions on one straight terrain segment.
struct Group {
    std::size_t first = 0;
    std::size_t count = 0;
    Point2 centre;
    Point2 tangent;        // unit vector along the segment, increasing range
    double delta_m = 0.0;  // sub-segment length shared by every basis in the group
    std::size_t segment = 0;

    [[nodiscard]] double length_m() const { return delta_m * static_cast<double>(count); }
};

struct BasisSet {
    std::vector<Point2> midpoints;
    std::vector<std::size_t> group_index;
    std::vector<Group> groups;
    double k0 = 0.0;
    double eta0 = em::kEta0;

    [[nodiscard]] std::size_t n_unknowns() const { return midpoints.size(); }
    [[nodiscard]] std::size_t n_groups() const { return groups.size(); }
    [[nodiscard]] double seg_len(std::size_t n) const { return groups[group_index[n]].delta_m; }
};

struct SurfaceCurrent {
    std::vector<Complex> coeffs;
};

struct PathLossProfile {
    std::vector<double> values_db;
    std::vector<Point2> rx_positions;
};

/// Number of equal sub-segments for a segment of the given length.
inline std::size_t subdivisions(double segment_length_m, double wavelength_m, double samples_per_wavelength) {
    const double exact = segment_length_m * samples_per_wavelength / wavelength_m;
    // Tolerate rounding in lambda = c / f so an exact multiple is not bumped up by one.
    const auto n = static_cast<std::size_t>(std::ceil(exact * (1.0 - 1e-12)));
    return std::max<std::size_t>(n, 1);
}

/// Surface points (range, height) with the leftmost height as datum, so a
/// constant offset of the whole profile leaves the geometry bit-identical
/// whenever heights are exactly representable after the shift.
inline std::vector<Point2> surface_vertices(const terrain::TerrainProfile& profile) {
    std::vector<Point2> v(profile.size());
    const double datum = profile.heights_m.front();
    for (std::size_t k = 0; k < profile.size(); ++k) {
        v[k] = {profile.range_m(k), profile.heights_m[k] - datum};
    }
    return v;
}

inline BasisSet discretize(const terrain::TerrainProfile& profile, const SolverConfig& cfg) {
    profile.validate();
    cfg.validate();
    const double lambda = em::wavelength(cfg.radio.frequency_hz);
    const auto vertices = surface_vertices(profile);

    BasisSet basis;
    basis.k0 = em::wavenumber(cfg.radio.frequency_hz);
    for (std::size_t s = 0; s + 1 < vertices.size(); ++s) {
        const Point2 a = vertices[s];
        const Point2 b = vertices[s + 1];
        const double length = distance(a, b);
        const std::size_t n_sub = subdivisions(length, lambda, cfg.samples_per_wavelength);
        const double delta = length / static_cast<double>(n_sub);
        const Point2 tangent = (1.0 / length) * (b - a);
        const std::size_t wanted = cfg.groups_per_segment > 0
                                       ? static_cast<std::size_t>(cfg.groups_per_segment)
                                       : subdivisions(length, lambda * cfg.max_group_wavelengths, 1.0);
        const auto n_groups = std::min(wanted, n_sub);
        std::size_t local = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            const std::size_t count = n_sub / n_groups + (g < n_sub % n_groups ? 1 : 0);
            Group group;
            group.first = basis.midpoints.size();
            group.count = count;
            group.tangent = tangent;
            group.delta_m = delta;
            group.segment = s;
            const double t_mid = (static_cast<double>(local) + 0.5 * static_cast<double>(count)) / n_sub;
            group.centre = a + t_mid * (b - a);
            for (std::size_t i = 0; i < count; ++i, ++local) {
                const double t = (static_cast<double>(local) + 0.5) / static_cast<double>(n_sub);
                basis.midpoints.push_back(a + t * (b - a));
                basis.group_index.push_back(basis.groups.size());
            }
            basis.groups.push_back(group);
        }
    }
    return basis;
}

/// Kernel scale (k0 eta0 / 4) * delta shared by matrix entries and field sums.
inline double kernel_scale(double k0, double eta0, double delta) { return 0.25 * k0 * eta0 * delta; }

/// Off-diagonal entry: midpoint-rule integral of the kernel over basis n, observed at match point m.
inline Complex z_element(std::size_t m, std::size_t n, const BasisSet& basis, double k0, double eta0) {
    if (m == n) throw DomainError("z_element: diagonal entry requested, use z_self");
    const double r = distance(basis.midpoints[m], basis.midpoints[n]);
    return kernel_scale(k0, eta0, basis.seg_len(n)) * em::hankel2_0(k0 * r);
}

/// Self term of a pulse of length delta: small-argument Hankel expansion integrated over the pulse.
inline Complex z_self_value(double delta, double k0, double eta0) {
    if (!(delta > 0.0)) return {0.0, 0.0};
    const double gamma = std::exp(special::detail::kEulerGamma);
    const double log_term = std::log(gamma * k0 * delta / (4.0 * std::numbers::e));
    return kernel_scale(k0, eta0, delta) * Complex(1.0, -(2.0 / std::numbers::pi) * log_term);
}

inline Complex z_self(std::size_t m, const BasisSet& basis, double k0, double eta0) {
    return z_self_value(basis.seg_len(m), k0, eta0);
}

inline constexpr double kSingularDiagonal = 1e-300;

namespace detail {

inline void check_rhs(const BasisSet& basis, std::span<const Complex> rhs) {
    if (rhs.size() != basis.n_unknowns()) {
        throw DomainError("solver: rhs length " + std::to_string(rhs.size()) + " != unknowns " +
                          std::to_string(basis.n_unknowns()));
    }
}

inline Complex checked_divide(Complex numerator, Complex diagonal, std::size_t m) {
    if (!(std::abs(diagonal) >= kSingularDiagonal)) {
        throw SingularDiagonalError("solver: |Z_mm| below 1e-300 at unknown " + std::to_string(m));
    }
    return numerator / diagonal;
}

}  // namespace detail

/// Incident field of the transmitter at every match point.
inline std::vector<Complex> excitation(const BasisSet& basis, Point2 tx) {
    std::vector<Complex> v(basis.n_unknowns());
    for (std::size_t m = 0; m < v.size(); ++m) v[m] = em::incident_field(tx, basis.midpoints[m], basis.k0, basis.eta0);
    return v;
}

/// Forward substitution Z_mm j_m = V_m - sum_{n<m} Z_mn j_n with every
/// element evaluated directly. O(N^2) kernel evaluations.
inline SurfaceCurrent solve_exact(const BasisSet& basis, std::span<const Complex> rhs) {
    detail::check_rhs(basis, rhs);
    const std::size_t n_unknowns = basis.n_unknowns();
    const double k0 = basis.k0;
    const double eta0 = basis.eta0;
    SurfaceCurrent current;
    current.coeffs.resize(n_unknowns);
    auto& j = current.coeffs;
    for (std::size_t m = 0; m < n_unknowns; ++m) {
        Complex acc = rhs[m];
        const Point2 rm = basis.midpoints[m];
        for (std::size_t n = 0; n < m; ++n) {
            const double r = distance(rm, basis.midpoints[n]);
            acc -= kernel_scale(k0, eta0, basis.seg_len(n)) * em::hankel2_0(k0 * r) * j[n];
        }
        j[m] = detail::checked_divide(acc, z_self(m, basis, k0, eta0), m);
    }
    return current;
}

namespace detail {

/// Lower-triangular Toeplitz solve sum_{n<=m} t[m-n] x[n] = b[m] for one
/// straight, uniformly discretized group. Divide and conquer: the finished
/// left half feeds the right half through one FFT convolution, so the cost
/// is O(g log^2 g) instead of O(g^2).
class ToeplitzForwardSolver {
public:
    static constexpr std::size_t kDirectBlock = 64;

    ToeplitzForwardSolver(std::span<const Complex> kernel, std::size_t offset)
        : kernel_(kernel), offset_(offset) {}

    void solve(std::span<Complex> b, std::span<Complex> x) { solve_block(b, x, 0, b.size()); }

private:
    void solve_block(std::span<Complex> b, std::span<Complex> x, std::size_t lo, std::size_t hi) {
        if (hi - lo <= kDirectBlock) {
            for (std::size_t m = lo; m < hi; ++m) {
                Complex acc = b[m];
                for (std::size_t n = lo; n < m; ++n) acc -= kernel_[m - n] * x[n];
                x[m] = checked_divide(acc, kernel_[0], offset_ + m);
            }
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        solve_block(b, x, lo, mid);
        // (x[lo..mid) * t[0..hi-lo))[m - lo] holds sum_{n in [lo,mid)} t[m-n] x[n]; for m >= mid every lag is >= 1.
        const std::size_t width = hi - lo;
        const auto& kernel_fft = kernel_spectrum(width, mid - lo);
        const std::size_t n_fft = kernel_fft.size();
        std::vector<Complex> buffer(n_fft);
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(mid),
                  buffer.begin());
        fft::transform(buffer, false);
        for (std::size_t i = 0; i < n_fft; ++i) buffer[i] *= kernel_fft[i];
        fft::transform(buffer, true);
        const double scale = 1.0 / static_cast<double>(n_fft);
        for (std::size_t m = mid; m < hi; ++m) b[m] -= buffer[m - lo] * scale;
        solve_block(b, x, mid, hi);
    }

    const std::vector<Complex>& kernel_spectrum(std::size_t width, std::size_t left) {
        const auto key = std::pair{width, left};
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        std::vector<Complex> spectrum(fft::padded_size(width + left - 1));
        std::copy(kernel_.begin(), kernel_.begin() + static_cast<std::ptrdiff_t>(width), spectrum.begin());
        fft::transform(spectrum, false);
        return cache_.emplace(key, std::move(spectrum)).first->second;
    }

    std::span<const Complex> kernel_;
    std::size_t offset_;
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Complex>> cache_;
};

}  // namespace detail

/// FAFFA forward substitution. Groups are processed in range order; for each
/// earlier group the aggregate sum_n Z(centre_l, r_n) j_n is translated to
/// every observer of the current group by exp(-j k0 (r_m - c_l) . u_ll')
/// (times the spreading ratio unless phase_only), except for near pairs
/// which are summed exactly. Intra-group interactions use the Toeplitz
/// structure of a straight, uniformly split segment.
inline SurfaceCurrent solve_faffa(const BasisSet& basis, std::span<const Complex> rhs,
                                  const FaffaOptions& options = {}) {
    detail::check_rhs(basis, rhs);
    if (basis.groups.empty()) throw DomainError("solve_faffa: basis has no groups");
    const double k0 = basis.k0;
    const double eta0 = basis.eta0;
    SurfaceCurrent current;
    current.coeffs.assign(basis.n_unknowns(), Complex{});
    auto& j = current.coeffs;
    std::vector<Complex> acc;
    std::vector<Complex> kernel;

    for (std::size_t l = 0; l < basis.n_groups(); ++l) {
        const Group& gl = basis.groups[l];
        acc.assign(rhs.begin() + static_cast<std::ptrdiff_t>(gl.first),
                   rhs.begin() + static_cast<std::ptrdiff_t>(gl.first + gl.count));

        for (std::size_t lp = 0; lp < l; ++lp) {
            const Group& gs = basis.groups[lp];
            const double scale = kernel_scale(k0, eta0, gs.delta_m);
            const Point2 separation = gl.centre - gs.centre;
            const double centre_distance = norm(separation);
            const double near_limit = options.near_group_factor * std::max(gl.length_m(), gs.length_m());
            if (centre_distance < near_limit) {
                for (std::size_t i = 0; i < gl.count; ++i) {
                    const Point2 rm = basis.midpoints[gl.first + i];
                    Complex sum{};
                    for (std::size_t n = gs.first; n < gs.first + gs.count; ++n) {
                        sum += em::hankel2_0(k0 * distance(rm, basis.midpoints[n])) * j[n];
                    }
                    acc[i] -= scale * sum;
                }
                continue;
            }
            Complex aggregate{};
            for (std::size_t n = gs.first; n < gs.first + gs.count; ++n) {
                aggregate += em::hankel2_0(k0 * distance(gl.centre, basis.midpoints[n])) * j[n];
            }
            aggregate *= scale;
            const Point2 direction = (1.0 / centre_distance) * separation;
            const double first_shift = dot(basis.midpoints[gl.first] - gl.centre, direction);
            const double shift_step = gl.delta_m * dot(gl.tangent, direction);
            const Complex step = std::polar(1.0, -k0 * shift_step);
            Complex phase = aggregate * std::polar(1.0, -k0 * first_shift);
            if (options.translation == Translation::phase_only) {
                for (std::size_t i = 0; i < gl.count; ++i) {
                    acc[i] -= phase;
                    phase *= step;
                }
            } else {
                for (std::size_t i = 0; i < gl.count; ++i) {
                    const double shift = first_shift + static_cast<double>(i) * shift_step;
                    acc[i] -= std::sqrt(centre_distance / (centre_distance + shift)) * phase;
                    phase *= step;
                }
            }
        }

        kernel.resize(gl.count);
        kernel[0] = z_self_value(gl.delta_m, k0, eta0);
        const double scale = kernel_scale(k0, eta0, gl.delta_m);
        for (std::size_t d = 1; d < gl.count; ++d) {
            kernel[d] = scale * em::hankel2_0(k0 * gl.delta_m * static_cast<double>(d));
        }
        detail::ToeplitzForwardSolver toeplitz(kernel, gl.first);
        toeplitz.solve(acc, std::span<Complex>(j).subspan(gl.first, gl.count));
    }
    return current;
}

inline SurfaceCurrent solve(const BasisSet& basis, std::span<const Complex> rhs, const SolverConfig& cfg) {
    return cfg.method == Method::exact ? solve_exact(basis, rhs) : solve_faffa(basis, rhs, cfg.faffa);
}

/// E_s(r) = -(k0 eta0 / 4) sum_n delta_n j_n H0^(2)(k0 |r - r_n|).
inline std::vector<Complex> scattered_field(const SurfaceCurrent& current, const BasisSet& basis,
                                            std::span<const Point2> obs, double k0, double eta0) {
    if (current.coeffs.size() != basis.n_unknowns()) {
        throw DomainError("scattered_field: current length does not match basis");
    }
    std::vector<Complex> out(obs.size());
    for (std::size_t k = 0; k < obs.size(); ++k) {
        Complex sum{};
        for (std::size_t n = 0; n < basis.n_unknowns(); ++n) {
            const Point2 offset = obs[k] - basis.midpoints[n];
            const double r = norm(offset);
            const double delta = basis.seg_len(n);
            if (r <= 0.5 * delta) {
                const Point2 t = basis.groups[basis.group_index[n]].tangent;
                const double normal_offset = std::abs(offset.x * t.y - offset.y * t.x);
                if (normal_offset <= 1e-6 * delta) {
                    throw NearSingularError("scattered_field: observation point " + std::to_string(k) +
                                            " lies on the surface within half a segment of match point " +
                                            std::to_string(n));
                }
            }
            sum += delta * current.coeffs[n] * em::hankel2_0(k0 * r);
        }
        out[k] = -0.25 * k0 * eta0 * sum;
    }
    return out;
}

/// Forward-scattering collocation residual V_m - sum_{n<=m} Z_mn j_n at
/// every match point (the total field the truncated operator sees there).
inline std::vector<Complex> match_point_residual(const SurfaceCurrent& current, const BasisSet& basis,
                                                 std::span<const Complex> rhs) {
    detail::check_rhs(basis, rhs);
    std::vector<Complex> out(basis.n_unknowns());
    for (std::size_t m = 0; m < basis.n_unknowns(); ++m) {
        Complex acc = rhs[m] - z_self(m, basis, basis.k0, basis.eta0) * current.coeffs[m];
        for (std::size_t n = 0; n < m; ++n) acc -= z_element(m, n, basis, basis.k0, basis.eta0) * current.coeffs[n];
        out[m] = acc;
    }
    return out;
}

inline constexpr double kFloorDb = -300.0;

/// Reference field: free-space line source at 1 m, so free space reads 0 dB at 1 m.
inline double reference_field(double k0, double eta0) { return 0.25 * k0 * eta0 * std::abs(em::hankel2_0(k0)); }

/// 20 log10(|E| / sqrt(R) / E_ref): the 2D field is scaled by 1/sqrt(R) so
/// free-space power decays as 1/R^2. Clamped at -300 dB.
inline double field_to_db(Complex total, double range_m, double k0, double eta0) {
    if (!(range_m > 0.0)) throw DomainError("path_gain: receiver coincides with transmitter");
    const double magnitude = std::abs(total) / std::sqrt(range_m) / reference_field(k0, eta0);
    if (!(magnitude > 0.0)) return kFloorDb;
    return std::max(kFloorDb, 20.0 * std::log10(magnitude));
}

inline PathLossProfile path_gain(std::span<const Complex> total_fields, std::span<const Point2> rx_positions,
                                 Point2 tx, double k0, double eta0) {
    if (total_fields.size() != rx_positions.size()) throw DomainError("path_gain: length mismatch");
    PathLossProfile out;
    out.rx_positions.assign(rx_positions.begin(), rx_positions.end());
    out.values_db.resize(total_fields.size());
    for (std::size_t k = 0; k < total_fields.size(); ++k) {
        out.values_db[k] = field_to_db(total_fields[k], distance(rx_positions[k], tx), k0, eta0);
    }
    return out;
}

/// Transmitter and receivers in the datum frame of surface_vertices().
struct Geometry {
    Point2 tx;
    std::vector<Point2> rx;
};

inline Geometry link_geometry(const terrain::TerrainProfile& profile, const em::RadioConfig& radio) {
    const auto vertices = surface_vertices(profile);
    Geometry g;
    g.tx = {0.0, vertices.front().y + radio.tx_height_m};
    g.rx.resize(vertices.size());
    for (std::size_t k = 0; k < vertices.size(); ++k) g.rx[k] = {vertices[k].x, vertices[k].y + radio.rx_height_m};
    return g;
}

struct ProfileSolution {
    BasisSet basis;
    std::vector<Complex> rhs;
    SurfaceCurrent current;
    std::vector<Complex> total_field;
    PathLossProfile path_loss;
};

/// End-to-end: discretize, excite with the line source, solve, sum the
/// fields at the receivers and convert to path gain in dB.
inline ProfileSolution solve_profile_detailed(const terrain::TerrainProfile& profile, const SolverConfig& cfg) {
    if (static_cast<int>(profile.size()) != cfg.radio.n_points) {
        throw DomainError("solve_profile: profile has " + std::to_string(profile.size()) + " points, radio expects " +
                          std::to_string(cfg.radio.n_points));
    }
    if (profile.spacing_m != cfg.radio.rx_spacing_m) {
        throw DomainError("solve_profile: profile spacing differs from receiver spacing");
    }
    ProfileSolution sol;
    sol.basis = discretize(profile, cfg);
    const auto geometry = link_geometry(profile, cfg.radio);
    sol.rhs = excitation(sol.basis, geometry.tx);
    sol.current = solve(sol.basis, sol.rhs, cfg);
    const double k0 = sol.basis.k0;
    const double eta0 = sol.basis.eta0;
    sol.total_field = scattered_field(sol.current, sol.basis, geometry.rx, k0, eta0);
    for (std::size_t k = 0; k < geometry.rx.size(); ++k) {
        sol.total_field[k] += em::incident_field(geometry.tx, geometry.rx[k], k0, eta0);
    }
    sol.path_loss = path_gain(sol.total_field, geometry.rx, geometry.tx, k0, eta0);
    // Report receivers in the caller's height frame.
    const double datum = profile.heights_m.front();
    for (auto& p : sol.path_loss.rx_positions) p.y += datum;
    return sol;
}

inline PathLossProfile solve_profile(const terrain::TerrainProfile& profile, const SolverConfig& cfg) {
    return solve_profile_detailed(profile, cfg).path_loss;
}

/// Unknown count discretize() would produce, without building the basis.
inline std::size_t count_unknowns(const terrain::TerrainProfile& profile, const SolverConfig& cfg) {
    const double lambda = em::wavelength(cfg.radio.frequency_hz);
    const auto v = surface_vertices(profile);
    std::size_t total = 0;
    for (std::size_t s = 0; s + 1 < v.size(); ++s) {
        total += subdivisions(distance(v[s], v[s + 1]), lambda, cfg.samples_per_wavelength);
    }
    return total;
}

}  // namespace terrainprop::mom
