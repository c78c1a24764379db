#pragma once

// Random terrain profiles: a stationary Gaussian process sampled through a
// Cholesky factor, and 1D midpoint displacement (the 1D restriction of
// diamond-square). Plus the statistics used to validate both generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace terrainprop::terrain {

enum class GeneratorTag : std::uint8_t { gaussian = 0, fractal = 1, external = 2 };

inline std::string_view to_string(GeneratorTag tag) {
    switch (tag) {
        case GeneratorTag::gaussian: return "gaussian";
        case GeneratorTag::fractal: return "fractal";
        case GeneratorTag::external: return "external";
    }
    return "unknown";
}

inline GeneratorTag generator_from_string(std::string_view name) {
    if (name == "gaussian" || name == "gp") return GeneratorTag::gaussian;
    if (name == "fractal") return GeneratorTag::fractal;
    if (name == "external" || name == "measured") return GeneratorTag::external;
    throw DomainError("unknown terrain generator '" + std::string(name) + "'");
}

/// Heights sampled at uniform range spacing, x_k = k * spacing_m.
struct TerrainProfile {
    std::vector<double> heights_m;
    double spacing_m = 50.0;
    std::uint64_t seed = 0;
    GeneratorTag generator = GeneratorTag::external;

    [[nodiscard]] std::size_t size() const { return heights_m.size(); }
    [[nodiscard]] double range_m(std::size_t k) const { return static_cast<double>(k) * spacing_m; }

    void validate() const {
        if (heights_m.size() < 2) throw DomainError("TerrainProfile: need at least 2 samples");
        if (!(spacing_m > 0.0) || !std::isfinite(spacing_m)) {
            throw DomainError("TerrainProfile: spacing must be finite and > 0");
        }
        for (std::size_t k = 0; k < heights_m.size(); ++k) {
            if (!std::isfinite(heights_m[k])) {
                throw DomainError("TerrainProfile: non-finite height at index " + std::to_string(k));
            }
        }
    }

    friend bool operator==(const TerrainProfile&, const TerrainProfile&) = default;
};

struct GaussianParams {
    double rms_height_m = 20.0;
    double corr_length_m = 800.0;

    bool operator==(const GaussianParams&) const = default;

    void validate() const {
        if (!(rms_height_m > 0.0)) throw DomainError("GaussianParams: rms_height_m must be > 0");
        if (!(corr_length_m > 0.0)) throw DomainError("GaussianParams: corr_length_m must be > 0");
    }
};

struct FractalParams {
    double variance = 30.0;  // m^2, variance of the top-level displacement
    double hurst = 1.2;

    bool operator==(const FractalParams&) const = default;

    void validate() const {
        if (!(variance > 0.0)) throw DomainError("FractalParams: variance must be > 0");
        if (!(hurst > 0.0 && hurst < 2.0)) throw DomainError("FractalParams: hurst must lie in (0, 2)");
    }
};

/// Squared-exponential covariance sigma^2 exp(-tau^2 / L^2).
inline double gaussian_covariance(const GaussianParams& params, double lag_m) {
    const double r = lag_m / params.corr_length_m;
    return params.rms_height_m * params.rms_height_m * std::exp(-r * r);
}

/// Reusable sampler: factorizes the covariance once, then draws
/// L z for each seed.
class GaussianSampler {
public:
    static constexpr double kRelativeJitter = 1e-10;

    GaussianSampler(const GaussianParams& params, int n, double spacing_m)
        : params_(params), n_(n), spacing_m_(spacing_m) {
        params.validate();
        if (n < 2) throw DomainError("gen_gaussian: n must be >= 2");
        if (!(spacing_m > 0.0)) throw DomainError("gen_gaussian: spacing must be > 0");
        factorize();
    }

    [[nodiscard]] TerrainProfile sample(std::uint64_t seed) const {
        NormalSource normal(seed);
        std::vector<double> z(static_cast<std::size_t>(n_));
        for (auto& v : z) v = normal();
        TerrainProfile profile;
        profile.heights_m.assign(z.size(), 0.0);
        const auto n = static_cast<std::size_t>(n_);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = &lower_[i * n];
            double acc = 0.0;
            for (std::size_t j = 0; j <= i; ++j) acc += row[j] * z[j];
            profile.heights_m[i] = acc;
        }
        profile.spacing_m = spacing_m_;
        profile.seed = seed;
        profile.generator = GeneratorTag::gaussian;
        return profile;
    }

private:
    void factorize() {
        const auto n = static_cast<std::size_t>(n_);
        const double jitter = kRelativeJitter * params_.rms_height_m * params_.rms_height_m;
        lower_.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double sum = gaussian_covariance(params_, static_cast<double>(i - j) * spacing_m_);
                if (i == j) sum += jitter;
                for (std::size_t k = 0; k < j; ++k) sum -= lower_[i * n + k] * lower_[j * n + k];
                if (i == j) {
                    if (!(sum > 0.0)) {
                        throw GenerationError("gen_gaussian: covariance not positive definite after jitter (pivot " +
                                              std::to_string(i) + ")");
                    }
                    lower_[i * n + i] = std::sqrt(sum);
                } else {
                    lower_[i * n + j] = sum / lower_[j * n + j];
                }
            }
        }
    }

    GaussianParams params_;
    int n_;
    double spacing_m_;
    std::vector<double> lower_;  // row-major lower-triangular factor
};

inline TerrainProfile gen_gaussian(const GaussianParams& params, int n, double spacing_m, std::uint64_t seed) {
    return GaussianSampler(params, n, spacing_m).sample(seed);
}

/// Midpoint displacement on 2^k + 1 >= n points, truncated to n. The left end
/// is pinned at 0, the right end drawn with the top-level variance, and every
/// subdivision scales the displacement variance by 2^(-2H).
inline TerrainProfile gen_fractal(const FractalParams& params, int n, double spacing_m, std::uint64_t seed) {
    params.validate();
    if (n < 2) throw DomainError("gen_fractal: n must be >= 2");
    if (!(spacing_m > 0.0)) throw DomainError("gen_fractal: spacing must be > 0");

    std::size_t intervals = 1;
    while (intervals + 1 < static_cast<std::size_t>(n)) intervals *= 2;
    std::vector<double> h(intervals + 1, 0.0);

    NormalSource normal(seed);
    double variance = params.variance;
    h[intervals] = normal(std::sqrt(variance));
    const double shrink = std::pow(2.0, -2.0 * params.hurst);
    for (std::size_t step = intervals; step > 1; step /= 2) {
        variance *= shrink;
        const double stddev = std::sqrt(variance);
        const std::size_t half = step / 2;
        for (std::size_t left = 0; left + step <= intervals; left += step) {
            h[left + half] = 0.5 * (h[left] + h[left + step]) + normal(stddev);
        }
    }
    h.resize(static_cast<std::size_t>(n));

    TerrainProfile profile;
    profile.heights_m = std::move(h);
    profile.spacing_m = spacing_m;
    profile.seed = seed;
    profile.generator = GeneratorTag::fractal;
    return profile;
}

struct TerrainStats {
    double rms_m = 0.0;
    double corr_length_m = 0.0;  // +inf when the autocorrelation never drops below 1/e
    double hurst = 0.0;          // NaN when the increment variogram vanishes
};

namespace detail {

inline void check_ensemble(std::span<const TerrainProfile> profiles, std::size_t min_count) {
    if (profiles.size() < min_count) {
        throw DomainError("estimate_stats: need at least " + std::to_string(min_count) + " profiles");
    }
    const auto n = profiles.front().size();
    const double spacing = profiles.front().spacing_m;
    for (const auto& p : profiles) {
        if (p.size() != n || p.spacing_m != spacing) {
            throw DomainError("estimate_stats: profiles must share length and spacing");
        }
    }
}

}  // namespace detail

/// Pooled variogram of increments of the given order at `lag` samples:
/// order 1 averages (h[i+lag] - h[i])^2, order 2 averages
/// (h[i+2 lag] - 2 h[i+lag] + h[i])^2. The second-order form scales as
/// lag^(2H) for 0 < H < 2; the first-order form saturates at H = 1.
inline double variogram(std::span<const TerrainProfile> profiles, std::size_t lag, int order = 2) {
    if (lag == 0 || (order != 1 && order != 2)) throw DomainError("variogram: lag >= 1, order 1 or 2");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : profiles) {
        const auto& h = p.heights_m;
        const std::size_t reach = static_cast<std::size_t>(order) * lag;
        if (h.size() <= reach) continue;
        for (std::size_t i = 0; i + reach < h.size(); ++i) {
            const double d = order == 1 ? h[i + lag] - h[i] : h[i + 2 * lag] - 2.0 * h[i + lag] + h[i];
            sum += d * d;
            ++count;
        }
    }
    if (count == 0) throw DomainError("variogram: lag too long for the profiles");
    return sum / static_cast<double>(count);
}

inline constexpr std::size_t kHurstMaxLag = 16;

/// Slope/2 of a least-squares fit of log(second-order variogram) vs log(lag),
/// lags 1..16 (capped by profile length).
inline double estimate_hurst(std::span<const TerrainProfile> profiles) {
    const std::size_t n = profiles.front().size();
    const std::size_t max_lag = std::min(kHurstMaxLag, (n - 1) / 2);
    if (max_lag < 2) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        const double g = variogram(profiles, lag, 2);
        if (!(g > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double x = std::log(static_cast<double>(lag));
        const double y = std::log(g);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const auto m = static_cast<double>(max_lag);
    return 0.5 * (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

/// Pooled RMS about the grand mean, 1/e correlation length (linearly
/// interpolated between lags) and the variogram Hurst estimate.
inline TerrainStats estimate_stats(std::span<const TerrainProfile> profiles) {
    detail::check_ensemble(profiles, 10);
    const std::size_t n = profiles.front().size();
    const double spacing = profiles.front().spacing_m;

    double mean = 0.0;
    for (const auto& p : profiles)
        for (double h : p.heights_m) mean += h;
    mean /= static_cast<double>(profiles.size() * n);

    std::vector<double> cov(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (const auto& p : profiles) {
        const auto& h = p.heights_m;
        for (std::size_t lag = 0; lag < n; ++lag) {
            double acc = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) acc += (h[i] - mean) * (h[i + lag] - mean);
            cov[lag] += acc;
            count[lag] += n - lag;
        }
    }
    for (std::size_t lag = 0; lag < n; ++lag) cov[lag] /= static_cast<double>(count[lag]);
    if (!(cov[0] > 0.0)) throw EstimationError("estimate_stats: profiles are constant");

    TerrainStats stats;
    stats.rms_m = std::sqrt(cov[0]);
    stats.corr_length_m = std::numeric_limits<double>::infinity();
    const double threshold = std::exp(-1.0);
    for (std::size_t lag = 1; lag < n; ++lag) {
        const double rho = cov[lag] / cov[0];
        if (rho < threshold) {
            const double prev = cov[lag - 1] / cov[0];
            const double frac = (prev - threshold) / (prev - rho);
            stats.corr_length_m = (static_cast<double>(lag - 1) + frac) * spacing;
            break;
        }
    }
    stats.hurst = estimate_hurst(profiles);
    return stats;
}

}  // namespace terrainprop::terrain
