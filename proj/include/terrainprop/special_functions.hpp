#pragma once

// Bessel functions of the first and second kind, orders 0 and 1, for real
// positive arguments. Ascending power series below kSeriesLimit, Hankel's
// asymptotic expansion (optimally truncated) above it.

#include <cmath>
#include <numbers>

#include "error.hpp"

namespace terrainprop::special {

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// Crossover chosen so both branches stay under ~1e-11 relative error in
// |J + iY|: the series loses digits to cancellation (largest term grows like
// e^x / x), the asymptotic expansion is limited by its smallest term (~e^-2x).
inline constexpr double kSeriesLimit = 13.0;

struct BesselPair {
    double j;
    double y;
};

// Order-0 ascending series. Y0 uses the harmonic-number form of A&S 9.1.13.
inline BesselPair series_order0(double x) {
    const double q = 0.25 * x * x;
    double term = 1.0;
    double harmonic = 0.0;
    double j = 1.0;
    double s = 0.0;
    for (int k = 1; k < 200; ++k) {
        term *= -q / (static_cast<double>(k) * k);
        harmonic += 1.0 / k;
        j += term;
        s -= harmonic * term;
        if (std::abs(term) * (1.0 + harmonic) < 1e-17) break;
    }
    const double y = (2.0 / std::numbers::pi) * ((std::log(0.5 * x) + kEulerGamma) * j + s);
    return {j, y};
}

// Order-1 ascending series, A&S 9.1.10 / 9.1.11 with psi(k+1) = H_k - gamma.
inline BesselPair series_order1(double x) {
    const double half = 0.5 * x;
    const double q = half * half;
    double term = half;  // (x/2)^{2k+1} (-1)^k / (k! (k+1)!)
    double psi_sum = 2.0 * (-kEulerGamma) + 1.0;  // psi(1) + psi(2)
    double j = term;
    double s = psi_sum * term;
    double h_k = 0.0;
    for (int k = 1; k < 200; ++k) {
        term *= -q / (static_cast<double>(k) * (k + 1));
        h_k += 1.0 / k;
        psi_sum = (h_k - kEulerGamma) + (h_k + 1.0 / (k + 1) - kEulerGamma);
        j += term;
        s += psi_sum * term;
        if (std::abs(term) * (1.0 + std::abs(psi_sum)) < 1e-17 * half) break;
    }
    const double y = -2.0 / (std::numbers::pi * x) + (2.0 / std::numbers::pi) * std::log(half) * j -
                     s / std::numbers::pi;
    return {j, y};
}

// Hankel expansion P, Q for order nu (mu = 4 nu^2), truncated at the smallest term.
inline void asymptotic_pq(double mu, double x, double& p, double& q) {
    p = 1.0;
    q = 0.0;
    double term = 1.0;
    double previous = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (mu - odd * odd) / (k * 8.0 * x);
        const double magnitude = std::abs(term);
        if (magnitude > previous || magnitude < 1e-18) break;
        previous = magnitude;
        // a_k / x^k enters with sign (-1)^(k/2) in P (k even) and (-1)^((k-1)/2) in Q (k odd).
        const double signed_term = ((k / 2) % 2 == 0) ? term : -term;
        if (k % 2 == 0) {
            p += signed_term;
        } else {
            q += signed_term;
        }
    }
}

// chi = x - pi/4 (order 0) or x - 3pi/4 (order 1); cos/sin expanded so the large
// argument never has pi/4 subtracted from it in floating point.
inline BesselPair asymptotic(int order, double x) {
    double p = 0.0;
    double q = 0.0;
    asymptotic_pq(order == 0 ? 0.0 : 4.0, x, p, q);
    const double c = std::cos(x);
    const double s = std::sin(x);
    const double r = std::numbers::sqrt2 / 2.0;
    double cos_chi = 0.0;
    double sin_chi = 0.0;
    if (order == 0) {
        cos_chi = r * (c + s);
        sin_chi = r * (s - c);
    } else {
        cos_chi = r * (s - c);
        sin_chi = -r * (s + c);
    }
    const double amp = std::sqrt(2.0 / (std::numbers::pi * x));
    return {amp * (p * cos_chi - q * sin_chi), amp * (p * sin_chi + q * cos_chi)};
}

inline void require_positive(double x, const char* fn) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw DomainError(std::string(fn) + ": argument must be finite and > 0");
    }
}

}  // namespace detail

/// J0 and Y0 evaluated together. x > 0.
inline detail::BesselPair bessel_order0(double x) {
    detail::require_positive(x, "bessel_order0");
    return x < detail::kSeriesLimit ? detail::series_order0(x) : detail::asymptotic(0, x);
}

/// J1 and Y1 evaluated together. x > 0.
inline detail::BesselPair bessel_order1(double x) {
    detail::require_positive(x, "bessel_order1");
    return x < detail::kSeriesLimit ? detail::series_order1(x) : detail::asymptotic(1, x);
}

inline double j0(double x) { return bessel_order0(x).j; }
inline double y0(double x) { return bessel_order0(x).y; }
inline double j1(double x) { return bessel_order1(x).j; }
inline double y1(double x) { return bessel_order1(x).y; }

}  // namespace terrainprop::special
