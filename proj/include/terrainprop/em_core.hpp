#pragma once

// Shared 2D TM^z electromagnetic primitives: free-space constants, the
// zero-order Hankel function of the second kind and the line-source field.
// Time convention exp(+j omega t) is suppressed throughout.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "error.hpp"
#include "geometry.hpp"
#include "special_functions.hpp"

namespace terrainprop::em {

using Complex = std::complex<double>;

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kEta0 = 376.730313668;          // free-space impedance, ohm

/// Fixed radio geometry shared by every profile of an experiment.
struct RadioConfig {
    double frequency_hz = 970e6;
    double tx_height_m = 10.4;   // above the leftmost terrain point
    double rx_height_m = 2.4;    // above local terrain
    double rx_spacing_m = 50.0;
    int n_points = 256;

    void validate() const {
        if (!(frequency_hz > 0.0)) throw DomainError("RadioConfig: frequency_hz must be > 0");
        if (!(tx_height_m > 0.0)) throw DomainError("RadioConfig: tx_height_m must be > 0");
        if (!(rx_height_m > 0.0)) throw DomainError("RadioConfig: rx_height_m must be > 0");
        if (!(rx_spacing_m > 0.0)) throw DomainError("RadioConfig: rx_spacing_m must be > 0");
        if (n_points < 2) throw DomainError("RadioConfig: n_points must be >= 2");
    }

    friend bool operator==(const RadioConfig&, const RadioConfig&) = default;
};

/// Free-space wavenumber 2 pi f / c in rad/m.
inline double wavenumber(double frequency_hz) {
    if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz)) {
        throw DomainError("wavenumber: frequency must be finite and > 0");
    }
    return 2.0 * std::numbers::pi * frequency_hz / kSpeedOfLight;
}

inline double wavelength(double frequency_hz) { return kSpeedOfLight / frequency_hz; }

/// H0^(2)(x) = J0(x) - j Y0(x), x > 0.
inline Complex hankel2_0(double x) {
    if (!(x > 0.0)) throw DomainError("hankel2_0: argument must be > 0");
    const auto [j, y] = special::bessel_order0(x);
    return {j, -y};
}

/// Field of a unit z-directed line current at src, observed at obs:
/// -(k0 eta0 / 4) H0^(2)(k0 |obs - src|).
inline Complex incident_field(Point2 src, Point2 obs, double k0, double eta0 = kEta0) {
    const double r = distance(obs, src);
    if (!(r > 0.0)) throw DomainError("incident_field: source and observation points coincide");
    return -(k0 * eta0 / 4.0) * hankel2_0(k0 * r);
}

}  // namespace terrainprop::em
