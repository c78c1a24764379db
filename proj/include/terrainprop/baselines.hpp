#pragma once

// Reference propagation models on the same dB scale as mom::path_gain:
// Deygout multiple knife-edge diffraction and the flat-PEC two-ray field.

#include <cmath>
#include <complex>
#include <optional>
#include <utility>

#include "em_core.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "mom.hpp"
#include "terrain.hpp"

namespace terrainprop::baselines {

/// Fresnel-Kirchhoff parameter of `edge` on the tx -> rx path. Clearance is
/// measured vertically from the straight tx-rx line; distances are horizontal.
inline double fresnel_v(Point2 tx, Point2 rx, Point2 edge, double wavelength_m) {
    const double d1 = edge.x - tx.x;
    const double d2 = rx.x - edge.x;
    if (!(d1 > 0.0) || !(d2 > 0.0) || !(wavelength_m > 0.0)) {
        throw DomainError("fresnel_v: need tx.x < edge.x < rx.x and wavelength > 0");
    }
    const double line_height = tx.y + (rx.y - tx.y) * d1 / (d1 + d2);
    const double clearance = edge.y - line_height;
    return clearance * std::sqrt(2.0 * (d1 + d2) / (wavelength_m * d1 * d2));
}

inline constexpr double kKnifeEdgeThreshold = -0.78;

/// Single knife-edge loss, ITU-R P.526 approximation of J(v), in dB.
inline double knife_edge_loss(double v) {
    if (!(v > kKnifeEdgeThreshold)) return 0.0;
    const double a = v - 0.1;
    return 6.9 + 20.0 * std::log10(std::sqrt(a * a + 1.0) + a);
}

/// Free-space path gain of the line source on the mom::path_gain scale.
inline double free_space_gain_db(double range_m, double k0, double eta0 = em::kEta0) {
    const std::complex<double> e = -(0.25 * k0 * eta0) * em::hankel2_0(k0 * range_m);
    return mom::field_to_db(e, range_m, k0, eta0);
}

struct KnifeEdgeResult {
    double loss_db = 0.0;  // total diffraction loss, >= 0
    std::optional<std::size_t> dominant_edge_index;
    std::pair<double, double> sub_losses_db{0.0, 0.0};
    double free_space_db = 0.0;
    double path_gain_db = 0.0;  // free_space_db - loss_db
};

namespace detail {

struct Edge {
    std::size_t index;
    double v;
};

inline std::optional<Edge> dominant_edge(std::span<const Point2> points, std::size_t from, std::size_t to,
                                         Point2 tx, Point2 rx, double wavelength) {
    std::optional<Edge> best;
    for (std::size_t i = from + 1; i < to; ++i) {
        const double v = fresnel_v(tx, rx, points[i], wavelength);
        if (!best || v > best->v) best = Edge{i, v};
    }
    if (best && best->v <= kKnifeEdgeThreshold) return std::nullopt;
    return best;
}

}  // namespace detail

/// Deygout construction limited to three edges: the dominant edge of the
/// whole path plus the dominant edge of each sub-path on either side of it.
/// Edge candidates are the sampled terrain points strictly between tx and rx.
/// max_edges = 1 keeps the dominant edge only.
inline KnifeEdgeResult deygout_loss(const terrain::TerrainProfile& profile, const em::RadioConfig& radio,
                                    std::size_t rx_index, int max_edges = 3) {
    if (rx_index < 1 || rx_index >= profile.size()) throw DomainError("deygout_loss: rx_index out of range");
    if (max_edges != 1 && max_edges != 3) throw DomainError("deygout_loss: max_edges must be 1 or 3");
    const auto surface = mom::surface_vertices(profile);
    const auto link = mom::link_geometry(profile, radio);
    const double lambda = em::wavelength(radio.frequency_hz);
    const double k0 = em::wavenumber(radio.frequency_hz);
    const Point2 tx = link.tx;
    const Point2 rx = link.rx[rx_index];

    KnifeEdgeResult result;
    result.free_space_db = free_space_gain_db(distance(tx, rx), k0);
    if (const auto main = detail::dominant_edge(surface, 0, rx_index, tx, rx, lambda)) {
        const Point2 apex = surface[main->index];
        result.dominant_edge_index = main->index;
        result.loss_db = knife_edge_loss(main->v);
        if (max_edges == 1) {
            result.path_gain_db = result.free_space_db - result.loss_db;
            return result;
        }
        if (const auto left = detail::dominant_edge(surface, 0, main->index, tx, apex, lambda)) {
            result.sub_losses_db.first = knife_edge_loss(left->v);
        }
        if (const auto right = detail::dominant_edge(surface, main->index, rx_index, apex, rx, lambda)) {
            result.sub_losses_db.second = knife_edge_loss(right->v);
        }
        result.loss_db += result.sub_losses_db.first + result.sub_losses_db.second;
    }
    result.path_gain_db = result.free_space_db - result.loss_db;
    return result;
}

/// Direct path plus image path over a flat perfect conductor (reflection
/// coefficient -1 for TM^z), on the mom::path_gain scale. `reflection`
/// scales the image term for partially blocked constructions.
inline double two_ray_reference(double distance_m, double h_tx_m, double h_rx_m, double k0,
                                double reflection = -1.0, double eta0 = em::kEta0) {
    const double dh = h_tx_m - h_rx_m;
    const double sh = h_tx_m + h_rx_m;
    const double direct = std::hypot(distance_m, dh);
    if (!(distance_m >= 0.0) || !(direct > 0.0) || h_tx_m < 0.0 || h_rx_m < 0.0 || !(k0 > 0.0)) {
        throw DomainError("two_ray_reference: need distance >= 0, a nonzero direct path, heights >= 0, k0 > 0");
    }
    const double reflected = std::hypot(distance_m, sh);
    const std::complex<double> field =
        -(0.25 * k0 * eta0) * (em::hankel2_0(k0 * direct) + reflection * em::hankel2_0(k0 * reflected));
    return mom::field_to_db(field, direct, k0, eta0);
}

}  // namespace terrainprop::baselines
