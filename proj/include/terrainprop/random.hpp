#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace terrainprop {

/// Standard normal draws with a fully specified algorithm (mt19937_64 +
/// Box-Muller), so generated terrain is bit-identical across standard
/// libraries. std::normal_distribution leaves its algorithm unspecified.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1], u2 in [0, 1)
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double operator()(double stddev) { return stddev * (*this)(); }

private:
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace terrainprop
