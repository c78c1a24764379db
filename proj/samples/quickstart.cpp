// Solve one random terrain profile with FAFFA and the exact forward
// substitution, compare both with Deygout, and print a few receivers.
//
//   ./quickstart [frequency_hz] [seed]

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "terrainprop/baselines.hpp"
#include "terrainprop/eval.hpp"
#include "terrainprop/mom.hpp"
#include "terrainprop/terrain.hpp"

namespace tp = terrainprop;

int main(int argc, char** argv) {
    const double freq = argc > 1 ? std::atof(argv[1]) : 30e6;
    const auto seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1ULL;

    const auto profile = tp::terrain::gen_gaussian({20.0, 800.0}, 256, 50.0, seed);
    tp::mom::SolverConfig cfg;
    cfg.radio.frequency_hz = freq;
    std::printf("%zu unknowns at %.1f MHz\n", tp::mom::count_unknowns(profile, cfg), freq / 1e6);

    auto timed = [&](tp::mom::Method m) {
        cfg.method = m;
        const auto t0 = std::chrono::steady_clock::now();
        auto pl = tp::mom::solve_profile(profile, cfg);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%-5s %.3f s\n", std::string(tp::mom::to_string(m)).c_str(), s);
        return pl;
    };
    const auto faffa = timed(tp::mom::Method::faffa);
    const auto exact = timed(tp::mom::Method::exact);

    std::vector<double> deygout(profile.size());
    for (std::size_t k = 1; k < profile.size(); ++k) {
        deygout[k] = tp::baselines::deygout_loss(profile, cfg.radio, k).path_gain_db;
    }
    deygout[0] = tp::mom::kFloorDb;  // masked below

    std::printf("\n range_m  height_m   exact_db   faffa_db  deygout_db\n");
    for (std::size_t k = 0; k < profile.size(); k += 32) {
        std::printf("%8.0f %9.2f %10.2f %10.2f %11.2f\n", profile.range_m(k), profile.heights_m[k],
                    exact.values_db[k], faffa.values_db[k], deygout[k]);
    }

    const tp::eval::Mask skip_first{true, {}};
    const auto f = tp::eval::error_stats(faffa.values_db, exact.values_db, skip_first);
    const auto d = tp::eval::error_stats(deygout, exact.values_db, skip_first);
    std::printf("\nvs exact   mean_db  std_db\nfaffa    %8.3f %7.3f\ndeygout  %8.3f %7.3f\n", f.mean_error_db,
                f.std_error_db, d.mean_error_db, d.std_error_db);
    return 0;
}
