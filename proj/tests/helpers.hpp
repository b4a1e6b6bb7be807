#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "clustervar/experiment.hpp"

namespace helpers {

// The 4-cluster hand instance used across the suites:
//   g1 (w=1, y=1,0)  g2 (w=1, y=1)  g3 (w=0, y=0,0)  g4 (w=0, y=1)
// Exact reference values come from tests/oracle/d0_bruteforce.py.
inline std::vector<clustervar::UnitRecord> d0_records() {
    return {{"g1", 1, 1.0}, {"g1", 1, 0.0}, {"g2", 1, 1.0},
            {"g3", 0, 0.0}, {"g3", 0, 0.0}, {"g4", 0, 1.0}};
}

inline clustervar::ValidatedExperiment d0_experiment() {
    return clustervar::validate(d0_records());
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    return lo + static_cast<double>(gen() >> 11) * 0x1.0p-53 * (hi - lo);
}

// Continuous-outcome instance with 2..26 clusters of 1..8 units. The first
// two clusters pin one arm each so validation always succeeds; cluster ids
// deliberately sort differently from their insertion order.
inline std::vector<clustervar::UnitRecord> random_instance(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const std::size_t n_clusters = 2 + gen() % 25;
    std::vector<clustervar::UnitRecord> records;
    for (std::size_t g = 0; g < n_clusters; ++g) {
        const int arm = (g < 2) ? static_cast<int>(g % 2) : static_cast<int>(gen() % 2);
        const std::size_t size = 1 + gen() % 8;
        const double center = uniform(gen, -5.0, 5.0);
        const double spread = uniform(gen, 0.1, 3.0);
        const std::string id = "k" + std::to_string(g);
        for (std::size_t j = 0; j < size; ++j) {
            records.push_back({id, arm, center + uniform(gen, -spread, spread)});
        }
    }
    return records;
}

inline std::vector<clustervar::UnitRecord> shuffled(std::vector<clustervar::UnitRecord> records,
                                                    std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::shuffle(records.begin(), records.end(), gen);
    return records;
}

inline std::string to_csv(const std::vector<clustervar::UnitRecord>& records) {
    std::string out = "cluster_id,w,y\n";
    char buf[64];
    for (const auto& rec : records) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g\n", rec.cluster_id.c_str(), rec.w, rec.y);
        out += buf;
    }
    return out;
}

inline double rel_diff(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

}  // namespace helpers
