#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "clustervar/estimators.hpp"
#include "clustervar/experiment.hpp"

namespace clustervar {

enum class Assignment { alternating, bernoulli_half };

// Data-generating process: Poisson cluster sizes, one success rate per
// cluster drawn uniformly, binary outcomes. Both arms draw rates from the
// same distribution, so the true average treatment effect is 0.
struct SimConfig {
    std::size_t n_clusters = 100;
    double mean_cluster_size = 10.0;
    double rate_low = 0.5;
    double rate_high = 1.0;
    Assignment assignment = Assignment::alternating;
    std::uint64_t seed = 1;
};

inline void check_config(const SimConfig& config) {
    if (config.n_clusters < 2) {
        throw std::invalid_argument("n_clusters must be at least 2");
    }
    if (!(config.mean_cluster_size > 0.0) || !std::isfinite(config.mean_cluster_size)) {
        throw std::invalid_argument("mean_cluster_size must be a positive real");
    }
    if (!(config.rate_low >= 0.0 && config.rate_low <= config.rate_high &&
          config.rate_high <= 1.0)) {
        throw std::invalid_argument("rates must satisfy 0 <= rate_low <= rate_high <= 1");
    }
}

// All randomness derives from std::mt19937_64 (bit-exact across platforms)
// through the documented maps below. No std::*_distribution is used, so the
// streams are reproducible everywhere.
namespace rng {

inline constexpr const char* kEngineName = "mt19937_64";
inline constexpr const char* kPoissonMethod = "cdf-inversion(chunked>30)";

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Per-replication seed: an index-injective affine map into splitmix64.
// Distinct indices under one master seed always get distinct seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

// Top 53 bits scaled into [0, 1).
inline double unit_uniform(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    return lo + unit_uniform(gen) * (hi - lo);
}

inline bool bernoulli(std::mt19937_64& gen, double p) {
    return unit_uniform(gen) < p;
}

// One uniform draw inverted through the Poisson CDF. Well-posed for
// mean <= 30 (exp(-mean) stays comfortably normal).
inline std::uint64_t poisson_inversion(std::mt19937_64& gen, double mean) {
    const double u = unit_uniform(gen);
    double pmf = std::exp(-mean);
    double cdf = pmf;
    std::uint64_t k = 0;
    const std::uint64_t cap = static_cast<std::uint64_t>(12.0 * mean) + 64;
    while (u > cdf && k < cap) {
        ++k;
        pmf *= mean / static_cast<double>(k);
        cdf += pmf;
    }
    return k;
}

// Means above 30 are split into ceil(mean/30) equal chunks and the chunk
// draws summed, keeping the inversion well-posed at any mean.
inline std::uint64_t poisson(std::mt19937_64& gen, double mean) {
    if (mean <= 30.0) return poisson_inversion(gen, mean);
    const std::uint64_t chunks = static_cast<std::uint64_t>(std::ceil(mean / 30.0));
    const double part = mean / static_cast<double>(chunks);
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < chunks; ++i) {
        total += poisson_inversion(gen, part);
    }
    return total;
}

}  // namespace rng

namespace detail {

inline std::string cluster_label(std::size_t index, std::size_t n_clusters) {
    std::size_t width = 1;
    for (std::size_t v = n_clusters; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index + 1);
    std::string label = "c";
    label.append(width > digits.size() ? width - digits.size() : 0, '0');
    label += digits;
    return label;
}

}  // namespace detail

// Draw order is fixed: all cluster sizes, then all rates, then (for
// bernoulli_half) all cluster assignments, then outcomes cluster by cluster.
// Size-0 clusters consume their draws but emit no rows. Deterministic in
// the seed.
inline std::vector<UnitRecord> generate(const SimConfig& config) {
    check_config(config);
    std::mt19937_64 gen(config.seed);

    std::vector<std::uint64_t> sizes(config.n_clusters);
    for (auto& s : sizes) s = rng::poisson(gen, config.mean_cluster_size);

    std::vector<double> rates(config.n_clusters);
    for (auto& r : rates) r = rng::uniform(gen, config.rate_low, config.rate_high);

    std::vector<int> arms(config.n_clusters);
    if (config.assignment == Assignment::alternating) {
        for (std::size_t g = 0; g < config.n_clusters; ++g) arms[g] = static_cast<int>(g % 2);
    } else {
        for (auto& a : arms) a = rng::bernoulli(gen, 0.5) ? 1 : 0;
    }

    std::vector<UnitRecord> records;
    for (std::size_t g = 0; g < config.n_clusters; ++g) {
        const std::string label = detail::cluster_label(g, config.n_clusters);
        for (std::uint64_t j = 0; j < sizes[g]; ++j) {
            records.push_back({label, arms[g], rng::bernoulli(gen, rates[g]) ? 1.0 : 0.0});
        }
    }
    return records;
}

struct SweepResult {
    double max_discrepancy = 0.0;
    std::uint64_t worst_seed = 0;
    std::size_t analyzed = 0;
    std::size_t skipped = 0;
};

// Generates and analyzes datasets for seeds base.seed .. base.seed+n_seeds-1
// (wrapping in 64 bits) and tracks the worst observed discrepancy among the
// three variance routes. Draws with an empty arm are skipped and counted.
inline SweepResult equivalence_sweep(const SimConfig& base, std::size_t n_seeds) {
    SweepResult result;
    result.worst_seed = base.seed;
    SimConfig config = base;
    for (std::size_t i = 0; i < n_seeds; ++i) {
        config.seed = base.seed + i;
        std::vector<UnitRecord> records = generate(config);
        if (records.empty()) {
            ++result.skipped;
            continue;
        }
        ValidatedExperiment exp;
        try {
            exp = validate(std::move(records));
        } catch (const EmptyArm&) {
            ++result.skipped;
            continue;
        }
        const VarianceReport report = analyze(exp);
        if (result.analyzed == 0 || report.max_rel_discrepancy > result.max_discrepancy) {
            result.max_discrepancy = report.max_rel_discrepancy;
            result.worst_seed = config.seed;
        }
        ++result.analyzed;
    }
    return result;
}

struct CoverageResult {
    std::size_t replications = 0;
    std::size_t covered = 0;
    double coverage_rate = 0.0;
    double mean_tau_hat = 0.0;
    double mean_variance = 0.0;
    double empirical_variance_of_tau_hat = 0.0;
    std::size_t skipped = 0;
};

// Monte Carlo check of CI coverage against the true effect 0. Replication
// seeds come from rng::derive_seed(base.seed, i), so the result does not
// depend on execution order. coverage_rate is over completed replications;
// empty-arm draws are skipped and counted.
inline CoverageResult coverage_study(const SimConfig& base, std::size_t replications,
                                     double ci_level) {
    if (replications == 0) {
        throw std::invalid_argument("replications must be positive");
    }
    CoverageResult result;
    result.replications = replications;

    std::vector<double> tau_hats;
    std::vector<double> variances;
    tau_hats.reserve(replications);
    variances.reserve(replications);

    SimConfig config = base;
    for (std::size_t i = 0; i < replications; ++i) {
        config.seed = rng::derive_seed(base.seed, i);
        std::vector<UnitRecord> records = generate(config);
        if (records.empty()) {
            ++result.skipped;
            continue;
        }
        ValidatedExperiment exp;
        try {
            exp = validate(std::move(records));
        } catch (const EmptyArm&) {
            ++result.skipped;
            continue;
        }
        const VarianceReport report = analyze(exp, ci_level);
        tau_hats.push_back(report.estimate.tau_hat);
        variances.push_back(report.var_simplified);
        if (report.ci_low <= 0.0 && 0.0 <= report.ci_high) ++result.covered;
    }

    const std::size_t completed = tau_hats.size();
    if (completed == 0) return result;

    result.coverage_rate =
        static_cast<double>(result.covered) / static_cast<double>(completed);
    double tau_sum = 0.0;
    for (double t : tau_hats) tau_sum += t;
    result.mean_tau_hat = tau_sum / static_cast<double>(completed);
    double var_sum = 0.0;
    for (double v : variances) var_sum += v;
    result.mean_variance = var_sum / static_cast<double>(completed);
    if (completed >= 2) {
        double centered = 0.0;
        for (double t : tau_hats) {
            const double d = t - result.mean_tau_hat;
            centered += d * d;
        }
        result.empirical_variance_of_tau_hat = centered / static_cast<double>(completed - 1);
    }
    return result;
}

}  // namespace clustervar
