#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "clustervar/errors.hpp"
#include "clustervar/experiment.hpp"

namespace clustervar {

// Symmetric-by-construction 2x2 block used for the bread/meat/sandwich
// algebra. Kept as four explicit entries; no general matrix machinery.
struct Matrix2 {
    double a11 = 0.0;
    double a12 = 0.0;
    double a21 = 0.0;
    double a22 = 0.0;
};

struct AteEstimate {
    double alpha_hat = 0.0;  // control-arm mean
    double tau_hat = 0.0;    // difference of arm means
};

enum class MomentMode { population, sample };

// Second moments of the per-cluster (outcome_sum, size) pairs for one arm.
// Population mode divides centered sums by n, sample mode by n - 1.
// ratio_dev_sq_sum is the undivided quadratic form the variance fields
// combine into: sum over clusters of [(r - mu_r) - theta (n - mu_n)]^2 with
// theta = mu_r/mu_n. Accumulating it directly keeps the form a sum of
// squares, which stays accurate when a large outcome shift inflates the
// individual moments.
struct ArmMoments {
    std::size_t n_clusters = 0;
    double mean_outcome_sum = 0.0;
    double mean_cluster_size = 0.0;
    double var_outcome_sum = 0.0;
    double var_cluster_size = 0.0;
    double cov_outcome_size = 0.0;
    double ratio_dev_sq_sum = 0.0;
    MomentMode mode = MomentMode::population;
};

struct VarianceReport {
    AteEstimate estimate;
    double var_sandwich = 0.0;
    double var_simplified = 0.0;
    double var_delta_pop = 0.0;
    // Absent when either arm has fewer than 2 clusters.
    std::optional<double> var_delta_sample;
    double max_rel_discrepancy = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

// Standard normal quantile, Wichura's AS 241 (PPND16) rational
// approximations; accurate to about 1e-15 over (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("normal_quantile requires p in (0,1)");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                  6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
              1.3314166789178437745e2) * r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                  3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
              4.2313330701600911252e1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
        value = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        value = num / den;
    }
    return (q < 0.0) ? -value : value;
}

// Difference-in-means estimate of the average treatment effect. Arm totals
// are accumulated per cluster in index order so the estimate is exactly
// row-order independent.
inline AteEstimate difference_in_means(const ValidatedExperiment& exp) {
    std::vector<double> outcomes;
    outcomes.reserve(exp.n_units);
    for (const UnitRecord& u : exp.units) outcomes.push_back(u.y);

    double treat_sum = 0.0;
    double control_sum = 0.0;
    for (const auto& [id, positions] : exp.cluster_index) {
        const double cluster_sum = detail::sorted_sum(outcomes, positions);
        if (exp.units[positions.front()].w == 1) {
            treat_sum += cluster_sum;
        } else {
            control_sum += cluster_sum;
        }
    }
    AteEstimate est;
    est.alpha_hat = control_sum / static_cast<double>(exp.n_control);
    est.tau_hat = treat_sum / static_cast<double>(exp.n_treat) - est.alpha_hat;
    return est;
}

// Residual of each unit against its fitted arm mean, in unit order.
// Within-arm residual sums are zero up to accumulation rounding.
inline std::vector<double> residuals(const ValidatedExperiment& exp, const AteEstimate& est) {
    std::vector<double> out;
    out.reserve(exp.n_units);
    for (const UnitRecord& u : exp.units) {
        out.push_back(u.y - est.alpha_hat - est.tau_hat * static_cast<double>(u.w));
    }
    return out;
}

namespace detail {

inline Matrix2 bread_matrix(std::size_t n_treat, std::size_t n_control) {
    const double nt = static_cast<double>(n_treat);
    const double n = static_cast<double>(n_treat + n_control);
    return {n, nt, nt, nt};
}

// Removes the arm-mean rounding drift from the residual cluster sums: after
// this, each arm's sums total exactly zero, as the fitted means make them in
// exact arithmetic. An arm with a single cluster comes out exactly 0.
inline void refine_arm_sums(std::vector<ClusterAggregate>& aggregates,
                            std::size_t n_treat, std::size_t n_control) {
    double treat_drift = 0.0;
    double control_drift = 0.0;
    for (const ClusterAggregate& a : aggregates) {
        treat_drift += a.treated_resid_sum;
        control_drift += a.control_resid_sum;
    }
    for (ClusterAggregate& a : aggregates) {
        const double share =
            static_cast<double>(a.n_units) /
            static_cast<double>(a.arm == 1 ? n_treat : n_control);
        if (a.arm == 1) {
            a.treated_resid_sum -= share * treat_drift;
        } else {
            a.control_resid_sum -= share * control_drift;
        }
    }
}

}  // namespace detail

// Design cross-product: [[N, N_T], [N_T, N_T]].
inline Matrix2 bread(const ValidatedExperiment& exp) {
    return detail::bread_matrix(exp.n_treat, exp.n_control);
}

// Adjugate-over-determinant inverse. For a bread matrix this reproduces the
// closed form [[1/N_C, -1/N_C], [-1/N_C, 1/N_T + 1/N_C]].
inline Matrix2 invert2(const Matrix2& m) {
    const double det = m.a11 * m.a22 - m.a12 * m.a21;
    if (det == 0.0) throw SingularMatrix();
    return {m.a22 / det, -m.a12 / det, -m.a21 / det, m.a11 / det};
}

inline Matrix2 multiply(const Matrix2& x, const Matrix2& y) {
    return {x.a11 * y.a11 + x.a12 * y.a21, x.a11 * y.a12 + x.a12 * y.a22,
            x.a21 * y.a11 + x.a22 * y.a21, x.a21 * y.a12 + x.a22 * y.a22};
}

// Middle factor of the sandwich, accumulated the long way: one score vector
// (s_T + s_C, s_T) per cluster, summed outer products. Deliberately not the
// simplified closed form; the test suite compares the two.
inline Matrix2 meat(std::span<const ClusterAggregate> aggregates) {
    Matrix2 m;
    for (const ClusterAggregate& a : aggregates) {
        const double u1 = a.treated_resid_sum + a.control_resid_sum;
        const double u2 = a.treated_resid_sum;
        m.a11 += u1 * u1;
        m.a12 += u1 * u2;
        m.a21 += u2 * u1;
        m.a22 += u2 * u2;
    }
    return m;
}

// Two-term residual-cluster-sum variance:
// sum s_T^2 / N_T^2 + sum s_C^2 / N_C^2.
inline double variance_simplified(std::span<const ClusterAggregate> aggregates,
                                  std::size_t n_treat, std::size_t n_control) {
    double sum_st2 = 0.0;
    double sum_sc2 = 0.0;
    for (const ClusterAggregate& a : aggregates) {
        sum_st2 += a.treated_resid_sum * a.treated_resid_sum;
        sum_sc2 += a.control_resid_sum * a.control_resid_sum;
    }
    const double nt = static_cast<double>(n_treat);
    const double nc = static_cast<double>(n_control);
    return sum_st2 / (nt * nt) + sum_sc2 / (nc * nc);
}

// Two-pass moments of (outcome_sum, size) over one arm's clusters. All
// aggregates must share one arm; the caller does the splitting.
inline ArmMoments arm_moments(std::span<const ClusterAggregate> arm_aggregates,
                              MomentMode mode) {
    const std::size_t n = arm_aggregates.size();
    if (n == 0) throw InsufficientClusters("arm has no clusters");
    if (mode == MomentMode::sample && n < 2) {
        throw InsufficientClusters("sample moments need at least 2 clusters in each arm");
    }
    ArmMoments m;
    m.n_clusters = n;
    m.mode = mode;

    double sum_r = 0.0;
    double sum_n = 0.0;
    for (const ClusterAggregate& a : arm_aggregates) {
        sum_r += a.outcome_sum;
        sum_n += static_cast<double>(a.n_units);
    }
    m.mean_outcome_sum = sum_r / static_cast<double>(n);
    m.mean_cluster_size = sum_n / static_cast<double>(n);

    const double theta = m.mean_outcome_sum / m.mean_cluster_size;
    double crr = 0.0;
    double cnn = 0.0;
    double crn = 0.0;
    double quad = 0.0;
    for (const ClusterAggregate& a : arm_aggregates) {
        const double dr = a.outcome_sum - m.mean_outcome_sum;
        const double dn = static_cast<double>(a.n_units) - m.mean_cluster_size;
        crr += dr * dr;
        cnn += dn * dn;
        crn += dr * dn;
        const double dev = dr - theta * dn;
        quad += dev * dev;
    }
    const double div = static_cast<double>(mode == MomentMode::sample ? n - 1 : n);
    m.var_outcome_sum = crr / div;
    m.var_cluster_size = cnn / div;
    m.cov_outcome_size = crn / div;
    m.ratio_dev_sq_sum = quad;
    return m;
}

// One arm's contribution to the ratio-linearized variance:
//   var_r/(n mu_n^2) - 2 mu_r cov/(n mu_n^3) + mu_r^2 var_n/(n mu_n^4).
// Evaluated from ratio_dev_sq_sum, the same quadratic form kept as a sum of
// squares: nonnegative by construction, exactly zero for dispersion-free
// arms, and stable under large outcome shifts.
inline double delta_arm_variance(const ArmMoments& m) {
    if (m.mean_cluster_size == 0.0) throw DegenerateArm();
    const double n = static_cast<double>(m.n_clusters);
    const double div = (m.mode == MomentMode::sample) ? n - 1.0 : n;
    const double quad = m.ratio_dev_sq_sum / div;
    return quad / (n * m.mean_cluster_size * m.mean_cluster_size);
}

namespace detail {

inline Matrix2 sandwich_from_aggregates(std::span<const ClusterAggregate> aggregates,
                                        std::size_t n_treat, std::size_t n_control) {
    const Matrix2 bread_inv = invert2(bread_matrix(n_treat, n_control));
    return multiply(multiply(bread_inv, meat(aggregates)), bread_inv);
}

inline double delta_from_aggregates(std::span<const ClusterAggregate> aggregates,
                                    MomentMode mode) {
    std::vector<ClusterAggregate> treat;
    std::vector<ClusterAggregate> control;
    for (const ClusterAggregate& a : aggregates) {
        (a.arm == 1 ? treat : control).push_back(a);
    }
    return delta_arm_variance(arm_moments(treat, mode)) +
           delta_arm_variance(arm_moments(control, mode));
}

// Shared estimation chain: residuals are computed once from the
// full-experiment fit and every estimator consumes the same aggregates.
inline std::vector<ClusterAggregate> estimation_aggregates(const ValidatedExperiment& exp,
                                                           const AteEstimate& est) {
    const std::vector<double> eps = residuals(exp, est);
    std::vector<ClusterAggregate> aggregates = aggregate_clusters(exp, eps);
    refine_arm_sums(aggregates, exp.n_treat, exp.n_control);
    return aggregates;
}

inline double clamp_nonnegative(double v) { return v < 0.0 ? 0.0 : v; }

inline double relative_discrepancy(double a, double b, double zero_floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), zero_floor});
}

// Variance magnitude below which the three routes are numerically
// indistinguishable from zero: the footprint of residual arm sums that are
// zero up to 1e-10 of the outcome mass, pushed through the two-term
// estimator. Values under this floor are rounding residue of an exact zero
// (e.g. arms whose clusters are exactly proportional), not an algorithmic
// discrepancy.
inline double discrepancy_floor(const ValidatedExperiment& exp) {
    double outcome_mass = 0.0;
    for (const UnitRecord& u : exp.units) outcome_mass += std::abs(u.y);
    const double noise = 1e-10 * outcome_mass;
    const double nt = static_cast<double>(exp.n_treat);
    const double nc = static_cast<double>(exp.n_control);
    const double floor = noise * noise * (1.0 / (nt * nt) + 1.0 / (nc * nc));
    return std::max(floor, 1e-300);
}

}  // namespace detail

// Full covariance of (alpha_hat, tau_hat): bread^-1 * meat * bread^-1 via
// explicit 2x2 products. The (2,2) entry estimates Var(tau_hat).
inline Matrix2 sandwich_covariance(const ValidatedExperiment& exp) {
    const auto aggregates = detail::estimation_aggregates(exp, difference_in_means(exp));
    return detail::sandwich_from_aggregates(aggregates, exp.n_treat, exp.n_control);
}

// Ratio-of-means delta-method estimate of Var(tau_hat): the two arms are
// independent, so their linearized variances add.
inline double delta_method_variance(const ValidatedExperiment& exp, MomentMode mode) {
    const auto aggregates = detail::estimation_aggregates(exp, difference_in_means(exp));
    return detail::delta_from_aggregates(aggregates, mode);
}

// Runs every estimator path on one shared set of residuals and reports the
// point estimate, all variance routes, their worst pairwise relative
// discrepancy, and a normal-quantile CI built from the simplified variance.
inline VarianceReport analyze(const ValidatedExperiment& exp, double ci_level = 0.95) {
    if (!(ci_level > 0.0 && ci_level < 1.0)) {
        throw std::invalid_argument("ci_level must lie in (0,1)");
    }
    VarianceReport report;
    report.estimate = difference_in_means(exp);
    const auto aggregates = detail::estimation_aggregates(exp, report.estimate);

    report.var_simplified = variance_simplified(aggregates, exp.n_treat, exp.n_control);
    const Matrix2 cov = detail::sandwich_from_aggregates(aggregates, exp.n_treat, exp.n_control);
    report.var_sandwich = detail::clamp_nonnegative(cov.a22);
    report.var_delta_pop = detail::delta_from_aggregates(aggregates, MomentMode::population);

    std::size_t treat_clusters = 0;
    std::size_t control_clusters = 0;
    for (const ClusterAggregate& a : aggregates) {
        (a.arm == 1 ? treat_clusters : control_clusters) += 1;
    }
    if (treat_clusters >= 2 && control_clusters >= 2) {
        report.var_delta_sample = detail::delta_from_aggregates(aggregates, MomentMode::sample);
    }

    const double zero_floor = detail::discrepancy_floor(exp);
    report.max_rel_discrepancy = std::max(
        {detail::relative_discrepancy(report.var_sandwich, report.var_simplified, zero_floor),
         detail::relative_discrepancy(report.var_sandwich, report.var_delta_pop, zero_floor),
         detail::relative_discrepancy(report.var_simplified, report.var_delta_pop, zero_floor)});

    const double z = normal_quantile(0.5 * (1.0 + ci_level));
    const double half_width = z * std::sqrt(report.var_simplified);
    report.ci_low = report.estimate.tau_hat - half_width;
    report.ci_high = report.estimate.tau_hat + half_width;
    return report;
}

}  // namespace clustervar
