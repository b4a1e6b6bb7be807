#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clustervar/errors.hpp"

namespace clustervar {

// One experimental unit: opaque cluster key, binary assignment, real outcome.
struct UnitRecord {
    std::string cluster_id;
    int w = 0;   // assignment, exactly 0 or 1
    double y = 0.0;

    friend bool operator==(const UnitRecord&, const UnitRecord&) = default;
};

// Unit table plus arm totals and the cluster index. The index is an ordered
// map so every reduction in the library walks clusters in one fixed order
// (lexicographic by id); within a cluster, summation sorts values first.
// That makes all downstream estimates exactly invariant to row order.
struct ValidatedExperiment {
    std::vector<UnitRecord> units;
    std::size_t n_treat = 0;
    std::size_t n_control = 0;
    std::size_t n_units = 0;
    std::map<std::string, std::vector<std::size_t>> cluster_index;
};

// Per-cluster sufficient statistics. Exactly one of the residual sums is
// structurally zero (a sum over an empty set), because assignment is
// homogeneous within a cluster.
struct ClusterAggregate {
    std::string cluster_id;
    std::size_t n_units = 0;          // cluster size
    double outcome_sum = 0.0;         // sum of y over the cluster
    int arm = 0;                      // the cluster's assignment
    double treated_resid_sum = 0.0;   // sum of residuals over treated units
    double control_resid_sum = 0.0;   // sum of residuals over control units
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

// Sum of the values at the given positions, smallest value first. Sorting
// makes the accumulation order a function of the multiset only, not of the
// row order the values arrived in.
inline double sorted_sum(std::span<const double> values,
                         std::span<const std::size_t> positions) {
    std::vector<double> picked;
    picked.reserve(positions.size());
    for (std::size_t p : positions) picked.push_back(values[p]);
    std::sort(picked.begin(), picked.end());
    double total = 0.0;
    for (double v : picked) total += v;
    return total;
}

}  // namespace detail

// Parses the unit table from CSV text. The header row must name cluster_id,
// w and y (any order, extra columns ignored). Assignment must be literally
// "0" or "1"; the outcome must parse as a finite real with no surrounding
// whitespace. Quoted fields are rejected. LF and CRLF both accepted.
inline std::vector<UnitRecord> parse_csv(std::istream& in) {
    std::string raw;
    if (!std::getline(in, raw)) throw EmptyFile();
    std::string_view header = detail::strip_cr(raw);
    const auto names = detail::split_fields(header);

    auto find_column = [&](std::string_view want) -> std::size_t {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == want) return i;
        }
        throw MissingColumn(std::string(want));
    };
    const std::size_t col_cluster = find_column("cluster_id");
    const std::size_t col_w = find_column("w");
    const std::size_t col_y = find_column("y");

    std::vector<UnitRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = detail::strip_cr(raw);
        const auto fields = detail::split_fields(line);
        if (fields.size() != names.size()) {
            throw MalformedRow(line_no, "expected " + std::to_string(names.size()) +
                                            " fields, found " + std::to_string(fields.size()));
        }
        for (const auto f : fields) {
            if (!f.empty() && f.front() == '"') {
                throw MalformedRow(line_no, "quoted fields are not supported");
            }
        }

        UnitRecord rec;
        rec.cluster_id = std::string(fields[col_cluster]);

        const std::string_view wf = fields[col_w];
        if (wf == "0") {
            rec.w = 0;
        } else if (wf == "1") {
            rec.w = 1;
        } else {
            throw MalformedRow(line_no, "assignment must be 0 or 1, got '" + std::string(wf) + "'");
        }

        const std::string_view yf = fields[col_y];
        const auto [ptr, ec] =
            std::from_chars(yf.data(), yf.data() + yf.size(), rec.y);
        if (ec != std::errc{} || ptr != yf.data() + yf.size() || !std::isfinite(rec.y)) {
            throw MalformedRow(line_no, "outcome is not a finite real: '" + std::string(yf) + "'");
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw EmptyFile();
    return records;
}

// Checks cluster-level assignment homogeneity and that both arms are
// populated, then builds the cluster index. Record order is preserved.
inline ValidatedExperiment validate(std::vector<UnitRecord> records) {
    ValidatedExperiment exp;
    exp.n_units = records.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const UnitRecord& rec = records[i];
        if (rec.w != 0 && rec.w != 1) {
            throw InvalidRecord(i, "assignment must be 0 or 1");
        }
        if (!std::isfinite(rec.y)) {
            throw InvalidRecord(i, "outcome is not finite");
        }
        if (rec.w == 1) {
            ++exp.n_treat;
        } else {
            ++exp.n_control;
        }
        auto [it, inserted] = exp.cluster_index.try_emplace(rec.cluster_id);
        if (!inserted && records[it->second.front()].w != rec.w) {
            throw MixedAssignmentCluster(rec.cluster_id);
        }
        it->second.push_back(i);
    }
    if (exp.n_treat == 0) throw EmptyArm("treatment");
    if (exp.n_control == 0) throw EmptyArm("control");
    exp.units = std::move(records);
    return exp;
}

// Reduces unit-level data to per-cluster sufficient statistics. `residuals`
// must be positionally aligned with exp.units. Aggregates come back in the
// cluster index order (sorted by id); sums are accumulated value-sorted, so
// the result is a pure function of the data multiset.
inline std::vector<ClusterAggregate> aggregate_clusters(const ValidatedExperiment& exp,
                                                        std::span<const double> residuals) {
    if (residuals.size() != exp.n_units) {
        throw LengthMismatch(exp.n_units, residuals.size());
    }
    std::vector<double> outcomes;
    outcomes.reserve(exp.n_units);
    for (const UnitRecord& u : exp.units) outcomes.push_back(u.y);

    std::vector<ClusterAggregate> aggregates;
    aggregates.reserve(exp.cluster_index.size());
    for (const auto& [id, positions] : exp.cluster_index) {
        ClusterAggregate agg;
        agg.cluster_id = id;
        agg.n_units = positions.size();
        agg.arm = exp.units[positions.front()].w;
        agg.outcome_sum = detail::sorted_sum(outcomes, positions);
        const double resid_sum = detail::sorted_sum(residuals, positions);
        if (agg.arm == 1) {
            agg.treated_resid_sum = resid_sum;
        } else {
            agg.control_resid_sum = resid_sum;
        }
        aggregates.push_back(std::move(agg));
    }
    return aggregates;
}

}  // namespace clustervar
