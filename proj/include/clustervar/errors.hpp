#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clustervar {

// Root of the library's error hierarchy. Everything thrown on bad input or
// bad numeric state derives from this, so callers can catch one type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A data row that cannot be interpreted: wrong field count, quoted field,
// assignment not literally "0"/"1", or a non-finite outcome. Lines are
// 1-based and count the header row.
class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, const std::string& detail)
        : Error("malformed row at line " + std::to_string(line) + ": " + detail),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class MissingColumn : public Error {
public:
    explicit MissingColumn(const std::string& name)
        : Error("missing required column: " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class EmptyFile : public Error {
public:
    EmptyFile() : Error("input contains no data rows") {}
};

// A record that violates the unit invariants (assignment outside {0,1} or a
// non-finite outcome) reached validate() without going through parse_csv.
class InvalidRecord : public Error {
public:
    InvalidRecord(std::size_t index, const std::string& detail)
        : Error("invalid unit record at index " + std::to_string(index) + ": " + detail) {}
};

class MixedAssignmentCluster : public Error {
public:
    explicit MixedAssignmentCluster(const std::string& cluster_id)
        : Error("cluster '" + cluster_id + "' contains both treated and control units"),
          cluster_id_(cluster_id) {}
    const std::string& cluster_id() const noexcept { return cluster_id_; }

private:
    std::string cluster_id_;
};

class EmptyArm : public Error {
public:
    explicit EmptyArm(const std::string& arm)
        : Error("experiment has no units in the " + arm + " arm") {}
};

class LengthMismatch : public Error {
public:
    LengthMismatch(std::size_t expected, std::size_t got)
        : Error("residual list length " + std::to_string(got) +
                " does not match unit count " + std::to_string(expected)) {}
};

class SingularMatrix : public Error {
public:
    SingularMatrix() : Error("2x2 matrix is singular") {}
};

class InsufficientClusters : public Error {
public:
    explicit InsufficientClusters(const std::string& detail)
        : Error("insufficient clusters: " + detail) {}
};

// Unreachable for aggregates built from non-empty clusters; kept so that
// hand-built moment sets fail loudly instead of dividing by zero.
class DegenerateArm : public Error {
public:
    DegenerateArm() : Error("arm has zero mean cluster size") {}
};

}  // namespace clustervar
