#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "clustervar/estimators.hpp"
#include "clustervar/simulation.hpp"

namespace clustervar {

// Minimal JSON emitter with insertion-ordered keys and reals printed at 17
// significant digits, so identical inputs always produce identical bytes.
// (The general-purpose JSON library cannot pin either property.)
class JsonWriter {
public:
    void obj_begin() {
        item_prefix();
        out_ += '{';
        fresh_.push_back(true);
    }
    void obj_end() {
        out_ += '}';
        fresh_.pop_back();
    }
    void arr_begin() {
        item_prefix();
        out_ += '[';
        fresh_.push_back(true);
    }
    void arr_end() {
        out_ += ']';
        fresh_.pop_back();
    }
    void key(std::string_view name) {
        item_prefix();
        append_quoted(name);
        out_ += ':';
        fresh_.back() = true;  // the value that follows carries no comma
    }
    void real(double v) {
        item_prefix();
        if (!std::isfinite(v)) {
            out_ += "null";
            return;
        }
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out_ += buf;
    }
    void integer(std::uint64_t v) {
        item_prefix();
        out_ += std::to_string(v);
    }
    void boolean(bool v) {
        item_prefix();
        out_ += v ? "true" : "false";
    }
    void text(std::string_view s) {
        item_prefix();
        append_quoted(s);
    }
    const std::string& str() const { return out_; }

private:
    void item_prefix() {
        if (fresh_.empty()) return;
        if (!fresh_.back()) {
            out_ += ',';
        }
        fresh_.back() = false;
    }
    void append_quoted(std::string_view s) {
        out_ += '"';
        for (const char c : s) {
            switch (c) {
                case '"': out_ += "\\\""; break;
                case '\\': out_ += "\\\\"; break;
                case '\n': out_ += "\\n"; break;
                case '\r': out_ += "\\r"; break;
                case '\t': out_ += "\\t"; break;
                default:
                    if (static_cast<unsigned char>(c) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out_ += buf;
                    } else {
                        out_ += c;
                    }
            }
        }
        out_ += '"';
    }

    std::string out_;
    std::vector<bool> fresh_;
};

inline void write_report(JsonWriter& w, const VarianceReport& report) {
    w.obj_begin();
    w.key("estimate");
    w.obj_begin();
    w.key("alpha_hat");
    w.real(report.estimate.alpha_hat);
    w.key("tau_hat");
    w.real(report.estimate.tau_hat);
    w.obj_end();
    w.key("var_sandwich");
    w.real(report.var_sandwich);
    w.key("var_simplified");
    w.real(report.var_simplified);
    w.key("var_delta_pop");
    w.real(report.var_delta_pop);
    if (report.var_delta_sample) {
        w.key("var_delta_sample");
        w.real(*report.var_delta_sample);
    }
    w.key("max_rel_discrepancy");
    w.real(report.max_rel_discrepancy);
    w.key("ci_low");
    w.real(report.ci_low);
    w.key("ci_high");
    w.real(report.ci_high);
    w.obj_end();
}

inline void write_coverage(JsonWriter& w, const CoverageResult& result) {
    w.obj_begin();
    w.key("replications");
    w.integer(result.replications);
    w.key("covered");
    w.integer(result.covered);
    w.key("coverage_rate");
    w.real(result.coverage_rate);
    w.key("mean_tau_hat");
    w.real(result.mean_tau_hat);
    w.key("mean_variance");
    w.real(result.mean_variance);
    w.key("empirical_variance_of_tau_hat");
    w.real(result.empirical_variance_of_tau_hat);
    w.key("skipped");
    w.integer(result.skipped);
    w.obj_end();
}

inline void write_sweep(JsonWriter& w, const SweepResult& result) {
    w.obj_begin();
    w.key("max_discrepancy");
    w.real(result.max_discrepancy);
    w.key("worst_seed");
    w.integer(result.worst_seed);
    w.key("analyzed");
    w.integer(result.analyzed);
    w.key("skipped");
    w.integer(result.skipped);
    w.obj_end();
}

}  // namespace clustervar
