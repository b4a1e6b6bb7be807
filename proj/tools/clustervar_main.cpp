// clustervar: analyze cluster-randomized experiments from CSV, generate
// simulated datasets, and run equivalence / coverage studies.
//
// Exit codes: 0 success, 1 input or parameter error, 2 equivalence-tolerance
// violation. JSON output is byte-stable for identical inputs.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clustervar/clustervar.hpp"

namespace {

using clustervar::JsonWriter;

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitEquivalenceViolation = 2;

struct SimFlags {
    std::size_t clusters = 100;
    double mean_size = 10.0;
    double rate_low = 0.5;
    double rate_high = 1.0;
    std::string assignment = "alternating";
    std::uint64_t seed = 1;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
    cmd->add_option("--clusters", f.clusters, "Number of clusters")->capture_default_str();
    cmd->add_option("--mean-size", f.mean_size, "Poisson mean cluster size")
        ->capture_default_str();
    cmd->add_option("--rate-low", f.rate_low, "Lower bound of the per-cluster rate")
        ->capture_default_str();
    cmd->add_option("--rate-high", f.rate_high, "Upper bound of the per-cluster rate")
        ->capture_default_str();
    cmd->add_option("--assignment", f.assignment, "Cluster assignment scheme")
        ->check(CLI::IsMember({"alternating", "bernoulli"}))
        ->capture_default_str();
    cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
}

clustervar::SimConfig to_config(const SimFlags& f) {
    clustervar::SimConfig config;
    config.n_clusters = f.clusters;
    config.mean_cluster_size = f.mean_size;
    config.rate_low = f.rate_low;
    config.rate_high = f.rate_high;
    config.assignment = (f.assignment == "bernoulli") ? clustervar::Assignment::bernoulli_half
                                                      : clustervar::Assignment::alternating;
    config.seed = f.seed;
    clustervar::check_config(config);
    return config;
}

void echo_sim_flags(JsonWriter& w, const SimFlags& f) {
    w.key("clusters");
    w.integer(f.clusters);
    w.key("mean_size");
    w.real(f.mean_size);
    w.key("rate_low");
    w.real(f.rate_low);
    w.key("rate_high");
    w.real(f.rate_high);
    w.key("assignment");
    w.text(f.assignment);
    w.key("seed");
    w.integer(f.seed);
    w.key("rng_engine");
    w.text(clustervar::rng::kEngineName);
    w.key("poisson_method");
    w.text(clustervar::rng::kPoissonMethod);
}

template <typename ParamsFn, typename ResultFn>
void emit_envelope(const std::string& command, ParamsFn&& params, ResultFn&& result,
                   const std::vector<std::string>& warnings) {
    JsonWriter w;
    w.obj_begin();
    w.key("tool_version");
    w.text(clustervar::kVersion);
    w.key("command");
    w.text(command);
    w.key("parameters");
    w.obj_begin();
    params(w);
    w.obj_end();
    w.key("result");
    result(w);
    w.key("warnings");
    w.arr_begin();
    for (const std::string& s : warnings) w.text(s);
    w.arr_end();
    w.obj_end();
    std::cout << w.str() << "\n";
}

void print_row(const char* label, const std::string& value) {
    std::printf("%-30s %s\n", label, value.c_str());
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string sci3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::string real17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int fail(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return kExitInputError;
}

// ---- analyze -------------------------------------------------------------

struct AnalyzeFlags {
    std::string input;
    double ci_level = 0.95;
    double tol = 1e-12;
    std::string mode = "population";
    std::string format = "table";
};

int run_analyze(const AnalyzeFlags& f) {
    if (!(f.ci_level > 0.0 && f.ci_level < 1.0)) {
        return fail("--ci-level must lie strictly between 0 and 1");
    }
    if (f.tol < 0.0) return fail("--tol must be nonnegative");

    std::ifstream in(f.input);
    if (!in) return fail("cannot open input file: " + f.input);

    clustervar::VarianceReport report;
    try {
        auto records = clustervar::parse_csv(in);
        auto exp = clustervar::validate(std::move(records));
        report = clustervar::analyze(exp, f.ci_level);
    } catch (const clustervar::Error& e) {
        return fail(e.what());
    }
    if (f.mode == "sample" && !report.var_delta_sample) {
        return fail("insufficient clusters: sample mode needs at least 2 clusters in each arm");
    }

    std::vector<std::string> warnings;
    if (!report.var_delta_sample) {
        warnings.push_back("var_delta_sample omitted: an arm has fewer than 2 clusters");
    }
    const bool violated = report.max_rel_discrepancy > f.tol;
    if (violated) {
        warnings.push_back("equivalence discrepancy exceeds tolerance");
    }

    if (f.format == "json") {
        emit_envelope(
            "analyze",
            [&](JsonWriter& w) {
                w.key("input");
                w.text(f.input);
                w.key("ci_level");
                w.real(f.ci_level);
                w.key("tol");
                w.real(f.tol);
                w.key("mode");
                w.text(f.mode);
                w.key("format");
                w.text(f.format);
            },
            [&](JsonWriter& w) { clustervar::write_report(w, report); }, warnings);
    } else {
        print_row("alpha_hat", fixed6(report.estimate.alpha_hat));
        print_row("tau_hat", fixed6(report.estimate.tau_hat));
        print_row("var_sandwich", fixed6(report.var_sandwich));
        print_row("var_simplified", fixed6(report.var_simplified));
        print_row("var_delta_pop", fixed6(report.var_delta_pop));
        if (report.var_delta_sample) {
            print_row("var_delta_sample", fixed6(*report.var_delta_sample));
        }
        print_row("max_rel_discrepancy", sci3(report.max_rel_discrepancy));
        print_row("ci_low", fixed6(report.ci_low));
        print_row("ci_high", fixed6(report.ci_high));
        for (const std::string& s : warnings) std::cerr << "warning: " << s << "\n";
    }
    return violated ? kExitEquivalenceViolation : kExitOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateFlags {
    SimFlags sim;
    std::string output;
    std::string format = "table";
};

int run_simulate(const SimulateFlags& f) {
    clustervar::SimConfig config;
    try {
        config = to_config(f.sim);
    } catch (const std::invalid_argument& e) {
        return fail(e.what());
    }
    const auto records = clustervar::generate(config);

    std::ofstream out(f.output);
    if (!out) return fail("cannot open output file for writing: " + f.output);
    out << "cluster_id,w,y\n";
    for (const auto& rec : records) {
        out << rec.cluster_id << ',' << rec.w << ',' << real17(rec.y) << '\n';
    }
    out.flush();
    if (!out.good()) return fail("failed while writing: " + f.output);

    std::size_t n_treat = 0;
    std::set<std::string> ids;
    for (const auto& rec : records) {
        n_treat += static_cast<std::size_t>(rec.w);
        ids.insert(rec.cluster_id);
    }
    const std::size_t n_units = records.size();
    const std::size_t n_control = n_units - n_treat;

    if (f.format == "json") {
        emit_envelope(
            "simulate",
            [&](JsonWriter& w) {
                echo_sim_flags(w, f.sim);
                w.key("output");
                w.text(f.output);
                w.key("format");
                w.text(f.format);
            },
            [&](JsonWriter& w) {
                w.obj_begin();
                w.key("n_units");
                w.integer(n_units);
                w.key("n_treat");
                w.integer(n_treat);
                w.key("n_control");
                w.integer(n_control);
                w.key("clusters_realized");
                w.integer(ids.size());
                w.obj_end();
            },
            {});
    } else {
        print_row("output", f.output);
        print_row("n_units", std::to_string(n_units));
        print_row("n_treat", std::to_string(n_treat));
        print_row("n_control", std::to_string(n_control));
        print_row("clusters_realized", std::to_string(ids.size()));
    }
    return kExitOk;
}

// ---- check ---------------------------------------------------------------

struct CheckFlags {
    SimFlags sim;
    std::size_t seeds = 1000;
    double tol = 1e-12;
    std::string format = "table";
};

int run_check(const CheckFlags& f) {
    if (f.seeds < 1) return fail("--seeds must be at least 1");
    if (f.tol < 0.0) return fail("--tol must be nonnegative");
    clustervar::SimConfig config;
    try {
        config = to_config(f.sim);
    } catch (const std::invalid_argument& e) {
        return fail(e.what());
    }

    const auto sweep = clustervar::equivalence_sweep(config, f.seeds);
    const bool pass = sweep.max_discrepancy <= f.tol;

    std::vector<std::string> warnings;
    if (sweep.skipped > 0) {
        warnings.push_back(std::to_string(sweep.skipped) + " draw(s) skipped (empty arm)");
    }

    if (f.format == "json") {
        emit_envelope(
            "check",
            [&](JsonWriter& w) {
                w.key("seeds");
                w.integer(f.seeds);
                w.key("tol");
                w.real(f.tol);
                echo_sim_flags(w, f.sim);
                w.key("format");
                w.text(f.format);
            },
            [&](JsonWriter& w) { clustervar::write_sweep(w, sweep); }, warnings);
    } else {
        print_row("seeds", std::to_string(f.seeds));
        print_row("analyzed", std::to_string(sweep.analyzed));
        print_row("skipped", std::to_string(sweep.skipped));
        print_row("max_discrepancy", sci3(sweep.max_discrepancy));
        print_row("worst_seed", std::to_string(sweep.worst_seed));
        print_row("tolerance", sci3(f.tol));
        print_row("status", pass ? "pass" : "FAIL");
        for (const std::string& s : warnings) std::cerr << "warning: " << s << "\n";
    }
    return pass ? kExitOk : kExitEquivalenceViolation;
}

// ---- coverage ------------------------------------------------------------

struct CoverageFlags {
    SimFlags sim;
    std::size_t replications = 2000;
    double ci_level = 0.95;
    std::string format = "table";
};

int run_coverage(const CoverageFlags& f) {
    if (f.replications < 100) return fail("--replications must be at least 100");
    if (!(f.ci_level > 0.0 && f.ci_level < 1.0)) {
        return fail("--ci-level must lie strictly between 0 and 1");
    }
    clustervar::SimConfig config;
    try {
        config = to_config(f.sim);
    } catch (const std::invalid_argument& e) {
        return fail(e.what());
    }

    const auto result = clustervar::coverage_study(config, f.replications, f.ci_level);

    std::vector<std::string> warnings;
    if (result.skipped > 0) {
        warnings.push_back(std::to_string(result.skipped) +
                           " replication(s) skipped (empty arm)");
    }

    if (f.format == "json") {
        emit_envelope(
            "coverage",
            [&](JsonWriter& w) {
                w.key("replications");
                w.integer(f.replications);
                w.key("ci_level");
                w.real(f.ci_level);
                echo_sim_flags(w, f.sim);
                w.key("format");
                w.text(f.format);
            },
            [&](JsonWriter& w) { clustervar::write_coverage(w, result); }, warnings);
    } else {
        print_row("replications", std::to_string(result.replications));
        print_row("covered", std::to_string(result.covered));
        print_row("skipped", std::to_string(result.skipped));
        print_row("coverage_rate", fixed6(result.coverage_rate));
        print_row("mean_tau_hat", fixed6(result.mean_tau_hat));
        print_row("mean_variance", sci3(result.mean_variance));
        print_row("empirical_variance_of_tau_hat", sci3(result.empirical_variance_of_tau_hat));
        for (const std::string& s : warnings) std::cerr << "warning: " << s << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variance estimation for cluster-randomized experiments"};
    app.set_version_flag("--version", std::string(clustervar::kVersion));
    app.require_subcommand(1);

    AnalyzeFlags analyze_flags;
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "Analyze a CSV experiment and report all variance routes");
    analyze_cmd->add_option("--input", analyze_flags.input, "Input CSV file")
        ->required()
        ->check(CLI::ExistingFile);
    analyze_cmd->add_option("--ci-level", analyze_flags.ci_level, "Confidence level")
        ->capture_default_str();
    analyze_cmd->add_option("--tol", analyze_flags.tol, "Equivalence tolerance")
        ->capture_default_str();
    analyze_cmd->add_option("--mode", analyze_flags.mode, "Delta-method moment mode")
        ->check(CLI::IsMember({"population", "sample"}))
        ->capture_default_str();
    analyze_cmd->add_option("--format", analyze_flags.format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    SimulateFlags simulate_flags;
    CLI::App* simulate_cmd =
        app.add_subcommand("simulate", "Generate a simulated experiment CSV");
    add_sim_flags(simulate_cmd, simulate_flags.sim);
    simulate_cmd->add_option("--output", simulate_flags.output, "Output CSV path")->required();
    simulate_cmd->add_option("--format", simulate_flags.format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    CheckFlags check_flags;
    CLI::App* check_cmd = app.add_subcommand(
        "check", "Sweep seeded datasets and verify the three variance routes agree");
    check_cmd->add_option("--seeds", check_flags.seeds, "Number of consecutive seeds")
        ->capture_default_str();
    check_cmd->add_option("--tol", check_flags.tol, "Equivalence tolerance")
        ->capture_default_str();
    add_sim_flags(check_cmd, check_flags.sim);
    check_cmd->add_option("--format", check_flags.format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    CoverageFlags coverage_flags;
    CLI::App* coverage_cmd =
        app.add_subcommand("coverage", "Monte Carlo study of CI coverage of the true effect 0");
    coverage_cmd->add_option("--replications", coverage_flags.replications, "Replication count")
        ->capture_default_str();
    coverage_cmd->add_option("--ci-level", coverage_flags.ci_level, "Confidence level")
        ->capture_default_str();
    add_sim_flags(coverage_cmd, coverage_flags.sim);
    coverage_cmd->add_option("--format", coverage_flags.format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (analyze_cmd->parsed()) return run_analyze(analyze_flags);
        if (simulate_cmd->parsed()) return run_simulate(simulate_flags);
        if (check_cmd->parsed()) return run_check(check_flags);
        if (coverage_cmd->parsed()) return run_coverage(coverage_flags);
    } catch (const std::exception& e) {
        return fail(e.what());
    }
    return kExitInputError;
}
