// fairrank: domain reproductions, grid sweep, coverage sensitivity and
// ad-hoc analysis of evaluation matrices.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include <nlohmann/json.hpp>

#include "fairrank/fairrank.hpp"

namespace fs = std::filesystem;
using namespace fairrank;

namespace {

struct Options {
    std::uint64_t seed = 42;
    std::string out;
    unsigned jobs = 0;
    PriorConfig priors{};

    std::vector<std::string> only;
    int domain_seeds = 20;

    int sweep_seeds = 15;
    double s_max = 0.70, s_step = 0.05, d_max = 5.0, d_step = 0.5;
    std::string regression_rows = "cells";
    double bias_exponent = kDefaultBiasExponent;

    int sensitivity_seeds = 15;

    std::string matrix_path;
    double coverage_threshold = kDefaultCoverageThreshold;
    double cv_threshold = kDefaultHeterogeneityThreshold;

    std::string export_domain;
};

// Report sections, concatenated into report.txt in this order.
const std::vector<std::string> kSections = {"domains", "sweep", "sensitivity", "analyze"};

fs::path output_dir(const Options& o) {
    std::string dir = o.out;
    if (dir.empty()) {
        const char* env = std::getenv("FAIRRANK_OUT");
        dir = env && *env ? env : "results";
    }
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    body(out);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_section(const fs::path& dir, const std::string& name, const std::string& text) {
    write_file(dir / ("report_" + name + ".txt"), [&](std::ostream& os) { os << text; });
    write_file(dir / "report.txt", [&](std::ostream& os) {
        bool first = true;
        for (const auto& s : kSections) {
            std::ifstream in(dir / ("report_" + s + ".txt"), std::ios::binary);
            if (!in) continue;
            if (!first) os << '\n';
            os << in.rdbuf();
            first = false;
        }
    });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Domain> selected_domains(const std::vector<std::string>& names) {
    if (names.empty()) return {kAllDomains.begin(), kAllDomains.end()};
    std::vector<Domain> out;
    for (const auto& arg : names) {
        std::stringstream ss(arg);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (part.empty()) continue;
            const auto d = parse_domain(part);
            if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
        }
    }
    if (out.empty()) throw std::invalid_argument("--only selected no domains");
    return out;
}

int cmd_domains(const Options& o) {
    const auto domains = selected_domains(o.only);
    const auto dir = output_dir(o);
    DomainRunSettings s;
    s.n_seeds = o.domain_seeds;
    s.master_seed = o.seed;
    s.priors = o.priors;
    s.jobs = o.jobs;

    std::vector<DomainResult> results;
    std::vector<std::string> failures;
    for (const auto d : domains) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            results.push_back(run_domain(d, s));
            const auto& r = results.back();
            std::cerr << r.name << ": rho_avg " << fixed4(r.rho_avg.mean) << ", rho_irt "
                      << fixed4(r.rho_irt.mean) << " (" << std::setprecision(1) << std::fixed
                      << seconds_since(t0) << " s)\n";
        } catch (const std::exception& e) {
            failures.push_back(std::string(domain_name(d)) + ": " + e.what());
            std::cerr << "error: " << failures.back() << '\n';
        }
    }

    write_file(dir / "table1.csv", [&](std::ostream& os) { write_table1_csv(results, os); });
    write_file(dir / "table2.csv", [&](std::ostream& os) { write_table2_csv(results, os); });
    std::ostringstream report;
    write_domain_report(results, report);
    if (!failures.empty()) {
        report << "PARTIAL RESULTS: the following domains failed and are missing from the tables\n";
        for (const auto& f : failures) report << "  " << f << '\n';
    }
    write_section(dir, "domains", report.str());
    return failures.empty() ? 0 : 1;
}

RegressionRows parse_rows(const std::string& s) {
    return s == "seeds" ? RegressionRows::seeds : RegressionRows::cells;
}

int cmd_sweep(const Options& o) {
    if (!(o.s_max >= 0.0 && o.s_max < 1.0)) throw std::invalid_argument("--s-max must lie in [0, 1)");
    if (!(o.d_max >= o.d_step)) throw std::invalid_argument("--d-max must be at least --d-step");
    SweepSettings s;
    s.sparsity = make_grid(0.0, o.s_max, o.s_step);
    s.gaps = make_grid(o.d_step, o.d_max, o.d_step);
    s.n_seeds = o.sweep_seeds;
    s.master_seed = o.seed;
    s.priors = o.priors;
    s.bias_exponent = o.bias_exponent;
    s.jobs = o.jobs;
    const auto dir = output_dir(o);

    const auto t0 = std::chrono::steady_clock::now();
    const auto sweep = run_sweep(s);
    std::cerr << "sweep: " << sweep.cells.size() << " cells x " << s.n_seeds << " seeds in "
              << std::setprecision(1) << std::fixed << seconds_since(t0) << " s\n";

    write_file(dir / "sweep_biased.csv",
               [&](std::ostream& os) { write_sweep_csv(sweep, Mechanism::biased, os); });
    write_file(dir / "sweep_mcar.csv",
               [&](std::ostream& os) { write_sweep_csv(sweep, Mechanism::mcar, os); });

    std::ostringstream report;
    int status = sweep.valid ? 0 : 1;
    try {
        const auto analysis = analyze_sweep(sweep, parse_rows(o.regression_rows));
        write_file(dir / "regression.json",
                   [&](std::ostream& os) { os << to_json(analysis).dump(2) << '\n'; });
        write_sweep_report(sweep, analysis, report);
    } catch (const std::exception& e) {
        std::cerr << "error: regression failed: " << e.what() << '\n';
        write_file(dir / "regression.json", [&](std::ostream& os) {
            os << nlohmann::json{{"error", e.what()}}.dump(2) << '\n';
        });
        write_sweep_report(sweep, SweepAnalysis{}, report);
        report << "\nregression failed: " << e.what() << '\n';
        status = 1;
    }
    if (!sweep.valid) std::cerr << "error: sweep failure budget exceeded\n";
    write_section(dir, "sweep", report.str());
    return status;
}

int cmd_sensitivity(const Options& o) {
    SensitivitySettings s;
    s.n_seeds = o.sensitivity_seeds;
    s.master_seed = o.seed;
    s.priors = o.priors;
    s.bias_exponent = o.bias_exponent;
    s.jobs = o.jobs;
    const auto dir = output_dir(o);
    const auto result = run_sensitivity(s);
    write_file(dir / "sensitivity.csv", [&](std::ostream& os) { write_sensitivity_csv(result, os); });
    std::ostringstream report;
    write_sensitivity_report(result, report);
    write_section(dir, "sensitivity", report.str());
    std::cerr << report.str();
    return result.valid ? 0 : 1;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Whole ranks print as integers, tied (average) ranks with one decimal.
std::string rank_text(double r) {
    std::ostringstream os;
    if (r == std::floor(r)) os << static_cast<long>(r);
    else os << std::fixed << std::setprecision(1) << r;
    return os.str();
}

int cmd_analyze(const Options& o) {
    std::ifstream in(o.matrix_path);
    if (!in) {
        std::cerr << "error: cannot open " << o.matrix_path << '\n';
        return 2;
    }
    std::optional<ResponseMatrix> loaded;
    try {
        loaded.emplace(load_matrix_csv(in));
    } catch (const std::exception& e) {
        std::cerr << "error: " << o.matrix_path << ": " << e.what() << '\n';
        return 2;
    }
    const ResponseMatrix& m = *loaded;
    const auto dir = output_dir(o);
    const std::size_t J = m.n_systems(), I = m.n_items();

    std::ostringstream rep;
    nlohmann::json js;
    rep << "Matrix analysis: " << o.matrix_path << "\n\n";
    rep << J << " systems, " << I << " items, " << m.entries().size() << " observed cells\n";

    const auto diag = diagnose_mask(m);
    rep << "coverage " << fixed4(diag.coverage) << ", sparsity " << fixed4(diag.sparsity)
        << ", min items per system " << diag.min_items_per_system << ", min systems per item "
        << diag.min_systems_per_item << ", connected " << (diag.bipartite_connected ? "yes" : "no")
        << "\n";
    js["diagnostics"] = {{"coverage", diag.coverage},
                         {"sparsity", diag.sparsity},
                         {"min_items_per_system", diag.min_items_per_system},
                         {"min_systems_per_item", diag.min_systems_per_item},
                         {"connected", diag.bipartite_connected}};

    int status = 0;
    try {
        const auto v = decision_rule(m, o.coverage_threshold, o.cv_threshold);
        rep << "decision: " << verdict_name(v.verdict) << " (" << v.rationale << ")\n";
        js["decision"] = {{"verdict", verdict_name(v.verdict)},
                          {"coverage", v.coverage},
                          {"heterogeneity", v.heterogeneity},
                          {"rationale", v.rationale}};
    } catch (const std::exception& e) {
        rep << "decision: unavailable (" << e.what() << ")\n";
        js["decision"] = {{"error", e.what()}};
        status = 1;
    }

    const auto avg = simple_average(m);
    std::optional<Fit2PL> result;
    std::string degraded;
    try {
        result = fit(m, o.priors);
    } catch (const std::invalid_argument& e) {
        degraded = e.what();
    }

    if (!result) {
        std::cerr << "warning: " << degraded << "; reporting diagnostics and verdict only\n";
        rep << "\nIRT skipped: " << degraded << "\n\nSimple-average ranking\n";
        std::vector<std::size_t> order(J);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return avg.ranks[a] < avg.ranks[b]; });
        for (const auto j : order)
            rep << "  " << std::setw(5) << rank_text(avg.ranks[j]) << "  "
                << pad(m.system_labels()[j], 28) << fixed4(avg.scores[j]) << '\n';
        js["irt"] = {{"skipped", degraded}};
    } else {
        const auto& f = *result;
        std::optional<AbilityVector> se;
        try {
            se = standard_errors(m, f, o.priors);
        } catch (const std::exception& e) {
            std::cerr << "warning: standard errors unavailable: " << e.what() << '\n';
        }
        if (!f.converged)
            std::cerr << "warning: optimizer stopped with gradient norm " << f.gradient_norm << '\n';
        const auto irt = rank_by_ability(f);
        const double agreement = spearman_rho(avg, irt);

        std::vector<std::size_t> order(J);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return irt.ranks[a] < irt.ranks[b]; });
        auto top = [&](const Ranking& r) {
            std::string s;
            for (std::size_t j = 0; j < J; ++j)
                if (r.ranks[j] == 1.0) s = m.system_labels()[j];
            return s.empty() ? std::string("(tie)") : s;
        };
        const bool same = avg.ranks == irt.ranks;
        rep << "\nRankings " << (same ? "agree" : "differ") << ": Spearman(average, IRT) = "
            << fixed4(agreement) << "\n";
        rep << "top system by IRT: " << top(irt) << "; by simple average: " << top(avg) << "\n\n";
        rep << "  IRT   avg   " << pad("system", 28) << "theta_hat        se   avg_score\n";
        for (const auto j : order) {
            rep << "  " << std::setw(4) << rank_text(irt.ranks[j]) << "  " << std::setw(4)
                << rank_text(avg.ranks[j]) << "  " << pad(m.system_labels()[j], 28)
                << std::setw(9) << fixed4(f.abilities.theta[j]) << "  " << std::setw(8)
                << (se ? fixed4(se->se[j]) : std::string("n/a")) << "  " << std::setw(10)
                << fixed4(avg.scores[j]) << '\n';
        }
        rep << "\n  " << pad("item", 30) << "     b_hat     a_hat  systems\n";
        for (std::size_t i = 0; i < I; ++i)
            rep << "  " << pad(m.item_labels()[i], 30) << std::setw(10)
                << fixed4(f.items.difficulty[i]) << std::setw(10)
                << fixed4(f.items.discrimination(i)) << std::setw(9)
                << m.mask().systems_observed_for(i) << '\n';
        rep << "\nfit: objective " << fixed4(f.objective) << ", iterations " << f.iterations
            << ", converged " << (f.converged ? "yes" : "no") << '\n';

        auto fj = fit_to_json(f, m.system_labels());
        for (std::size_t j = 0; j < J; ++j) {
            auto& sj = fj["systems"][j];
            sj["se"] = se ? nlohmann::json(se->se[j]) : nlohmann::json(nullptr);
            sj["rank_irt"] = irt.ranks[j];
            sj["rank_average"] = avg.ranks[j];
            sj["average"] = avg.scores[j];
        }
        js["irt"] = std::move(fj);
        js["rankings_agree"] = same;
        js["spearman_average_irt"] = agreement;
    }

    std::cout << rep.str();
    write_file(dir / "analysis.json", [&](std::ostream& os) { os << js.dump(2) << '\n'; });
    write_section(dir, "analyze", rep.str());
    return status;
}

int cmd_export(const Options& o) {
    const auto d = parse_domain(o.export_domain);
    const auto dir = output_dir(o);
    const auto cfg = domain_config(d, o.seed);
    const auto matrix = generate_responses(cfg.truth, cfg.mask, cfg.trials, mix_seed(o.seed, {1}));
    const std::string base(domain_name(d));
    write_file(dir / (base + "_matrix.csv"), [&](std::ostream& os) { save_matrix_csv(matrix, os); });
    write_file(dir / (base + "_config.json"),
               [&](std::ostream& os) { os << domain_config_to_json(cfg).dump(2) << '\n'; });
    std::cerr << "wrote " << (dir / (base + "_matrix.csv")).string() << " and "
              << (dir / (base + "_config.json")).string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Simple-average vs 2PL IRT rankings on sparse evaluation matrices"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", o.seed, "Master seed")->capture_default_str();
    app.add_option("--out", o.out, "Output directory (default: $FAIRRANK_OUT, then ./results)");
    app.add_option("--jobs", o.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--theta-sd", o.priors.theta_sd, "Ability prior std (inf disables)")
        ->capture_default_str();
    app.add_option("--b-sd", o.priors.difficulty_sd, "Difficulty prior std (inf disables)")
        ->capture_default_str();
    app.add_option("--log-a-sd", o.priors.log_discrimination_sd,
                   "Log-discrimination prior std (inf disables)")
        ->capture_default_str();
    app.add_option("--bias-exponent", o.bias_exponent,
                   "Exponent on difficulty rank in biased-mask drop weights")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);

    auto* domains = app.add_subcommand("domains", "Reproduce the four domain experiments");
    domains->add_option("--only", o.only, "Subset of nlp,clinical,av,cyber")->delimiter(',');
    domains->add_option("--seeds", o.domain_seeds, "Seeds per domain")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "Sparsity x difficulty-gap grid sweep");
    sweep->add_option("--seeds", o.sweep_seeds, "Seeds per cell")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sweep->add_option("--s-max", o.s_max, "Largest sparsity")->capture_default_str();
    sweep->add_option("--s-step", o.s_step, "Sparsity step")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sweep->add_option("--d-max", o.d_max, "Largest difficulty gap")->capture_default_str();
    sweep->add_option("--d-step", o.d_step, "Difficulty-gap step (also the smallest gap)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sweep->add_option("--regression-rows", o.regression_rows, "Regression rows: cells or seeds")
        ->capture_default_str()
        ->check(CLI::IsMember({"cells", "seeds"}));

    auto* sens = app.add_subcommand("sensitivity", "Coverage sensitivity checks");
    sens->add_option("--seeds", o.sensitivity_seeds, "Seeds per condition")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    auto* analyze = app.add_subcommand("analyze", "Analyze a system,item,successes,trials CSV");
    analyze->add_option("matrix", o.matrix_path, "CSV matrix")->required();
    analyze->add_option("--coverage-threshold", o.coverage_threshold, "Decision-rule coverage threshold")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    analyze->add_option("--cv-threshold", o.cv_threshold, "Decision-rule heterogeneity (CV) threshold")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);

    auto* exp = app.add_subcommand("export", "Write a domain's matrix CSV and configuration JSON");
    exp->add_option("domain", o.export_domain, "nlp, clinical, av or cyber")
        ->required()
        ->check(CLI::IsMember({"nlp", "clinical", "av", "cyber"}));

    CLI11_PARSE(app, argc, argv);

    try {
        o.priors.validate();
        if (domains->parsed()) return cmd_domains(o);
        if (sweep->parsed()) return cmd_sweep(o);
        if (sens->parsed()) return cmd_sensitivity(o);
        if (analyze->parsed()) return cmd_analyze(o);
        if (exp->parsed()) return cmd_export(o);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
