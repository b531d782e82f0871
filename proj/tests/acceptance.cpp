// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
//
//   fairrank_acceptance [--cli <path to fairrank>] [--work <scratch dir>]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrank/fairrank.hpp"
#include "oracles.hpp"

using namespace fairrank;
namespace fs = std::filesystem;

namespace {

int g_failed = 0;
int g_total = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
    ++g_total;
    if (!pass) ++g_failed;
    std::cout << (pass ? "PASS " : "FAIL ") << std::left << std::setw(38) << id << ' ' << detail << '\n'
              << std::flush;
}

std::string f4(double v) { return fixed4(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string timing(double s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << s << " s";
    return os.str();
}

bool in_range(double v, double lo, double hi) { return v >= lo && v <= hi; }

// ---------------------------------------------------------------------------

void check_domains() {
    DomainRunSettings s;
    s.n_seeds = 20;
    s.master_seed = 42;
    std::vector<DomainResult> results;
    for (auto d : kAllDomains) {
        const auto t0 = std::chrono::steady_clock::now();
        results.push_back(run_domain(d, s));
        const double secs = seconds_since(t0);
        report("domains." + std::string(domain_name(d)) + ".runtime", secs < 60.0,
               timing(secs) + " (limit 60 s)");
    }
    const auto& nlp = results[0];
    const auto& cli = results[1];
    const auto& av = results[2];
    const auto& cyb = results[3];

    auto irt_first = [](std::size_t idx) {
        return [idx](const SeedOutcome& o) { return o.irt.ranks[idx] == 1.0; };
    };

    report("domains.nlp.rho", nlp.rho_avg.mean >= 0.995 && nlp.rho_irt.mean >= 0.995,
           "rho_avg " + f4(nlp.rho_avg.mean) + ", rho_irt " + f4(nlp.rho_irt.mean) + " (both >= 0.995)");

    report("domains.clinical.rho_avg", in_range(cli.rho_avg.mean, 0.87, 0.97),
           f4(cli.rho_avg.mean) + " +/- " + f4(cli.rho_avg.std) + " (in [0.87, 0.97])");
    report("domains.clinical.rho_irt", cli.rho_irt.mean >= 0.99, f4(cli.rho_irt.mean) + " (>= 0.99)");
    {
        const int n = cli.count_seeds(irt_first(0));
        report("domains.clinical.true_best_irt", n >= 19, std::to_string(n) + "/20 seeds IRT #1 (>= 19)");
        const int m = cli.count_seeds([](const SeedOutcome& o) {
            return rank_displacement(o.average, o.truth, 8) <= -2.0;
        });
        report("domains.clinical.fake_inflated", m >= 15,
               std::to_string(m) + "/20 seeds inflated >= 2 by averaging (>= 15)");
    }

    report("domains.av.rho_avg", in_range(av.rho_avg.mean, 0.87, 0.96),
           f4(av.rho_avg.mean) + " +/- " + f4(av.rho_avg.std) + " (in [0.87, 0.96])");
    report("domains.av.rho_irt", av.rho_irt.mean >= 0.995, f4(av.rho_irt.mean) + " (>= 0.995)");
    {
        const int n = av.count_seeds(
            [](const SeedOutcome& o) { return o.average.ranks[0] >= 2.0 && o.irt.ranks[0] == 1.0; });
        report("domains.av.true_best_displaced", n >= 15,
               std::to_string(n) + "/20 seeds avg >= #2 and IRT #1 (>= 15)");
    }

    report("domains.cyber.rho_avg", in_range(cyb.rho_avg.mean, 0.76, 0.86),
           f4(cyb.rho_avg.mean) + " +/- " + f4(cyb.rho_avg.std) + " (in [0.76, 0.86])");
    report("domains.cyber.rho_irt", cyb.rho_irt.mean >= 0.99, f4(cyb.rho_irt.mean) + " (>= 0.99)");
    {
        const int n = cyb.count_seeds(irt_first(0));
        report("domains.cyber.true_best_irt", n >= 19, std::to_string(n) + "/20 seeds IRT #1 (>= 19)");
    }

    bool all_one = true;
    std::string detail;
    for (const auto& r : results) {
        all_one = all_one && r.item_recovery == 1.0;
        detail += r.name + " " + f4(r.item_recovery) + " ";
    }
    report("domains.item_recovery", all_one, detail + "(all = 1.0000)");
}

// ---------------------------------------------------------------------------

void check_sweep() {
    SweepSettings s;
    s.master_seed = 42;
    const auto t0 = std::chrono::steady_clock::now();
    const auto sweep = run_sweep(s);
    const double secs = seconds_since(t0);
    const auto cells = sweep.cells_for(Mechanism::biased).size();
    report("sweep.grid_and_runtime",
           sweep.valid && cells == 150 && sweep.cells_for(Mechanism::mcar).size() == 150 && secs <= 600.0,
           std::to_string(cells) + " cells x 2 mechanisms x " + std::to_string(sweep.n_seeds) +
               " seeds, valid " + (sweep.valid ? "yes" : "no") + ", " + timing(secs) + " (limit 600 s)");

    const auto& extreme = sweep.at(Mechanism::biased, sweep.sparsity.size() - 1, sweep.gaps.size() - 1);
    report("sweep.extreme_cell", extreme.avg.mean <= 0.45,
           "S=" + f4(extreme.sparsity) + " D=" + f4(extreme.gap) + " rho_avg " + f4(extreme.avg.mean) +
               " (<= 0.45)");

    double min_irt = 1.0, min_avg_b = 1.0, min_avg_m = 1.0;
    for (const auto* c : sweep.cells_for(Mechanism::biased)) {
        min_irt = std::min(min_irt, c->irt.mean);
        min_avg_b = std::min(min_avg_b, c->avg.mean);
    }
    for (const auto* c : sweep.cells_for(Mechanism::mcar)) min_avg_m = std::min(min_avg_m, c->avg.mean);
    report("sweep.min_biased_rho_irt", min_irt >= 0.98, f4(min_irt) + " (>= 0.98)");
    report("sweep.mcar_min_rho_avg", min_avg_m >= 0.60 && min_avg_m > min_avg_b,
           "mcar " + f4(min_avg_m) + " vs biased " + f4(min_avg_b) + " (mcar >= 0.60 and > biased)");

    const auto a = analyze_sweep(sweep);
    const auto& b = *a.biased;
    report("sweep.interaction_biased",
           b.gamma[1] > 0 && b.gamma[2] > 0 && b.gamma[3] > 0 && b.t_values[3] > 5.0 && b.r_squared >= 0.6,
           "gamma (" + f4(b.gamma[1]) + ", " + f4(b.gamma[2]) + ", " + f4(b.gamma[3]) + "), t3 " +
               f4(b.t_values[3]) + ", R^2 " + f4(b.r_squared) + " (gammas > 0, t3 > 5, R^2 >= 0.6)");
    report("sweep.interaction_mcar", a.mcar->gamma[3] > 0 && a.mcar->gamma[3] < b.gamma[3],
           "gamma3 mcar " + f4(a.mcar->gamma[3]) + " vs biased " + f4(b.gamma[3]) + " (0 < mcar < biased)");
    report("sweep.power_law_gap", a.power_law->r_squared <= b.r_squared - 0.1,
           "power-law R^2 " + f4(a.power_law->r_squared) + " vs interaction " + f4(b.r_squared) +
               " (at least 0.1 lower)");
    const double gap = *a.mechanism_gap();
    report("sweep.mechanism_gap", in_range(gap, 0.02, 0.12),
           "biased " + f4(*a.biased_high_sparsity_error) + " - mcar " + f4(*a.mcar_high_sparsity_error) +
               " = " + f4(gap) + " (in [0.02, 0.12])");
}

// ---------------------------------------------------------------------------

void check_sensitivity() {
    SensitivitySettings s;
    s.master_seed = 42;
    const auto r = run_sensitivity(s);
    auto detail = [&](auto select, bool irt) {
        std::string out;
        for (const auto& row : r.rows)
            if (select(row)) out += "D=" + f4(row.gap).substr(0, 3) + ":" + f4(irt ? row.irt.mean : row.avg.mean) + " ";
        return out;
    };
    report("sensitivity.full_coverage", r.valid && r.full_coverage_holds(),
           detail([](const SensitivityRow& x) { return std::abs(x.coverage - 1.0) < 1e-9 && x.mechanism == Mechanism::biased; }, false) +
               "(rho_avg > 0.95)");
    report("sensitivity.mcar_half_coverage", r.valid && r.mcar_half_coverage_holds(),
           detail([](const SensitivityRow& x) { return std::abs(x.coverage - 0.5) < 1e-9 && x.mechanism == Mechanism::mcar; }, false) +
               "(rho_avg > 0.90)");
    report("sensitivity.biased_low_coverage_irt", r.valid && r.biased_low_coverage_irt_holds(),
           detail([](const SensitivityRow& x) { return std::abs(x.coverage - 0.3) < 1e-9 && x.mechanism == Mechanism::biased; }, true) +
               "(rho_irt > 0.95)");
}

// ---------------------------------------------------------------------------

std::vector<double> packed(const std::vector<double>& theta, const std::vector<double>& b,
                           const std::vector<double>& log_a) {
    std::vector<double> x = theta;
    x.insert(x.end(), b.begin(), b.end());
    x.insert(x.end(), log_a.begin(), log_a.end());
    return x;
}

double per_trial_objective(const ResponseMatrix& m, const std::vector<double>& x, const PriorConfig& p) {
    const std::size_t J = m.n_systems(), I = m.n_items();
    return oracle::per_trial_log_likelihood(m, {x.data(), J}, {x.data() + J, I}, {x.data() + J + I, I}, p);
}

void check_numerics() {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z;

    // Gradient against central differences of the per-trial likelihood.
    {
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t J = 2 + rep % 4, I = 2 + (rep / 4) % 3;
            std::vector<CellEntry> cells;
            for (std::size_t j = 0; j < J; ++j)
                for (std::size_t i = 0; i < I; ++i)
                    if (i == j % I || rng() % 4 != 0) {
                        const int t = 1 + static_cast<int>(rng() % 25);
                        cells.push_back({j, i, {static_cast<int>(rng() % static_cast<unsigned>(t + 1)), t}});
                    }
            const ResponseMatrix m(J, I, cells);
            std::vector<double> theta(J), b(I), la(I);
            for (auto& v : theta) v = z(rng);
            for (auto& v : b) v = z(rng);
            for (auto& v : la) v = 0.4 * z(rng);
            const PriorConfig priors{};
            const auto g = gradient(m, theta, ItemParameterSet{b, la, {}}, priors);
            const auto fd = oracle::central_difference(
                [&](const std::vector<double>& x) { return per_trial_objective(m, x, priors); },
                packed(theta, b, la), 1e-5);
            for (std::size_t k = 0; k < g.size(); ++k)
                worst = std::max(worst, std::abs(g[k] - fd[k]) / std::max(1.0, std::abs(fd[k])));
        }
        std::ostringstream os;
        os << std::scientific << std::setprecision(2) << worst;
        report("numerics.gradient_fd", worst <= 1e-4, "max relative error " + os.str() + " over 20 instances (<= 1e-4)");
    }

    // Complete 3x3, K = 2000: L-BFGS fit against a derivative-free search of
    // the same objective.
    {
        TrueModel truth;
        truth.theta = {-1.0, 0.2, 1.1};
        truth.items = ItemParameterSet::from_discrimination({-0.6, 0.1, 0.8}, {0.9, 1.3, 1.6});
        const auto m = generate_responses(truth, ObservationMask(3, 3, true), 2000, 42);
        const PriorConfig priors{};
        const auto result = fit(m, priors);
        const auto f = [&](const std::vector<double>& x) { return oracle::objective(m, x, priors); };
        // Coarse grid over the abilities first (items at their pooled-rate
        // values), then pattern-search refinement over all nine parameters.
        std::vector<double> start(9, 0.0);
        double best_v = -1e300;
        for (double t0 = -2.0; t0 <= 2.0 + 1e-9; t0 += 0.25)
            for (double t1 = -2.0; t1 <= 2.0 + 1e-9; t1 += 0.25)
                for (double t2 = -2.0; t2 <= 2.0 + 1e-9; t2 += 0.25) {
                    std::vector<double> x{t0, t1, t2, 0, 0, 0, 0, 0, 0};
                    const double v = f(x);
                    if (v > best_v) {
                        best_v = v;
                        start = x;
                    }
                }
        const auto directions = [](const std::vector<double>& x) {
            std::vector<std::vector<double>> d;
            for (std::size_t k = 0; k < 9; ++k) {
                std::vector<double> e(9, 0.0);
                e[k] = 1.0;
                d.push_back(std::move(e));
            }
            std::vector<double> shift(9, 0.0), scale(9, 0.0);
            for (std::size_t k = 0; k < 6; ++k) {
                shift[k] = 1.0;
                scale[k] = x[k];
            }
            for (std::size_t k = 6; k < 9; ++k) scale[k] = -1.0;
            d.push_back(shift);
            d.push_back(scale);
            return d;
        };
        const auto best = oracle::pattern_search_max(f, start, directions, 0.25, 1e-6);
        const auto x = packed(result.abilities.theta, result.items.difficulty, result.items.log_discrimination);
        double worst = 0.0;
        for (std::size_t k = 0; k < 9; ++k) worst = std::max(worst, std::abs(x[k] - best[k]));
        report("numerics.fit_vs_search", result.converged && worst <= 0.05,
               "max |param difference| " + f4(worst) + " (<= 0.05)");
    }

    // Spearman against the classic formula; OLS against hand-solved normal equations.
    {
        double worst = 0.0;
        for (int rep = 0; rep < 200; ++rep) {
            const int n = 2 + rep % 11;
            std::vector<int> a(static_cast<std::size_t>(n)), b(a.size());
            for (int k = 0; k < n; ++k) a[k] = b[k] = k + 1;
            std::shuffle(a.begin(), a.end(), rng);
            std::shuffle(b.begin(), b.end(), rng);
            const std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
            worst = std::max(worst, std::abs(spearman_rho(ad, bd) - oracle::classic_spearman(a, b)));
        }
        std::ostringstream os;
        os << std::scientific << std::setprecision(2) << worst;
        report("numerics.spearman_oracle", worst <= 1e-8, "max difference " + os.str() + " (<= 1e-8)");
    }
    {
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<SurfacePoint> pts;
            const int n = 6 + rep % 10;
            for (int k = 0; k < n; ++k)
                pts.push_back({0.1 * (rng() % 8), 0.5 * (1 + rng() % 10), 0.3 * std::abs(z(rng))});
            std::vector<double> want;
            try {
                const auto w = oracle::interaction_normal_equations(pts);
                const auto got = ols_interaction(pts);
                for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(got.gamma[c] - w[c]));
            } catch (const std::exception&) {
                // degenerate random design; skipped
            }
        }
        std::ostringstream os;
        os << std::scientific << std::setprecision(2) << worst;
        report("numerics.ols_oracle", worst <= 1e-8, "max coefficient difference " + os.str() + " (<= 1e-8)");
    }

    // Shift invariance of the unpenalized data term.
    {
        double worst = 0.0;
        const auto cfg = domain_config(Domain::clinical, 3);
        const auto m = generate_responses(cfg.truth, cfg.mask, cfg.trials, 5);
        for (double c : {-2.5, -0.3, 0.7, 4.0}) {
            auto theta = cfg.truth.theta;
            auto items = cfg.truth.items;
            const double base = log_likelihood(m, theta, items, PriorConfig::none());
            for (double& t : theta) t += c;
            for (double& b : items.difficulty) b += c;
            worst = std::max(worst, std::abs(log_likelihood(m, theta, items, PriorConfig::none()) - base));
        }
        std::ostringstream os;
        os << std::scientific << std::setprecision(2) << worst;
        report("numerics.shift_invariance", worst <= 1e-8, "max change " + os.str() + " (<= 1e-8)");
    }
}

// ---------------------------------------------------------------------------

std::string quote(const std::string& s) { return "'" + s + "'"; }

void check_cli(const std::string& cli, const fs::path& work) {
    if (cli.empty()) {
        report("cli.clinical_end_to_end", false, "no --cli binary given");
        return;
    }
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string out = quote(work.string());
    const std::string log = quote((work / "cli.log").string());
    const int e1 = std::system((quote(cli) + " --seed 42 --out " + out + " export clinical >" + log + " 2>&1").c_str());
    const int e2 = std::system((quote(cli) + " --seed 42 --out " + out + " analyze " +
                                quote((work / "clinical_matrix.csv").string()) + " >>" + log + " 2>&1")
                                   .c_str());
    std::ifstream in(work / "analysis.json");
    if (e1 != 0 || e2 != 0 || !in) {
        report("cli.clinical_end_to_end", false, "command failed (see " + (work / "cli.log").string() + ")");
        return;
    }
    const auto js = nlohmann::json::parse(in);
    std::string top_irt, top_avg;
    for (const auto& s : js["irt"]["systems"]) {
        if (s["rank_irt"].get<double>() == 1.0) top_irt = s["label"].get<std::string>();
        if (s["rank_average"].get<double>() == 1.0) top_avg = s["label"].get<std::string>();
    }
    const bool differ = !js["rankings_agree"].get<bool>();
    const std::string verdict = js["decision"]["verdict"].get<std::string>();
    const double cov = js["diagnostics"]["coverage"].get<double>();
    report("cli.clinical_end_to_end",
           differ && top_irt == "True Miracle Drug" && verdict == "use_irt",
           std::string("rankings ") + (differ ? "differ" : "agree") + ", IRT #1 '" + top_irt +
               "', average #1 '" + top_avg + "', verdict " + verdict + " at coverage " + f4(cov));
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    fs::path work = fs::temp_directory_path() / "fairrank_acceptance";
    for (int k = 1; k < argc; ++k) {
        const std::string arg = argv[k];
        if (arg == "--cli" && k + 1 < argc) cli = argv[++k];
        else if (arg == "--work" && k + 1 < argc) work = argv[++k];
        else {
            std::cerr << "usage: fairrank_acceptance [--cli <fairrank>] [--work <dir>]\n";
            return 2;
        }
    }
    try {
        check_domains();
        check_sweep();
        check_sensitivity();
        check_numerics();
        check_cli(cli, work);
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << '\n';
        return 1;
    }
    std::cout << '\n' << (g_total - g_failed) << "/" << g_total << " criteria passed\n";
    return g_failed == 0 ? 0 : 1;
}
