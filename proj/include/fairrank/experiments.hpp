#pragma once

// Multi-seed domain reproductions, the sparsity x difficulty-gap grid sweep,
// the coverage sensitivity study, the practitioner decision rule, and the
// writers for every result artifact.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrank/eval_core.hpp"
#include "fairrank/irt2pl.hpp"
#include "fairrank/ranking_stats.hpp"
#include "fairrank/simgen.hpp"

namespace fairrank {

// ---------------------------------------------------------------------------
// Small utilities

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

[[nodiscard]] inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return {std::nan(""), std::nan("")};
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size()));
    return out;
}

/// Fixed 4-decimal formatting used by every artifact.
[[nodiscard]] inline std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

[[nodiscard]] inline unsigned resolve_jobs(unsigned jobs) {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Runs fn(k) for k in [0, n) on up to `jobs` threads. If any call throws,
/// the exception from the smallest k is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                fn(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const unsigned workers = std::min<std::size_t>(resolve_jobs(jobs), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Analytic bias illustration

/// Expected simple average of a system with ability `theta` over the given
/// items: mean of sigma(a_i (theta - b_i)).
[[nodiscard]] inline double expected_average_bias(double theta, std::span<const double> a,
                                                  std::span<const double> b) {
    if (a.empty() || a.size() != b.size())
        throw std::invalid_argument("expected_average_bias needs a nonempty, matched item subset");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += predict_prob(theta, a[i], b[i]);
    return sum / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Domain reproduction

struct DomainRunSettings {
    int n_seeds = 20;
    std::uint64_t master_seed = 42;
    PriorConfig priors{};
    FitSettings fit{};
    unsigned jobs = 0;
};

/// Outcome of a single seed of a domain experiment.
struct SeedOutcome {
    std::uint64_t seed = 0;
    double rho_avg = 0.0;
    double rho_irt = 0.0;
    double rho_difficulty = 0.0;
    Ranking truth, average, irt;
    std::vector<double> theta_hat;
    bool converged = false;
};

struct TrackedDisplacement {
    std::string role;
    std::string label;
    std::size_t index = 0;
    double mean_displacement_avg = 0.0;
    double mean_displacement_irt = 0.0;
};

struct DomainResult {
    Domain domain = Domain::nlp;
    std::string name;
    std::string title;
    double coverage = 0.0;
    double difficulty_gap = 0.0;
    double sparsity_gap_product = 0.0;
    MeanStd rho_avg, rho_irt;
    /// Spearman(b_hat, b*) on the first (default) seed.
    double item_recovery = 0.0;
    std::vector<TrackedDisplacement> tracked;
    std::vector<SeedOutcome> seeds;
    std::vector<std::string> system_labels;

    /// Number of seeds on which `pred(outcome)` holds.
    template <class Pred>
    [[nodiscard]] int count_seeds(Pred&& pred) const {
        return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), pred));
    }
};

/// Verdict label from the mean IRT advantage.
[[nodiscard]] inline std::string verdict_label(double delta_rho) {
    if (delta_rho <= 0.01) return "Both correct";
    if (delta_rho <= 0.08) return "Avg. degrades";
    if (delta_rho <= 0.15) return "Avg. unreliable";
    return "Avg. misleading";
}

[[nodiscard]] inline SeedOutcome run_domain_seed(Domain d, std::uint64_t seed,
                                                 const PriorConfig& priors,
                                                 const FitSettings& settings) {
    const auto cfg = domain_config(d, seed);
    const auto matrix = generate_responses(cfg.truth, cfg.mask, cfg.trials, mix_seed(seed, {1}));
    SeedOutcome out;
    out.seed = seed;
    out.truth = rank_scores(cfg.truth.theta);
    out.average = simple_average(matrix);
    const auto result = fit(matrix, priors, settings);
    out.irt = rank_by_ability(result);
    out.theta_hat = result.abilities.theta;
    out.converged = result.converged;
    out.rho_avg = spearman_rho(out.average, out.truth);
    out.rho_irt = spearman_rho(out.irt, out.truth);
    out.rho_difficulty =
        spearman_rho(rank_scores(result.items.difficulty), rank_scores(cfg.truth.items.difficulty));
    return out;
}

[[nodiscard]] inline DomainResult run_domain(Domain d, const DomainRunSettings& s = {}) {
    if (s.n_seeds < 1) throw std::invalid_argument("run_domain needs at least one seed");
    const auto base = domain_config(d, 0);
    DomainResult r;
    r.domain = d;
    r.name = base.name;
    r.title = std::string(domain_title(d));
    r.system_labels = base.truth.system_labels;
    r.coverage = coverage(base.mask);
    r.difficulty_gap = difficulty_gap(base.truth.items);
    r.sparsity_gap_product = (1.0 - r.coverage) * r.difficulty_gap;

    r.seeds.resize(static_cast<std::size_t>(s.n_seeds));
    parallel_for(r.seeds.size(), s.jobs, [&](std::size_t k) {
        const auto seed = mix_seed(s.master_seed, {static_cast<std::uint64_t>(d), k});
        try {
            r.seeds[k] = run_domain_seed(d, seed, s.priors, s.fit);
        } catch (const std::exception& e) {
            throw std::runtime_error(r.name + " seed index " + std::to_string(k) + ": " + e.what());
        }
    });

    std::vector<double> avg, irt;
    for (const auto& o : r.seeds) {
        avg.push_back(o.rho_avg);
        irt.push_back(o.rho_irt);
    }
    r.rho_avg = mean_std(avg);
    r.rho_irt = mean_std(irt);
    r.item_recovery = r.seeds.front().rho_difficulty;
    for (const auto& t : base.tracked) {
        TrackedDisplacement td{t.role, base.truth.system_labels[t.index], t.index, 0.0, 0.0};
        for (const auto& o : r.seeds) {
            td.mean_displacement_avg += rank_displacement(o.average, o.truth, t.index);
            td.mean_displacement_irt += rank_displacement(o.irt, o.truth, t.index);
        }
        td.mean_displacement_avg /= static_cast<double>(r.seeds.size());
        td.mean_displacement_irt /= static_cast<double>(r.seeds.size());
        r.tracked.push_back(std::move(td));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Grid sweep

enum class Mechanism { biased, mcar };

[[nodiscard]] inline std::string_view mechanism_name(Mechanism m) {
    return m == Mechanism::biased ? "biased" : "mcar";
}

/// Evenly spaced grid from `lo` to `hi` inclusive; values rounded to 1e-10
/// so that 0.05 * k prints and compares cleanly.
[[nodiscard]] inline std::vector<double> make_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("invalid grid bounds or step");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = std::round((lo + step * static_cast<double>(k)) * 1e10) / 1e10;
    return out;
}

struct SweepSettings {
    std::vector<double> sparsity = make_grid(0.0, 0.70, 0.05);
    std::vector<double> gaps = make_grid(0.5, 5.0, 0.5);
    std::vector<Mechanism> mechanisms{Mechanism::biased, Mechanism::mcar};
    int n_seeds = 15;
    std::size_t n_systems = 10;
    std::size_t n_items = 10;
    int trials = 100;
    std::uint64_t master_seed = 42;
    PriorConfig priors{};
    FitSettings fit{};
    MaskConstraints constraints{};
    double bias_exponent = kDefaultBiasExponent;
    /// A cell with a larger fraction of failed seeds invalidates the sweep.
    double max_failure_fraction = 0.2;
    unsigned jobs = 0;
};

struct SweepCell {
    double sparsity = 0.0;
    double gap = 0.0;
    Mechanism mechanism = Mechanism::biased;
    std::size_t s_index = 0, d_index = 0;
    /// Per-replicate values for seeds that completed, in replicate order.
    std::vector<double> rho_avg, rho_irt;
    std::vector<std::string> failures;
    MeanStd avg, irt;

    [[nodiscard]] std::size_t n_ok() const noexcept { return rho_avg.size(); }
};

struct SweepResult {
    std::vector<double> sparsity;
    std::vector<double> gaps;
    std::vector<Mechanism> mechanisms;
    int n_seeds = 0;
    /// Ordered by (mechanism, S index, D index).
    std::vector<SweepCell> cells;
    bool valid = true;

    [[nodiscard]] const SweepCell& at(Mechanism m, std::size_t si, std::size_t di) const {
        for (const auto& c : cells)
            if (c.mechanism == m && c.s_index == si && c.d_index == di) return c;
        throw std::out_of_range("sweep cell not present");
    }
    [[nodiscard]] bool has(Mechanism m) const {
        return std::find(mechanisms.begin(), mechanisms.end(), m) != mechanisms.end();
    }
    [[nodiscard]] std::vector<const SweepCell*> cells_for(Mechanism m) const {
        std::vector<const SweepCell*> out;
        for (const auto& c : cells)
            if (c.mechanism == m) out.push_back(&c);
        return out;
    }
};

/// Rows fed to the interaction regression: one per cell (mean error) or one
/// per completed seed.
enum class RegressionRows { cells, seeds };

[[nodiscard]] inline std::vector<SurfacePoint> error_surface(const SweepResult& sweep, Mechanism m,
                                                             RegressionRows rows = RegressionRows::cells) {
    std::vector<SurfacePoint> out;
    for (const auto* c : sweep.cells_for(m)) {
        if (c->n_ok() == 0) continue;
        if (rows == RegressionRows::cells) {
            out.push_back({c->sparsity, c->gap, 1.0 - c->avg.mean});
        } else {
            for (double r : c->rho_avg) out.push_back({c->sparsity, c->gap, 1.0 - r});
        }
    }
    return out;
}

struct SweepReplicate {
    double rho_avg = 0.0;
    double rho_irt = 0.0;
};

[[nodiscard]] inline SweepReplicate run_sweep_replicate(double sparsity, double gap, Mechanism m,
                                                        std::uint64_t mask_seed,
                                                        std::uint64_t response_seed,
                                                        const SweepSettings& s) {
    const auto truth = sweep_truth(gap, s.n_systems, s.n_items);
    const auto mask =
        m == Mechanism::biased
            ? make_biased_mask(s.n_systems, s.n_items, sparsity, truth.theta,
                               truth.items.difficulty, s.constraints, mask_seed, s.bias_exponent)
            : make_mcar_mask(s.n_systems, s.n_items, sparsity, s.constraints, mask_seed);
    const auto matrix = generate_responses(truth, mask, s.trials, response_seed);
    const auto truth_rank = rank_scores(truth.theta);
    const auto result = fit(matrix, s.priors, s.fit);
    return {spearman_rho(simple_average(matrix), truth_rank),
            spearman_rho(rank_by_ability(result), truth_rank)};
}

/// Runs every (mechanism, S, D, replicate) work unit. Response draws depend
/// on (S, D, replicate) only, so both mechanisms see common random numbers
/// and coincide exactly at S = 0; mask draws additionally depend on the
/// mechanism.
[[nodiscard]] inline SweepResult run_sweep(const SweepSettings& s = {}) {
    if (s.sparsity.empty() || s.gaps.empty() || s.mechanisms.empty())
        throw std::invalid_argument("sweep grids must be nonempty");
    if (s.n_seeds < 1) throw std::invalid_argument("sweep needs at least one seed per cell");
    SweepResult out;
    out.sparsity = s.sparsity;
    out.gaps = s.gaps;
    out.mechanisms = s.mechanisms;
    out.n_seeds = s.n_seeds;
    for (auto m : s.mechanisms)
        for (std::size_t si = 0; si < s.sparsity.size(); ++si)
            for (std::size_t di = 0; di < s.gaps.size(); ++di) {
                SweepCell c;
                c.sparsity = s.sparsity[si];
                c.gap = s.gaps[di];
                c.mechanism = m;
                c.s_index = si;
                c.d_index = di;
                out.cells.push_back(std::move(c));
            }

    const auto reps = static_cast<std::size_t>(s.n_seeds);
    struct Slot {
        std::optional<SweepReplicate> value;
        std::string error;
    };
    std::vector<Slot> slots(out.cells.size() * reps);
    parallel_for(slots.size(), s.jobs, [&](std::size_t k) {
        const auto& c = out.cells[k / reps];
        const std::uint64_t rep = k % reps;
        const auto response_seed = mix_seed(s.master_seed, {c.s_index, c.d_index, rep, 0x72657370ULL});
        const auto mask_seed = mix_seed(
            s.master_seed, {static_cast<std::uint64_t>(c.mechanism), c.s_index, c.d_index, rep});
        try {
            slots[k].value = run_sweep_replicate(c.sparsity, c.gap, c.mechanism, mask_seed,
                                                 response_seed, s);
        } catch (const std::exception& e) {
            slots[k].error = "replicate " + std::to_string(rep) + ": " + e.what();
        }
    });

    for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
        auto& c = out.cells[ci];
        for (std::size_t r = 0; r < reps; ++r) {
            const auto& slot = slots[ci * reps + r];
            if (slot.value) {
                c.rho_avg.push_back(slot.value->rho_avg);
                c.rho_irt.push_back(slot.value->rho_irt);
            } else {
                c.failures.push_back(slot.error);
            }
        }
        c.avg = mean_std(c.rho_avg);
        c.irt = mean_std(c.rho_irt);
        if (static_cast<double>(c.failures.size()) > s.max_failure_fraction * static_cast<double>(reps))
            out.valid = false;
    }
    return out;
}

struct SweepAnalysis {
    RegressionRows rows = RegressionRows::cells;
    std::optional<InteractionFit> biased, mcar;
    std::optional<PowerLawFit> power_law;
    /// Why the power law could not be fitted (e.g. too few nonzero errors).
    std::string power_law_error;
    /// Mean ranking error over cells with S >= 0.40.
    std::optional<double> biased_high_sparsity_error, mcar_high_sparsity_error;

    [[nodiscard]] std::optional<double> mechanism_gap() const {
        if (!biased_high_sparsity_error || !mcar_high_sparsity_error) return std::nullopt;
        return *biased_high_sparsity_error - *mcar_high_sparsity_error;
    }
};

inline constexpr double kHighSparsity = 0.40;

[[nodiscard]] inline SweepAnalysis analyze_sweep(const SweepResult& sweep,
                                                 RegressionRows rows = RegressionRows::cells) {
    SweepAnalysis a;
    a.rows = rows;
    auto high_error = [&](Mechanism m) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto* c : sweep.cells_for(m))
            if (c->sparsity >= kHighSparsity - 1e-9 && c->n_ok() > 0) {
                sum += 1.0 - c->avg.mean;
                ++n;
            }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    if (sweep.has(Mechanism::biased)) {
        const auto pts = error_surface(sweep, Mechanism::biased, rows);
        a.biased = ols_interaction(pts);
        try {
            a.power_law = power_law_fit(error_surface(sweep, Mechanism::biased, RegressionRows::cells));
        } catch (const std::invalid_argument& e) {
            a.power_law_error = e.what();
        } catch (const std::domain_error& e) {
            a.power_law_error = e.what();
        }
        a.biased_high_sparsity_error = high_error(Mechanism::biased);
    }
    if (sweep.has(Mechanism::mcar)) {
        a.mcar = ols_interaction(error_surface(sweep, Mechanism::mcar, rows));
        a.mcar_high_sparsity_error = high_error(Mechanism::mcar);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Coverage sensitivity

struct SensitivitySettings {
    std::vector<double> coverages = make_grid(0.3, 1.0, 0.1);
    std::vector<double> gaps = make_grid(1.0, 4.0, 1.0);
    int n_seeds = 15;
    std::uint64_t master_seed = 42;
    PriorConfig priors{};
    double bias_exponent = kDefaultBiasExponent;
    unsigned jobs = 0;
};

struct SensitivityRow {
    double coverage = 0.0;
    double gap = 0.0;
    Mechanism mechanism = Mechanism::biased;
    MeanStd avg, irt;
    std::size_t n_ok = 0;
};

struct SensitivityResult {
    std::vector<SensitivityRow> rows;
    bool valid = true;

    /// Full coverage: averaging stays above 0.95 at every gap.
    [[nodiscard]] bool full_coverage_holds() const {
        return check([](const SensitivityRow& r) { return std::abs(r.coverage - 1.0) < 1e-9; },
                     [](const SensitivityRow& r) { return r.avg.mean > 0.95; });
    }
    /// MCAR at 50% coverage: averaging stays above 0.90 at every gap.
    [[nodiscard]] bool mcar_half_coverage_holds() const {
        return check(
            [](const SensitivityRow& r) {
                return r.mechanism == Mechanism::mcar && std::abs(r.coverage - 0.5) < 1e-9;
            },
            [](const SensitivityRow& r) { return r.avg.mean > 0.90; });
    }
    /// Biased at 30% coverage: IRT stays above 0.95 at every gap.
    [[nodiscard]] bool biased_low_coverage_irt_holds() const {
        return check(
            [](const SensitivityRow& r) {
                return r.mechanism == Mechanism::biased && std::abs(r.coverage - 0.3) < 1e-9;
            },
            [](const SensitivityRow& r) { return r.irt.mean > 0.95; });
    }

private:
    template <class Select, class Test>
    bool check(Select&& select, Test&& test) const {
        bool any = false;
        for (const auto& r : rows)
            if (select(r)) {
                any = true;
                if (!test(r)) return false;
            }
        return any;
    }
};

[[nodiscard]] inline SensitivityResult run_sensitivity(const SensitivitySettings& s = {}) {
    SweepSettings sw;
    sw.sparsity.clear();
    for (double c : s.coverages) sw.sparsity.push_back(std::round((1.0 - c) * 1e10) / 1e10);
    sw.gaps = s.gaps;
    sw.n_seeds = s.n_seeds;
    sw.master_seed = mix_seed(s.master_seed, {0x73656E73ULL});
    sw.priors = s.priors;
    sw.bias_exponent = s.bias_exponent;
    sw.jobs = s.jobs;
    const auto sweep = run_sweep(sw);
    SensitivityResult out;
    out.valid = sweep.valid;
    for (const auto& c : sweep.cells)
        out.rows.push_back({s.coverages[c.s_index], c.gap, c.mechanism, c.avg, c.irt, c.n_ok()});
    return out;
}

// ---------------------------------------------------------------------------
// Decision rule

enum class Verdict { averaging_adequate, use_irt };

[[nodiscard]] inline std::string_view verdict_name(Verdict v) {
    return v == Verdict::averaging_adequate ? "averaging_adequate" : "use_irt";
}

struct DecisionVerdict {
    double coverage = 0.0;
    double heterogeneity = 0.0;
    Verdict verdict = Verdict::use_irt;
    std::string rationale;
};

inline constexpr double kDefaultCoverageThreshold = 0.95;
inline constexpr double kDefaultHeterogeneityThreshold = 0.25;

/// Averaging is adequate only when coverage exceeds the threshold and the
/// coefficient of variation of per-item success rates does not.
[[nodiscard]] inline DecisionVerdict decision_rule(
    const ResponseMatrix& matrix, double coverage_threshold = kDefaultCoverageThreshold,
    double heterogeneity_threshold = kDefaultHeterogeneityThreshold) {
    DecisionVerdict v;
    v.coverage = coverage(matrix);
    v.heterogeneity = estimate_difficulty_heterogeneity(matrix);
    const bool dense = v.coverage > coverage_threshold;
    const bool homogeneous = v.heterogeneity <= heterogeneity_threshold;
    v.verdict = dense && homogeneous ? Verdict::averaging_adequate : Verdict::use_irt;
    std::ostringstream why;
    why << "coverage " << fixed4(v.coverage) << (dense ? " > " : " <= ") << fixed4(coverage_threshold)
        << "; item success-rate CV " << fixed4(v.heterogeneity)
        << (homogeneous ? " <= " : " > ") << fixed4(heterogeneity_threshold);
    if (v.verdict == Verdict::averaging_adequate)
        why << "; simple averaging is adequate (report both rankings anyway)";
    else
        why << "; use IRT and report both rankings";
    v.rationale = why.str();
    return v;
}

// ---------------------------------------------------------------------------
// Artifact writers

inline void write_table1_csv(const std::vector<DomainResult>& results, std::ostream& out) {
    out << "domain,coverage,difficulty_gap,rho_avg_mean,rho_avg_std,rho_irt_mean,rho_irt_std,verdict\n";
    for (const auto& r : results)
        out << r.title << ',' << fixed4(r.coverage) << ',' << fixed4(r.difficulty_gap) << ','
            << fixed4(r.rho_avg.mean) << ',' << fixed4(r.rho_avg.std) << ','
            << fixed4(r.rho_irt.mean) << ',' << fixed4(r.rho_irt.std) << ','
            << verdict_label(r.rho_irt.mean - r.rho_avg.mean) << '\n';
}

inline void write_table2_csv(const std::vector<DomainResult>& results, std::ostream& out) {
    out << "domain,S,D,SxD,rho_avg_mean,rho_avg_std,rho_irt_mean,rho_irt_std\n";
    for (const auto& r : results)
        out << r.title << ',' << fixed4(1.0 - r.coverage) << ',' << fixed4(r.difficulty_gap) << ','
            << fixed4(r.sparsity_gap_product) << ',' << fixed4(r.rho_avg.mean) << ','
            << fixed4(r.rho_avg.std) << ',' << fixed4(r.rho_irt.mean) << ','
            << fixed4(r.rho_irt.std) << '\n';
}

inline void write_domain_report(const std::vector<DomainResult>& results, std::ostream& out) {
    out << "Domain reproduction\n===================\n\n";
    for (const auto& r : results) {
        out << r.title << " (" << r.seeds.size() << " seeds)\n";
        out << "  coverage " << fixed4(r.coverage) << ", difficulty gap " << fixed4(r.difficulty_gap)
            << ", S x D " << fixed4(r.sparsity_gap_product) << '\n';
        out << "  rho_avg " << fixed4(r.rho_avg.mean) << " +/- " << fixed4(r.rho_avg.std)
            << "   rho_irt " << fixed4(r.rho_irt.mean) << " +/- " << fixed4(r.rho_irt.std) << '\n';
        out << "  verdict: " << verdict_label(r.rho_irt.mean - r.rho_avg.mean) << '\n';
        out << "  item difficulty recovery (default seed): " << fixed4(r.item_recovery) << '\n';
        for (const auto& t : r.tracked)
            out << "  " << t.label << " [" << t.role << "]: mean displacement avg "
                << fixed4(t.mean_displacement_avg) << ", irt " << fixed4(t.mean_displacement_irt)
                << '\n';
        out << '\n';
    }
}

inline void write_sweep_csv(const SweepResult& sweep, Mechanism m, std::ostream& out) {
    out << "S,D,mechanism,rho_avg_mean,rho_avg_std,rho_irt_mean,rho_irt_std,n_seeds\n";
    for (const auto* c : sweep.cells_for(m))
        out << fixed4(c->sparsity) << ',' << fixed4(c->gap) << ',' << mechanism_name(m) << ','
            << fixed4(c->avg.mean) << ',' << fixed4(c->avg.std) << ',' << fixed4(c->irt.mean) << ','
            << fixed4(c->irt.std) << ',' << c->n_ok() << '\n';
}

[[nodiscard]] inline nlohmann::json to_json(const InteractionFit& f) {
    return {{"gamma", f.gamma}, {"t_values", f.t_values}, {"r_squared", f.r_squared}, {"n", f.n}};
}

[[nodiscard]] inline nlohmann::json to_json(const PowerLawFit& f) {
    return {{"alpha", f.alpha}, {"beta", f.beta}, {"r_squared", f.r_squared}};
}

[[nodiscard]] inline nlohmann::json to_json(const SweepAnalysis& a) {
    nlohmann::json j;
    j["rows"] = a.rows == RegressionRows::cells ? "cells" : "seeds";
    if (a.biased) j["biased"] = to_json(*a.biased);
    if (a.mcar) j["mcar"] = to_json(*a.mcar);
    if (a.power_law) j["power_law"] = to_json(*a.power_law);
    else if (!a.power_law_error.empty()) j["power_law"] = {{"error", a.power_law_error}};
    nlohmann::json gap;
    gap["threshold_S"] = kHighSparsity;
    if (a.biased_high_sparsity_error) gap["biased_mean_error"] = *a.biased_high_sparsity_error;
    if (a.mcar_high_sparsity_error) gap["mcar_mean_error"] = *a.mcar_high_sparsity_error;
    if (auto g = a.mechanism_gap()) gap["difference"] = *g;
    j["mechanism_gap"] = std::move(gap);
    return j;
}

inline void write_sweep_report(const SweepResult& sweep, const SweepAnalysis& a, std::ostream& out) {
    out << "Grid sweep\n==========\n\n";
    out << sweep.sparsity.size() * sweep.gaps.size() << " cells per mechanism, " << sweep.n_seeds
        << " seeds per cell; sweep " << (sweep.valid ? "valid" : "INVALID (failure budget exceeded)")
        << "\n\n";
    for (auto m : sweep.mechanisms) {
        double min_avg = 1.0, min_irt = 1.0;
        std::size_t failures = 0;
        for (const auto* c : sweep.cells_for(m)) {
            if (c->n_ok() == 0) continue;
            min_avg = std::min(min_avg, c->avg.mean);
            min_irt = std::min(min_irt, c->irt.mean);
            failures += c->failures.size();
        }
        out << mechanism_name(m) << ": min mean rho_avg " << fixed4(min_avg)
            << ", min mean rho_irt " << fixed4(min_irt) << ", failed replicates " << failures << '\n';
    }
    auto print_fit = [&](const char* name, const InteractionFit& f) {
        out << "\nInteraction regression (" << name << ", n=" << f.n << ")\n";
        const char* labels[4] = {"gamma0 (intercept)", "gamma1 (S_c)", "gamma2 (D_c)",
                                 "gamma3 (S_c x D_c)"};
        for (int k = 0; k < 4; ++k)
            out << "  " << std::left << std::setw(20) << labels[k] << std::right << std::setw(10)
                << fixed4(f.gamma[k]) << "  t = " << fixed4(f.t_values[k]) << '\n';
        out << "  R^2 = " << fixed4(f.r_squared) << '\n';
    };
    if (a.biased) print_fit("biased", *a.biased);
    if (a.mcar) print_fit("mcar", *a.mcar);
    if (a.power_law)
        out << "\nPower law 1 - rho_avg = alpha (S D)^beta: alpha " << fixed4(a.power_law->alpha)
            << ", beta " << fixed4(a.power_law->beta) << ", R^2 " << fixed4(a.power_law->r_squared)
            << '\n';
    else if (!a.power_law_error.empty())
        out << "\nPower law not fitted: " << a.power_law_error << '\n';
    if (auto g = a.mechanism_gap())
        out << "\nMean error at S >= 0.40: biased " << fixed4(*a.biased_high_sparsity_error)
            << ", mcar " << fixed4(*a.mcar_high_sparsity_error) << ", difference " << fixed4(*g)
            << '\n';
}

inline void write_sensitivity_csv(const SensitivityResult& r, std::ostream& out) {
    out << "coverage,D,mechanism,rho_avg_mean,rho_avg_std,rho_irt_mean,rho_irt_std,n_seeds\n";
    for (const auto& row : r.rows)
        out << fixed4(row.coverage) << ',' << fixed4(row.gap) << ',' << mechanism_name(row.mechanism)
            << ',' << fixed4(row.avg.mean) << ',' << fixed4(row.avg.std) << ','
            << fixed4(row.irt.mean) << ',' << fixed4(row.irt.std) << ',' << row.n_ok << '\n';
}

inline void write_sensitivity_report(const SensitivityResult& r, std::ostream& out) {
    auto yes = [](bool b) { return b ? "holds" : "FAILS"; };
    out << "Coverage sensitivity\n====================\n\n";
    out << "full coverage, rho_avg > 0.95 at every gap: " << yes(r.full_coverage_holds()) << '\n';
    out << "MCAR at C = 0.5, rho_avg > 0.90 at every gap: " << yes(r.mcar_half_coverage_holds())
        << '\n';
    out << "biased at C = 0.3, rho_irt > 0.95 at every gap: "
        << yes(r.biased_low_coverage_irt_holds()) << '\n';
}

}  // namespace fairrank
