#pragma once

// Synthetic evaluation data: binomial 2PL response sampling, the four domain
// configurations, and MCAR / difficulty-biased observation masks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairrank/eval_core.hpp"
#include "fairrank/irt2pl.hpp"
#include "fairrank/item_parameters.hpp"

namespace fairrank {

/// splitmix64 finalizer; used to derive independent stream seeds.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t seed,
                                               std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = mix_seed(seed);
    for (auto t : tags) h = mix_seed(h ^ mix_seed(t + 0x632BE59BD9B4E019ULL));
    return h;
}

using Rng = std::mt19937_64;

[[nodiscard]] inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// Ground-truth abilities and item parameters.
struct TrueModel {
    std::vector<double> theta;
    ItemParameterSet items;
    std::vector<std::string> system_labels;
};

/// Binomial(K, P_ji) success counts for every observed cell of `mask`.
[[nodiscard]] inline ResponseMatrix generate_responses(const TrueModel& truth,
                                                       const ObservationMask& mask, int trials,
                                                       std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("trials per cell must be >= 1");
    if (truth.theta.size() != mask.n_systems() || truth.items.size() != mask.n_items())
        throw std::invalid_argument("truth dimensions do not match the mask");
    Rng rng = make_rng(seed);
    std::vector<CellEntry> cells;
    cells.reserve(mask.count());
    for (const auto& [j, i] : mask.pairs()) {
        const double p = predict_prob(truth.theta[j], truth.items.discrimination(i),
                                      truth.items.difficulty[i]);
        std::binomial_distribution<int> draw(trials, p);
        cells.push_back({j, i, {draw(rng), trials}});
    }
    return ResponseMatrix(mask.n_systems(), mask.n_items(), std::move(cells), truth.system_labels,
                          truth.items.labels);
}

struct MaskConstraints {
    std::size_t min_items_per_system = 2;
    std::size_t min_systems_per_item = 3;
    bool require_connected = true;
    int max_attempts = 1000;
};

[[nodiscard]] inline bool satisfies(const ObservationMask& mask, const MaskConstraints& c) {
    const auto d = diagnose_mask(mask);
    return d.min_items_per_system >= c.min_items_per_system &&
           d.min_systems_per_item >= c.min_systems_per_item &&
           (!c.require_connected || d.bipartite_connected);
}

/// Number of cells kept when a J x I grid is thinned to sparsity S.
[[nodiscard]] inline std::size_t target_observed(std::size_t J, std::size_t I, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw std::invalid_argument("sparsity must lie in [0, 1)");
    return static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(J * I)));
}

namespace detail {

inline void check_satisfiable(std::size_t J, std::size_t I, std::size_t target,
                              const MaskConstraints& c) {
    if (target < std::max(c.min_items_per_system * J, c.min_systems_per_item * I) ||
        c.min_items_per_system > I || c.min_systems_per_item > J)
        throw std::invalid_argument("mask constraints unsatisfiable at " + std::to_string(target) +
                                    " observed cells of " + std::to_string(J * I));
}

// Removes candidate cells in the given order, skipping any whose removal
// would break a per-row or per-column minimum, until `target` cells remain.
inline bool thin_in_order(ObservationMask& mask,
                          std::span<const std::pair<std::size_t, std::size_t>> order,
                          std::size_t target, const MaskConstraints& c) {
    std::vector<std::size_t> row(mask.n_systems()), col(mask.n_items());
    for (std::size_t j = 0; j < mask.n_systems(); ++j) row[j] = mask.items_observed_for(j);
    for (std::size_t i = 0; i < mask.n_items(); ++i) col[i] = mask.systems_observed_for(i);
    std::size_t count = mask.count();
    for (const auto& [j, i] : order) {
        if (count <= target) break;
        if (!mask.observed(j, i) || row[j] <= c.min_items_per_system ||
            col[i] <= c.min_systems_per_item)
            continue;
        mask.set(j, i, false);
        --row[j];
        --col[i];
        --count;
    }
    return count == target;
}

}  // namespace detail

/// Thins `start` to `target` observed cells by removing cells drawn uniformly
/// from `removable` (a random order, skipping removals that would break the
/// minimums), resampling until the result is connected.
[[nodiscard]] inline ObservationMask thin_uniformly(
    const ObservationMask& start, std::vector<std::pair<std::size_t, std::size_t>> removable,
    std::size_t target, const MaskConstraints& c, Rng& rng) {
    for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
        ObservationMask mask = start;
        std::shuffle(removable.begin(), removable.end(), rng);
        if (!detail::thin_in_order(mask, removable, target, c)) continue;
        if (satisfies(mask, c)) return mask;
    }
    throw std::runtime_error("could not sample a valid observation mask after " +
                             std::to_string(c.max_attempts) + " attempts");
}

/// Keeps `target` cells overall by giving each free row an equal share (the
/// remainder spread over randomly chosen rows). Each free row draws its share
/// uniformly from the easier and the harder half of the items separately,
/// splitting the share as evenly as possible between the halves, so that
/// no free row ends up with a systematically easy or hard profile.
/// Rows not marked free are kept as in `start`.
[[nodiscard]] inline ObservationMask thin_rows_evenly(const ObservationMask& start,
                                                      const std::vector<char>& free_row,
                                                      std::span<const double> difficulties,
                                                      std::size_t target, const MaskConstraints& c,
                                                      Rng& rng) {
    const std::size_t J = start.n_systems(), I = start.n_items();
    if (difficulties.size() != I) throw std::invalid_argument("difficulty count mismatch");
    std::vector<std::size_t> rows;
    std::size_t fixed = 0;
    for (std::size_t j = 0; j < J; ++j) {
        if (free_row[j]) rows.push_back(j);
        else fixed += start.items_observed_for(j);
    }
    if (rows.empty() || target < fixed || target - fixed > rows.size() * I)
        throw std::invalid_argument("cannot distribute observed cells over the free rows");
    const std::size_t budget = target - fixed;

    std::vector<std::size_t> order(I);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return difficulties[a] < difficulties[b]; });
    std::vector<std::size_t> easy(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(I / 2));
    std::vector<std::size_t> hard(order.begin() + static_cast<std::ptrdiff_t>(I / 2), order.end());

    for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
        ObservationMask mask = start;
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const std::size_t keep = budget / rows.size() + (k < budget % rows.size() ? 1 : 0);
            std::size_t keep_easy = keep / 2;
            if (keep % 2 == 1 && std::uniform_int_distribution<int>(0, 1)(rng) == 1) ++keep_easy;
            keep_easy = std::min(keep_easy, easy.size());
            keep_easy = std::max(keep_easy, keep > hard.size() ? keep - hard.size() : std::size_t{0});
            const std::size_t keep_hard = keep - keep_easy;
            std::shuffle(easy.begin(), easy.end(), rng);
            std::shuffle(hard.begin(), hard.end(), rng);
            for (std::size_t m = 0; m < easy.size(); ++m) mask.set(rows[k], easy[m], m < keep_easy);
            for (std::size_t m = 0; m < hard.size(); ++m) mask.set(rows[k], hard[m], m < keep_hard);
        }
        if (satisfies(mask, c)) return mask;
    }
    throw std::runtime_error("could not sample a valid observation mask after " +
                             std::to_string(c.max_attempts) + " attempts");
}

/// Missing-completely-at-random mask with round((1 - S) J I) observed cells.
[[nodiscard]] inline ObservationMask make_mcar_mask(std::size_t J, std::size_t I, double sparsity,
                                                    const MaskConstraints& c, std::uint64_t seed) {
    const auto target = target_observed(J, I, sparsity);
    detail::check_satisfiable(J, I, target, c);
    ObservationMask full(J, I, true);
    if (target == J * I) {
        if (!satisfies(full, c)) throw std::invalid_argument("full mask violates constraints");
        return full;
    }
    Rng rng = make_rng(seed);
    return thin_uniformly(full, full.pairs(), target, c, rng);
}

/// Default exponent on the difficulty rank in the biased drop weights.
inline constexpr double kDefaultBiasExponent = 1.5;

/// Difficulty-biased mask. Systems in the lower half by true ability drop
/// hard items preferentially, the upper half drops easy items. Each drop is
/// drawn without replacement with weight rank^p counted from the biased end
/// of the difficulty order (p = `rank_exponent`; 0 gives MCAR-like rows).
/// Drops are interleaved across systems in random round-robin order and
/// never break the per-row / per-column minimums.
[[nodiscard]] inline ObservationMask make_biased_mask(std::size_t J, std::size_t I, double sparsity,
                                                      std::span<const double> abilities,
                                                      std::span<const double> difficulties,
                                                      const MaskConstraints& c,
                                                      std::uint64_t seed,
                                                      double rank_exponent = kDefaultBiasExponent) {
    if (abilities.size() != J || difficulties.size() != I)
        throw std::invalid_argument("ability/difficulty lengths do not match mask dimensions");
    if (!(rank_exponent >= 0.0) || !std::isfinite(rank_exponent))
        throw std::invalid_argument("rank exponent must be finite and non-negative");
    const auto target = target_observed(J, I, sparsity);
    detail::check_satisfiable(J, I, target, c);
    ObservationMask full(J, I, true);
    if (target == J * I) return full;

    // rank 1 = easiest item
    std::vector<std::size_t> by_difficulty(I);
    std::iota(by_difficulty.begin(), by_difficulty.end(), std::size_t{0});
    std::stable_sort(by_difficulty.begin(), by_difficulty.end(),
                     [&](std::size_t a, std::size_t b) { return difficulties[a] < difficulties[b]; });
    std::vector<double> rank(I);
    for (std::size_t r = 0; r < I; ++r) rank[by_difficulty[r]] = static_cast<double>(r + 1);

    std::vector<std::size_t> by_ability(J);
    std::iota(by_ability.begin(), by_ability.end(), std::size_t{0});
    std::stable_sort(by_ability.begin(), by_ability.end(),
                     [&](std::size_t a, std::size_t b) { return abilities[a] < abilities[b]; });
    // weights[j][i]
    std::vector<std::vector<double>> weights(J, std::vector<double>(I, 1.0));
    const std::size_t half = J / 2;
    for (std::size_t k = 0; k < J; ++k) {
        const auto j = by_ability[k];
        for (std::size_t i = 0; i < I; ++i) {
            if (k < half) weights[j][i] = std::pow(rank[i], rank_exponent);
            else if (k >= J - half) weights[j][i] = std::pow(static_cast<double>(I) + 1.0 - rank[i], rank_exponent);
        }
    }

    Rng rng = make_rng(seed);
    const std::size_t drops = J * I - target;
    std::vector<std::size_t> systems(J);
    std::iota(systems.begin(), systems.end(), std::size_t{0});
    std::vector<double> w(I);

    for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
        std::vector<std::size_t> quota(J, drops / J);
        std::shuffle(systems.begin(), systems.end(), rng);
        for (std::size_t k = 0; k < drops % J; ++k) ++quota[systems[k]];

        ObservationMask mask = full;
        std::vector<std::size_t> row(J, I), col(I, J);
        bool stuck = false;
        std::size_t remaining = drops;
        while (remaining > 0 && !stuck) {
            std::shuffle(systems.begin(), systems.end(), rng);
            for (const auto j : systems) {
                if (quota[j] == 0) continue;
                double total = 0.0;
                for (std::size_t i = 0; i < I; ++i) {
                    const bool ok = mask.observed(j, i) && row[j] > c.min_items_per_system &&
                                    col[i] > c.min_systems_per_item;
                    w[i] = ok ? weights[j][i] : 0.0;
                    total += w[i];
                }
                if (total <= 0.0) {
                    stuck = true;
                    break;
                }
                std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
                const auto i = pick(rng);
                mask.set(j, i, false);
                --row[j];
                --col[i];
                --quota[j];
                --remaining;
            }
        }
        if (!stuck && satisfies(mask, c)) return mask;
    }
    throw std::runtime_error("could not sample a valid biased mask after " +
                             std::to_string(c.max_attempts) + " attempts");
}

/// Grid-sweep ground truth: difficulties evenly spaced on [-D/2, D/2],
/// abilities evenly spaced on [-2, 2], all discriminations 1.5.
[[nodiscard]] inline TrueModel sweep_truth(double gap, std::size_t J = 10, std::size_t I = 10) {
    if (!(gap > 0.0)) throw std::invalid_argument("difficulty gap must be positive");
    if (J < 2 || I < 2) throw std::invalid_argument("sweep truth needs J, I >= 2");
    TrueModel t;
    t.theta.resize(J);
    for (std::size_t j = 0; j < J; ++j)
        t.theta[j] = -2.0 + 4.0 * static_cast<double>(j) / static_cast<double>(J - 1);
    std::vector<double> b(I);
    for (std::size_t i = 0; i < I; ++i)
        b[i] = -0.5 * gap + gap * static_cast<double>(i) / static_cast<double>(I - 1);
    t.items = ItemParameterSet::from_discrimination(std::move(b), std::vector<double>(I, 1.5));
    for (std::size_t j = 0; j < J; ++j) t.system_labels.push_back("system_" + std::to_string(j));
    for (std::size_t i = 0; i < I; ++i) t.items.labels.push_back("item_" + std::to_string(i));
    return t;
}

enum class Domain { nlp, clinical, av, cyber };

inline constexpr std::array<Domain, 4> kAllDomains{Domain::nlp, Domain::clinical, Domain::av,
                                                   Domain::cyber};

[[nodiscard]] inline std::string_view domain_name(Domain d) {
    switch (d) {
        case Domain::nlp: return "nlp";
        case Domain::clinical: return "clinical";
        case Domain::av: return "av";
        case Domain::cyber: return "cyber";
    }
    return "unknown";
}

[[nodiscard]] inline std::string_view domain_title(Domain d) {
    switch (d) {
        case Domain::nlp: return "NLP (GLUE)";
        case Domain::clinical: return "Clinical Trials";
        case Domain::av: return "AV Safety";
        case Domain::cyber: return "Cybersecurity";
    }
    return "unknown";
}

[[nodiscard]] inline Domain parse_domain(std::string_view name) {
    for (auto d : kAllDomains)
        if (domain_name(d) == name) return d;
    throw std::invalid_argument("unknown domain '" + std::string(name) +
                                "' (expected nlp, clinical, av or cyber)");
}

/// A system whose displacement is tracked, e.g. the truly best system or a
/// system evaluated only on easy items.
struct TrackedSystem {
    std::string role;
    std::size_t index = 0;
};

struct DomainConfig {
    Domain domain = Domain::nlp;
    std::string name;
    TrueModel truth;
    ObservationMask mask;
    int trials = 1;
    std::vector<TrackedSystem> tracked;

    [[nodiscard]] std::optional<std::size_t> find(std::string_view role) const {
        for (const auto& t : tracked)
            if (t.role == role) return t.index;
        return std::nullopt;
    }
};

namespace detail {

struct PinnedRow {
    std::size_t system;
    std::vector<std::size_t> items;
};

struct DomainTable {
    std::vector<std::string> systems;
    std::vector<double> theta;
    std::vector<std::string> items;
    std::vector<double> b;
    std::vector<double> a;
    double coverage;
    int trials;
    std::vector<PinnedRow> pinned;
    std::vector<TrackedSystem> tracked;
};

inline DomainTable domain_table(Domain d) {
    switch (d) {
        case Domain::nlp: {
            DomainTable t;
            t.systems = {"ELMo",    "GPT",     "BERT-Base", "BERT-Large", "XLNet",  "RoBERTa",
                         "ALBERT",  "ELECTRA", "T5-Base",   "T5-Large",   "T5-11B", "DeBERTa"};
            for (std::size_t j = 0; j < 12; ++j) t.theta.push_back(-1.5 + 3.5 * j / 11.0);
            t.items = {"SST-2", "QQP", "MNLI", "QNLI", "STS-B", "MRPC", "RTE", "CoLA"};
            t.b = {-0.72, -0.55, -0.20, -0.10, 0.15, 0.30, 0.65, 0.89};
            t.a = {1.08, 1.45, 2.10, 1.85, 1.60, 1.95, 2.50, 3.21};
            t.coverage = 1.0;
            t.trials = 500;
            return t;
        }
        case Domain::clinical: {
            DomainTable t;
            t.systems = {"True Miracle Drug", "Drug 2", "Drug 3", "Drug 4", "Drug 5",
                         "Drug 6",            "Drug 7", "Drug 8", "Fake Miracle Drug", "Drug 10"};
            t.theta = {2.0, 1.5, 1.2, 0.9, 0.6, 0.3, 0.1, -0.05, -0.2, -1.5};
            t.items = {"Community Clinic A",  "Community Clinic B", "Regional Hospital C",
                       "Teaching Hospital D", "Specialty Center E", "ICU / Severe Ward F"};
            t.b = {-1.00, -0.50, 0.00, 0.50, 1.00, 1.50};
            t.a = {1.20, 1.50, 2.00, 2.50, 2.80, 3.00};
            t.coverage = 0.65;
            t.trials = 200;
            t.pinned = {{0, {2, 3, 4, 5}}, {8, {0, 1, 2}}};
            t.tracked = {{"true_best", 0}, {"fake", 8}};
            return t;
        }
        case Domain::av: {
            DomainTable t;
            t.systems = {"True Safe AV", "AV 2", "AV 3", "AV 4",  "AV 5",
                         "AV 6",         "AV 7", "Fake Safe AV", "AV 9", "AV 10"};
            t.theta = {2.0, 1.4, 1.0, 0.7, 0.4, 0.1, -0.1, -0.3, -0.8, -1.5};
            t.items = {"Sunny Suburb",      "Clear Urban Day",    "Rainy Highway",
                       "Dense Urban Night", "Fog / Construction", "Snowy Intersection"};
            t.b = {-1.50, -0.50, 0.20, 0.50, 0.75, 1.00};
            t.a = {1.56, 2.10, 2.45, 3.69, 2.90, 2.50};
            t.coverage = 0.60;
            t.trials = 1000;
            t.pinned = {{0, {2, 3, 4, 5}}, {7, {0, 1, 2}}, {1, {0, 1}}};
            t.tracked = {{"true_best", 0}, {"fake", 7}, {"easy_profile", 1}};
            return t;
        }
        case Domain::cyber: {
            DomainTable t;
            t.systems = {"True Secure", "DeepScan AI", "Enterprise Shield", "Product 4",
                         "Product 5",   "Product 6",   "Fake Secure",       "Product 8"};
            t.theta = {2.0, 1.4, 1.1, 0.7, 0.4, 0.0, -0.5, -1.2};
            t.items = {"Port Scan",  "DDoS",          "Basic Phishing",
                       "Ransomware", "Zero-Day Exploit", "Nation-State APT"};
            t.b = {-1.50, -0.80, -0.30, 0.50, 1.20, 2.00};
            t.a = {1.00, 1.50, 1.80, 2.50, 3.00, 3.50};
            t.coverage = 0.67;
            t.trials = 500;
            // Every row is fixed: the three middle products see only the four
            // easier attack types and the weakest product covers the APT column.
            t.pinned = {{0, {2, 3, 4, 5}}, {6, {0, 1, 2}},    {1, {2, 3, 4, 5}}, {2, {0, 1, 2, 3, 4}},
                        {3, {0, 1, 2, 3}}, {4, {0, 1, 2, 3}}, {5, {0, 1, 2, 3}}, {7, {0, 1, 4, 5}}};
            t.tracked = {{"true_best", 0},
                         {"fake", 6},
                         {"hard_profile", 1},
                         {"easy_profile", 2}};
            return t;
        }
    }
    throw std::invalid_argument("unknown domain");
}

}  // namespace detail

/// Full configuration of one domain experiment. Pinned rows (the systems
/// evaluated on deliberately easy or hard subsets) are fixed; every other
/// row is thinned at random, per seed, to reach the domain's coverage under
/// the min-2 / min-3 / connectivity constraints.
[[nodiscard]] inline DomainConfig domain_config(Domain d, std::uint64_t seed = 0,
                                                const MaskConstraints& c = {}) {
    const auto t = detail::domain_table(d);
    DomainConfig cfg;
    cfg.domain = d;
    cfg.name = std::string(domain_name(d));
    cfg.truth.theta = t.theta;
    cfg.truth.system_labels = t.systems;
    cfg.truth.items = ItemParameterSet::from_discrimination(t.b, t.a, t.items);
    cfg.trials = t.trials;
    cfg.tracked = t.tracked;

    const std::size_t J = t.systems.size(), I = t.items.size();
    ObservationMask start(J, I, true);
    std::vector<char> pinned(J, 0);
    for (const auto& row : t.pinned) {
        pinned[row.system] = 1;
        for (std::size_t i = 0; i < I; ++i) start.set(row.system, i, false);
        for (auto i : row.items) start.set(row.system, i, true);
    }
    const auto target = static_cast<std::size_t>(std::llround(t.coverage * static_cast<double>(J * I)));
    if (target >= start.count()) {
        if (!satisfies(start, c)) throw std::logic_error("fixed domain mask violates constraints");
        cfg.mask = start;
    } else {
        std::vector<char> free_row(J);
        for (std::size_t j = 0; j < J; ++j) free_row[j] = pinned[j] ? 0 : 1;
        Rng rng = make_rng(mix_seed(seed, {static_cast<std::uint64_t>(d), 0x6D61736BULL}));
        cfg.mask = thin_rows_evenly(start, free_row, t.b, target, c, rng);
    }
    return cfg;
}

[[nodiscard]] inline nlohmann::json domain_config_to_json(const DomainConfig& cfg) {
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.truth.items.size(); ++i)
        items.push_back({{"label", cfg.truth.items.labels[i]},
                         {"a", cfg.truth.items.discrimination(i)},
                         {"b", cfg.truth.items.difficulty[i]}});
    nlohmann::json mask = nlohmann::json::array();
    for (const auto& [j, i] : cfg.mask.pairs()) mask.push_back({j, i});
    nlohmann::json tracked = nlohmann::json::object();
    for (const auto& t : cfg.tracked) tracked[t.role] = cfg.truth.system_labels[t.index];
    return {{"name", cfg.name},
            {"systems", cfg.truth.system_labels},
            {"theta_true", cfg.truth.theta},
            {"items", std::move(items)},
            {"mask", std::move(mask)},
            {"trials", cfg.trials},
            {"tracked", std::move(tracked)}};
}

}  // namespace fairrank
