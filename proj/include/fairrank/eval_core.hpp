#pragma once

// Sparse evaluation matrices: storage, mask diagnostics, coverage and
// heterogeneity metrics, CSV ingestion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fairrank/item_parameters.hpp"

namespace fairrank {

/// Aggregated binary outcomes for one (system, item) pair.
struct Cell {
    int successes = 0;
    int trials = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

/// One observed entry of a response matrix.
struct CellEntry {
    std::size_t system = 0;
    std::size_t item = 0;
    Cell cell;

    friend bool operator==(const CellEntry&, const CellEntry&) = default;
};

/// Dense J x I observation mask. `true` means the pair was evaluated.
class ObservationMask {
public:
    ObservationMask() = default;
    ObservationMask(std::size_t n_systems, std::size_t n_items, bool observed = false)
        : n_systems_(n_systems), n_items_(n_items), bits_(n_systems * n_items, observed ? 1 : 0) {}

    [[nodiscard]] std::size_t n_systems() const noexcept { return n_systems_; }
    [[nodiscard]] std::size_t n_items() const noexcept { return n_items_; }

    [[nodiscard]] bool observed(std::size_t system, std::size_t item) const {
        return bits_.at(system * n_items_ + item) != 0;
    }
    void set(std::size_t system, std::size_t item, bool value) {
        bits_.at(system * n_items_ + item) = value ? 1 : 0;
    }

    [[nodiscard]] std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
    }
    [[nodiscard]] std::size_t items_observed_for(std::size_t system) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < n_items_; ++i) n += observed(system, i) ? 1 : 0;
        return n;
    }
    [[nodiscard]] std::size_t systems_observed_for(std::size_t item) const {
        std::size_t n = 0;
        for (std::size_t j = 0; j < n_systems_; ++j) n += observed(j, item) ? 1 : 0;
        return n;
    }
    /// Observed (system, item) pairs in row-major order.
    [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> pairs() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t j = 0; j < n_systems_; ++j)
            for (std::size_t i = 0; i < n_items_; ++i)
                if (observed(j, i)) out.emplace_back(j, i);
        return out;
    }

    friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

private:
    std::size_t n_systems_ = 0;
    std::size_t n_items_ = 0;
    std::vector<unsigned char> bits_;
};

/// The sparse J x I evaluation record. Immutable after construction.
///
/// Binary trials inside a cell are exchangeable under the 2PL model, so each
/// observed cell keeps only its (successes, trials) sufficient statistics.
/// A cell that is absent is unobserved.
class ResponseMatrix {
public:
    ResponseMatrix(std::size_t n_systems, std::size_t n_items, std::vector<CellEntry> entries,
                   std::vector<std::string> system_labels = {},
                   std::vector<std::string> item_labels = {})
        : n_systems_(n_systems),
          n_items_(n_items),
          system_labels_(std::move(system_labels)),
          item_labels_(std::move(item_labels)),
          index_(n_systems * n_items, kAbsent) {
        if (n_systems < 2 || n_items < 2)
            throw std::invalid_argument("response matrix needs at least 2 systems and 2 items");
        if (system_labels_.empty()) system_labels_ = default_labels("system_", n_systems);
        if (item_labels_.empty()) item_labels_ = default_labels("item_", n_items);
        if (system_labels_.size() != n_systems || item_labels_.size() != n_items)
            throw std::invalid_argument("label count does not match matrix dimensions");

        std::sort(entries.begin(), entries.end(), [](const CellEntry& l, const CellEntry& r) {
            return l.system != r.system ? l.system < r.system : l.item < r.item;
        });
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& e = entries[k];
            if (e.system >= n_systems || e.item >= n_items)
                throw std::out_of_range("cell index outside matrix dimensions");
            if (e.cell.trials < 1)
                throw std::invalid_argument("observed cell must have at least one trial");
            if (e.cell.successes < 0 || e.cell.successes > e.cell.trials)
                throw std::invalid_argument("successes must lie in [0, trials]");
            auto& slot = index_[e.system * n_items + e.item];
            if (slot != kAbsent) throw std::invalid_argument("duplicate cell in response matrix");
            slot = k;
        }
        entries_ = std::move(entries);
    }

    [[nodiscard]] std::size_t n_systems() const noexcept { return n_systems_; }
    [[nodiscard]] std::size_t n_items() const noexcept { return n_items_; }
    [[nodiscard]] std::size_t n_observed() const noexcept { return entries_.size(); }

    /// Observed cells sorted by (system, item).
    [[nodiscard]] const std::vector<CellEntry>& entries() const noexcept { return entries_; }

    [[nodiscard]] bool observed(std::size_t system, std::size_t item) const {
        return index_.at(system * n_items_ + item) != kAbsent;
    }
    [[nodiscard]] std::optional<Cell> at(std::size_t system, std::size_t item) const {
        const auto k = index_.at(system * n_items_ + item);
        if (k == kAbsent) return std::nullopt;
        return entries_[k].cell;
    }

    [[nodiscard]] const std::vector<std::string>& system_labels() const noexcept {
        return system_labels_;
    }
    [[nodiscard]] const std::vector<std::string>& item_labels() const noexcept {
        return item_labels_;
    }

    [[nodiscard]] ObservationMask mask() const {
        ObservationMask m(n_systems_, n_items_);
        for (const auto& e : entries_) m.set(e.system, e.item, true);
        return m;
    }

    friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
        return a.n_systems_ == b.n_systems_ && a.n_items_ == b.n_items_ &&
               a.entries_ == b.entries_ && a.system_labels_ == b.system_labels_ &&
               a.item_labels_ == b.item_labels_;
    }

private:
    static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

    static std::vector<std::string> default_labels(const char* prefix, std::size_t n) {
        std::vector<std::string> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k) out.push_back(prefix + std::to_string(k));
        return out;
    }

    std::size_t n_systems_;
    std::size_t n_items_;
    std::vector<CellEntry> entries_;
    std::vector<std::string> system_labels_;
    std::vector<std::string> item_labels_;
    std::vector<std::size_t> index_;
};

struct MaskDiagnostics {
    double coverage = 0.0;
    double sparsity = 0.0;
    std::size_t min_items_per_system = 0;
    std::size_t min_systems_per_item = 0;
    bool bipartite_connected = false;
};

/// Fraction of (system, item) pairs that were observed.
[[nodiscard]] inline double coverage(const ObservationMask& mask) {
    return static_cast<double>(mask.count()) /
           static_cast<double>(mask.n_systems() * mask.n_items());
}
[[nodiscard]] inline double coverage(const ResponseMatrix& matrix) {
    return static_cast<double>(matrix.n_observed()) /
           static_cast<double>(matrix.n_systems() * matrix.n_items());
}

/// Range of item difficulties, max b - min b.
[[nodiscard]] inline double difficulty_gap(const ItemParameterSet& items) {
    if (items.size() == 0) throw std::invalid_argument("difficulty_gap of an empty item set");
    const auto [lo, hi] = std::minmax_element(items.difficulty.begin(), items.difficulty.end());
    return *hi - *lo;
}

/// True when every system and item node is reachable from system 0 through
/// observed cells.
[[nodiscard]] inline bool bipartite_connected(const ObservationMask& mask) {
    const std::size_t J = mask.n_systems();
    const std::size_t I = mask.n_items();
    if (J + I == 0) return true;
    // Nodes 0..J-1 are systems, J..J+I-1 are items.
    std::vector<char> seen(J + I, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto node = stack.back();
        stack.pop_back();
        if (node < J) {
            for (std::size_t i = 0; i < I; ++i)
                if (mask.observed(node, i) && !seen[J + i]) {
                    seen[J + i] = 1;
                    ++reached;
                    stack.push_back(J + i);
                }
        } else {
            const auto i = node - J;
            for (std::size_t j = 0; j < J; ++j)
                if (mask.observed(j, i) && !seen[j]) {
                    seen[j] = 1;
                    ++reached;
                    stack.push_back(j);
                }
        }
    }
    return reached == J + I;
}

[[nodiscard]] inline MaskDiagnostics diagnose_mask(const ObservationMask& mask) {
    MaskDiagnostics d;
    d.coverage = coverage(mask);
    d.sparsity = 1.0 - d.coverage;
    d.min_items_per_system = mask.n_items();
    for (std::size_t j = 0; j < mask.n_systems(); ++j)
        d.min_items_per_system = std::min(d.min_items_per_system, mask.items_observed_for(j));
    d.min_systems_per_item = mask.n_systems();
    for (std::size_t i = 0; i < mask.n_items(); ++i)
        d.min_systems_per_item = std::min(d.min_systems_per_item, mask.systems_observed_for(i));
    d.bipartite_connected = bipartite_connected(mask);
    return d;
}
[[nodiscard]] inline MaskDiagnostics diagnose_mask(const ResponseMatrix& matrix) {
    return diagnose_mask(matrix.mask());
}

/// Coefficient of variation (population std / mean) of per-item pooled
/// success rates.
[[nodiscard]] inline double estimate_difficulty_heterogeneity(const ResponseMatrix& matrix) {
    const std::size_t I = matrix.n_items();
    std::vector<long long> successes(I, 0), trials(I, 0);
    for (const auto& e : matrix.entries()) {
        successes[e.item] += e.cell.successes;
        trials[e.item] += e.cell.trials;
    }
    std::vector<double> rates(I);
    for (std::size_t i = 0; i < I; ++i) {
        if (trials[i] == 0)
            throw std::invalid_argument("item '" + matrix.item_labels()[i] +
                                        "' has no observed cells");
        rates[i] = static_cast<double>(successes[i]) / static_cast<double>(trials[i]);
    }
    const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(I);
    if (mean <= 0.0)
        throw std::domain_error("mean item success rate is zero; heterogeneity undefined");
    double ss = 0.0;
    for (double r : rates) ss += (r - mean) * (r - mean);
    return std::sqrt(ss / static_cast<double>(I)) / mean;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

inline int parse_count(std::string_view field, std::size_t line_no, const char* what) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(std::string(field), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (field.empty() || used != field.size() || v < 0 || v > 2'000'000'000)
        throw std::runtime_error("line " + std::to_string(line_no) + ": invalid " + what + " '" +
                                 std::string(field) + "'");
    return static_cast<int>(v);
}

}  // namespace detail

/// Reads the long format `system,item,successes,trials`. Systems and items
/// are indexed in order of first appearance; pairs not listed are unobserved.
[[nodiscard]] inline ResponseMatrix load_matrix_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::map<std::string, std::size_t, std::less<>> system_index, item_index;
    std::vector<std::string> systems, items;
    std::vector<CellEntry> entries;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> first_line;

    auto intern = [](auto& index, auto& labels, std::string_view label) {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        const auto k = labels.size();
        labels.emplace_back(label);
        index.emplace(std::string(label), k);
        return k;
    };

    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty()) continue;
        const auto fields = detail::split_commas(view);
        if (!header_seen) {
            if (fields.size() != 4 || fields[0] != "system" || fields[1] != "item" ||
                fields[2] != "successes" || fields[3] != "trials")
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": expected header 'system,item,successes,trials'");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                                     std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw std::runtime_error("line " + std::to_string(line_no) + ": empty label");
        const int s = detail::parse_count(fields[2], line_no, "successes");
        const int t = detail::parse_count(fields[3], line_no, "trials");
        if (t < 1)
            throw std::runtime_error("line " + std::to_string(line_no) + ": trials must be >= 1");
        if (s > t)
            throw std::runtime_error("line " + std::to_string(line_no) + ": successes (" +
                                     std::to_string(s) + ") exceed trials (" + std::to_string(t) +
                                     ")");
        const auto j = intern(system_index, systems, fields[0]);
        const auto i = intern(item_index, items, fields[1]);
        const auto [it, inserted] = first_line.emplace(std::make_pair(j, i), line_no);
        if (!inserted)
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate pair (" +
                                     std::string(fields[0]) + "," + std::string(fields[1]) +
                                     ") first seen on line " + std::to_string(it->second));
        entries.push_back({j, i, {s, t}});
    }
    if (!header_seen) throw std::runtime_error("empty input: missing CSV header");
    const auto J = systems.size();
    const auto I = items.size();
    return ResponseMatrix(J, I, std::move(entries), std::move(systems), std::move(items));
}

/// Writes observed cells sorted by (system index, item index).
inline void save_matrix_csv(const ResponseMatrix& matrix, std::ostream& out) {
    auto check = [](const std::string& label) {
        if (label.find_first_of(",\n\r") != std::string::npos)
            throw std::invalid_argument("label '" + label + "' cannot be written as CSV");
    };
    for (const auto& l : matrix.system_labels()) check(l);
    for (const auto& l : matrix.item_labels()) check(l);
    out << "system,item,successes,trials\n";
    for (const auto& e : matrix.entries())
        out << matrix.system_labels()[e.system] << ',' << matrix.item_labels()[e.item] << ','
            << e.cell.successes << ',' << e.cell.trials << '\n';
}

}  // namespace fairrank
