#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairrank {

/// Per-item 2PL parameters. Discrimination is stored as log a so that a > 0
/// holds for every representable value.
struct ItemParameterSet {
    std::vector<double> difficulty;
    std::vector<double> log_discrimination;
    std::vector<std::string> labels;

    [[nodiscard]] std::size_t size() const noexcept { return difficulty.size(); }
    [[nodiscard]] double discrimination(std::size_t i) const {
        return std::exp(log_discrimination.at(i));
    }

    static ItemParameterSet from_discrimination(std::vector<double> b, const std::vector<double>& a,
                                                std::vector<std::string> labels = {}) {
        if (b.size() != a.size()) throw std::invalid_argument("difficulty/discrimination size mismatch");
        if (!labels.empty() && labels.size() != b.size())
            throw std::invalid_argument("item label count mismatch");
        ItemParameterSet out;
        out.log_discrimination.reserve(a.size());
        for (double ai : a) {
            if (!(ai > 0.0)) throw std::invalid_argument("discrimination must be positive");
            out.log_discrimination.push_back(std::log(ai));
        }
        out.difficulty = std::move(b);
        out.labels = std::move(labels);
        return out;
    }
};

}  // namespace fairrank
