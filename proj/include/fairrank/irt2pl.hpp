#pragma once

// Two-parameter logistic IRT: response probability, regularized joint
// log-likelihood over observed cells, analytic gradient, MAP fitting with
// L-BFGS, and Fisher-information standard errors.
//
// Parameter vector layout used throughout: [theta_0..theta_{J-1},
// b_0..b_{I-1}, log a_0..log a_{I-1}].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairrank/eval_core.hpp"
#include "fairrank/item_parameters.hpp"
#include "fairrank/lbfgs.hpp"
#include "fairrank/ranking_stats.hpp"

namespace fairrank {

/// Gaussian prior standard deviations. An infinite value disables that term.
struct PriorConfig {
    double theta_sd = 1.0;
    /// N(0, 2) read as variance 2.
    double difficulty_sd = std::sqrt(2.0);
    double log_discrimination_sd = 0.5;

    static PriorConfig none() {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {inf, inf, inf};
    }

    void validate() const {
        if (!(theta_sd > 0.0) || !(difficulty_sd > 0.0) || !(log_discrimination_sd > 0.0))
            throw std::invalid_argument("prior standard deviations must be positive");
    }
};

struct AbilityVector {
    std::vector<double> theta;
    /// Empty until standard errors have been computed.
    std::vector<double> se;

    [[nodiscard]] bool has_se() const noexcept { return !se.empty(); }
};

struct FitSettings {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    std::size_t memory = 10;
    /// Enforce min 2 items per system, min 3 systems per item and a
    /// connected observation graph before fitting.
    bool check_design = true;
};

struct Fit2PL {
    AbilityVector abilities;
    ItemParameterSet items;
    /// Regularized log-likelihood at the solution (the maximized quantity).
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
};

inline constexpr double kProbabilityClamp = 1e-12;

/// Overflow-safe logistic function.
[[nodiscard]] inline double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Probability that a system with ability `theta` succeeds on an item with
/// discrimination `a` and difficulty `b`.
[[nodiscard]] inline double predict_prob(double theta, double a, double b) {
    if (!(a > 0.0)) throw std::invalid_argument("discrimination must be positive");
    return logistic(a * (theta - b));
}

namespace detail {

inline void check_dimensions(const ResponseMatrix& m, std::size_t n_theta,
                             const ItemParameterSet& items) {
    if (n_theta != m.n_systems() || items.difficulty.size() != m.n_items() ||
        items.log_discrimination.size() != m.n_items())
        throw std::invalid_argument("parameter dimensions do not match the response matrix");
}

inline double prior_term(double value, double sd) {
    return std::isinf(sd) ? 0.0 : -0.5 * value * value / (sd * sd);
}
inline double prior_slope(double value, double sd) {
    return std::isinf(sd) ? 0.0 : -value / (sd * sd);
}

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0, carry = 0.0;
    void add(double v) {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    [[nodiscard]] double value() const { return sum + carry; }
};

/// Regularized log-likelihood at packed parameters `x`; writes its gradient
/// into `grad` when non-null. Summation order is fixed (cells sorted by
/// system, then item).
inline double evaluate_packed(const ResponseMatrix& m, std::span<const double> x,
                              const PriorConfig& priors, double* grad, bool include_prior = true) {
    const std::size_t J = m.n_systems(), I = m.n_items();
    const double* theta = x.data();
    const double* b = x.data() + J;
    const double* log_a = x.data() + J + I;

    std::vector<double> a(I);
    for (std::size_t i = 0; i < I; ++i) a[i] = std::exp(log_a[i]);
    if (grad) std::fill(grad, grad + J + 2 * I, 0.0);

    CompensatedSum ll;
    for (const auto& e : m.entries()) {
        const std::size_t j = e.system, i = e.item;
        const double diff = theta[j] - b[i];
        const double z = a[i] * diff;
        const double p = logistic(z);
        const double lp = std::log(std::max(p, kProbabilityClamp));
        const double lq = std::log(std::max(logistic(-z), kProbabilityClamp));
        const double s = e.cell.successes, t = e.cell.trials;
        ll.add(s * lp + (t - s) * lq);
        if (grad) {
            const double r = s - t * p;
            grad[j] += a[i] * r;
            grad[J + i] -= a[i] * r;
            grad[J + I + i] += z * r;
        }
    }
    if (include_prior) {
        for (std::size_t j = 0; j < J; ++j) {
            ll.add(prior_term(theta[j], priors.theta_sd));
            if (grad) grad[j] += prior_slope(theta[j], priors.theta_sd);
        }
        for (std::size_t i = 0; i < I; ++i) {
            ll.add(prior_term(b[i], priors.difficulty_sd));
            ll.add(prior_term(log_a[i], priors.log_discrimination_sd));
            if (grad) {
                grad[J + i] += prior_slope(b[i], priors.difficulty_sd);
                grad[J + I + i] += prior_slope(log_a[i], priors.log_discrimination_sd);
            }
        }
    }
    return ll.value();
}

inline std::vector<double> pack(std::span<const double> theta, const ItemParameterSet& items) {
    std::vector<double> x;
    x.reserve(theta.size() + 2 * items.size());
    x.insert(x.end(), theta.begin(), theta.end());
    x.insert(x.end(), items.difficulty.begin(), items.difficulty.end());
    x.insert(x.end(), items.log_discrimination.begin(), items.log_discrimination.end());
    return x;
}

inline double clamped_logit(double rate) {
    const double r = std::clamp(rate, 0.02, 0.98);
    return std::log(r / (1.0 - r));
}

/// Logit moment-matching warm start.
inline std::vector<double> initial_parameters(const ResponseMatrix& m) {
    const std::size_t J = m.n_systems(), I = m.n_items();
    std::vector<double> sys_s(J, 0.0), sys_t(J, 0.0), item_s(I, 0.0), item_t(I, 0.0);
    for (const auto& e : m.entries()) {
        sys_s[e.system] += e.cell.successes;
        sys_t[e.system] += e.cell.trials;
        item_s[e.item] += e.cell.successes;
        item_t[e.item] += e.cell.trials;
    }
    std::vector<double> x(J + 2 * I, 0.0);
    double mean = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        x[j] = clamped_logit(sys_t[j] > 0 ? sys_s[j] / sys_t[j] : 0.5);
        mean += x[j];
    }
    mean /= static_cast<double>(J);
    double var = 0.0;
    for (std::size_t j = 0; j < J; ++j) var += (x[j] - mean) * (x[j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(J));
    for (std::size_t j = 0; j < J; ++j) x[j] = sd > 0.0 ? (x[j] - mean) / sd : 0.0;
    for (std::size_t i = 0; i < I; ++i)
        x[J + i] = -clamped_logit(item_t[i] > 0 ? item_s[i] / item_t[i] : 0.5);
    return x;
}

inline void check_design(const ResponseMatrix& m) {
    const auto d = diagnose_mask(m);
    if (d.min_items_per_system < 2)
        throw std::invalid_argument("fit precondition failed: a system is observed on fewer than 2 items");
    if (d.min_systems_per_item < 3)
        throw std::invalid_argument("fit precondition failed: an item is observed for fewer than 3 systems");
    if (!d.bipartite_connected)
        throw std::invalid_argument("fit precondition failed: observation graph is not connected");
}

}  // namespace detail

/// Regularized log-likelihood: data term over observed cells plus Gaussian
/// log-prior terms (additive constants dropped).
[[nodiscard]] inline double log_likelihood(const ResponseMatrix& matrix, std::span<const double> theta,
                                           const ItemParameterSet& items,
                                           const PriorConfig& priors = {}) {
    detail::check_dimensions(matrix, theta.size(), items);
    const auto x = detail::pack(theta, items);
    return detail::evaluate_packed(matrix, x, priors, nullptr);
}

/// Gradient of `log_likelihood` with respect to (theta, b, log a).
[[nodiscard]] inline std::vector<double> gradient(const ResponseMatrix& matrix,
                                                  std::span<const double> theta,
                                                  const ItemParameterSet& items,
                                                  const PriorConfig& priors = {}) {
    detail::check_dimensions(matrix, theta.size(), items);
    const auto x = detail::pack(theta, items);
    std::vector<double> g(x.size());
    detail::evaluate_packed(matrix, x, priors, g.data());
    return g;
}

/// MAP estimate of all 2PL parameters by L-BFGS on the negated objective.
[[nodiscard]] inline Fit2PL fit(const ResponseMatrix& matrix, const PriorConfig& priors = {},
                                const FitSettings& settings = {}) {
    priors.validate();
    if (settings.check_design) detail::check_design(matrix);
    const std::size_t J = matrix.n_systems(), I = matrix.n_items();

    auto negated = [&](const std::vector<double>& x, std::vector<double>& g) {
        const double v = detail::evaluate_packed(matrix, x, priors, g.data());
        for (double& gk : g) gk = -gk;
        return -v;
    };

    optim::LbfgsSettings ls;
    ls.memory = settings.memory;
    ls.gradient_tolerance = settings.gradient_tolerance;
    ls.max_iterations = settings.max_iterations;

    auto x = detail::initial_parameters(matrix);
    int iterations = 0;
    optim::LbfgsResult res;
    // A stalled line search at the precision floor is retried from the
    // current point with a fresh curvature model.
    for (int attempt = 0; attempt < 3; ++attempt) {
        ls.max_iterations = settings.max_iterations - iterations;
        res = optim::minimize_lbfgs(negated, std::move(x), ls);
        iterations += res.iterations;
        x = res.x;
        if (!std::isfinite(res.value))
            throw std::runtime_error("non-finite objective during 2PL optimization");
        if (res.status != optim::LbfgsStatus::line_search_failed || res.iterations == 0) break;
    }

    Fit2PL out;
    out.abilities.theta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(J));
    out.items.difficulty.assign(x.begin() + static_cast<std::ptrdiff_t>(J),
                                x.begin() + static_cast<std::ptrdiff_t>(J + I));
    out.items.log_discrimination.assign(x.begin() + static_cast<std::ptrdiff_t>(J + I), x.end());
    out.items.labels = matrix.item_labels();
    out.objective = -res.value;
    out.iterations = iterations;
    out.gradient_norm = res.gradient_norm;
    out.converged = res.gradient_norm <= settings.gradient_tolerance;
    return out;
}

/// Hessian of the negated objective by central differences of the analytic
/// gradient.
[[nodiscard]] inline Eigen::MatrixXd numerical_hessian(const ResponseMatrix& matrix,
                                                       std::span<const double> x,
                                                       const PriorConfig& priors,
                                                       double step = 1e-5) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd H(n, n);
    std::vector<double> xp(x.begin(), x.end()), gp(x.size()), gm(x.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        const double h = step * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        detail::evaluate_packed(matrix, xp, priors, gp.data());
        xp[k] = x[k] - h;
        detail::evaluate_packed(matrix, xp, priors, gm.data());
        xp[k] = x[k];
        for (Eigen::Index r = 0; r < n; ++r) H(r, k) = -(gp[r] - gm[r]) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

/// Ability standard errors from the inverse observed Fisher information.
[[nodiscard]] inline AbilityVector standard_errors(const ResponseMatrix& matrix, const Fit2PL& result,
                                                   const PriorConfig& priors = {}) {
    if (!result.converged) throw std::invalid_argument("standard errors need a converged fit");
    detail::check_dimensions(matrix, result.abilities.theta.size(), result.items);
    const auto x = detail::pack(result.abilities.theta, result.items);
    const Eigen::MatrixXd H = numerical_hessian(matrix, x, priors);
    const Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        throw std::domain_error("observed information is singular; the fit is not identified");
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
    AbilityVector out;
    out.theta = result.abilities.theta;
    out.se.resize(out.theta.size());
    for (std::size_t j = 0; j < out.theta.size(); ++j) {
        const double v = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        if (!(v > 0.0)) throw std::domain_error("non-positive ability variance");
        out.se[j] = std::sqrt(v);
    }
    return out;
}

/// Systems ordered by descending ability; exact ties share average ranks.
[[nodiscard]] inline Ranking rank_by_ability(const Fit2PL& result) {
    return rank_scores(result.abilities.theta);
}

/// JSON document with `systems`, `items`, `objective`, `converged`,
/// `iterations` (plus `gradient_norm`).
[[nodiscard]] inline nlohmann::json fit_to_json(const Fit2PL& result,
                                                const std::vector<std::string>& system_labels) {
    nlohmann::json systems = nlohmann::json::array();
    for (std::size_t j = 0; j < result.abilities.theta.size(); ++j) {
        nlohmann::json s{{"label", j < system_labels.size() ? system_labels[j] : std::to_string(j)},
                         {"theta", result.abilities.theta[j]}};
        s["se"] = result.abilities.has_se() ? nlohmann::json(result.abilities.se[j]) : nlohmann::json();
        systems.push_back(std::move(s));
    }
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < result.items.size(); ++i)
        items.push_back({{"label", i < result.items.labels.size() ? result.items.labels[i]
                                                                   : std::to_string(i)},
                         {"a", result.items.discrimination(i)},
                         {"b", result.items.difficulty[i]}});
    return {{"systems", std::move(systems)},
            {"items", std::move(items)},
            {"objective", result.objective},
            {"converged", result.converged},
            {"iterations", result.iterations},
            {"gradient_norm", result.gradient_norm}};
}

}  // namespace fairrank
