#pragma once

// Limited-memory BFGS for smooth unconstrained minimization.
//
// The line search brackets and zooms on the strong Wolfe conditions. Near a
// minimizer of an objective with large magnitude the function values stop
// resolving the decrease, so a step is also accepted under the approximate
// Wolfe conditions (derivative-only test with a small tolerance on f).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace fairrank::optim {

struct LbfgsSettings {
    std::size_t memory = 10;
    int max_iterations = 500;
    /// Convergence threshold on max_k |g_k|.
    double gradient_tolerance = 1e-6;
    double armijo = 1e-4;
    double curvature = 0.9;
    int max_line_search = 60;
};

enum class LbfgsStatus { converged, max_iterations, line_search_failed };

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    double gradient_norm = 0.0;  // infinity norm
    int iterations = 0;
    LbfgsStatus status = LbfgsStatus::max_iterations;

    [[nodiscard]] bool converged() const noexcept { return status == LbfgsStatus::converged; }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double inf_norm(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

struct Probe {
    double alpha = 0.0;
    double f = 0.0;
    double slope = 0.0;
    std::vector<double> x;
    std::vector<double> g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside
// the middle 80% of the interval.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    const double lo = std::min(a, b), hi = std::max(a, b), w = hi - lo;
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    double t = 0.5 * (a + b);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double denom = db - da + 2.0 * d2;
        if (denom != 0.0) {
            const double c = b - (b - a) * (db + d2 - d1) / denom;
            if (std::isfinite(c)) t = c;
        }
    }
    return std::clamp(t, lo + 0.1 * w, hi - 0.1 * w);
}

}  // namespace detail

/// Minimizes `objective`, which must have the signature
/// `double(const std::vector<double>& x, std::vector<double>& grad)`.
template <class Objective>
LbfgsResult minimize_lbfgs(Objective&& objective, std::vector<double> x,
                           const LbfgsSettings& settings = {}) {
    using detail::dot;
    const std::size_t n = x.size();
    std::vector<double> g(n);
    double f = objective(x, g);

    LbfgsResult result;
    if (!std::isfinite(f)) {
        result.x = std::move(x);
        result.value = f;
        result.gradient_norm = std::numeric_limits<double>::infinity();
        result.status = LbfgsStatus::line_search_failed;
        return result;
    }

    struct Pair {
        std::vector<double> s, y;
        double rho;
    };
    std::deque<Pair> history;
    std::vector<double> d(n), alpha_k(settings.memory);

    auto evaluate = [&](const std::vector<double>& base, const std::vector<double>& dir,
                        double alpha) {
        detail::Probe p;
        p.alpha = alpha;
        p.x.resize(n);
        p.g.resize(n);
        for (std::size_t k = 0; k < n; ++k) p.x[k] = base[k] + alpha * dir[k];
        p.f = objective(p.x, p.g);
        p.slope = dot(p.g, dir);
        return p;
    };

    int iter = 0;
    result.status = LbfgsStatus::max_iterations;
    while (true) {
        if (detail::inf_norm(g) <= settings.gradient_tolerance) {
            result.status = LbfgsStatus::converged;
            break;
        }
        if (iter >= settings.max_iterations) break;

        // Two-loop recursion: d = -H g.
        d = g;
        for (std::size_t m = history.size(); m-- > 0;) {
            alpha_k[m] = history[m].rho * dot(history[m].s, d);
            for (std::size_t k = 0; k < n; ++k) d[k] -= alpha_k[m] * history[m].y[k];
        }
        if (!history.empty()) {
            const auto& last = history.back();
            const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
            for (double& v : d) v *= gamma;
        }
        for (std::size_t m = 0; m < history.size(); ++m) {
            const double beta = history[m].rho * dot(history[m].y, d);
            for (std::size_t k = 0; k < n; ++k) d[k] += (alpha_k[m] - beta) * history[m].s[k];
        }
        for (double& v : d) v = -v;

        double slope0 = dot(g, d);
        if (!(slope0 < 0.0)) {
            history.clear();
            for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
            slope0 = -dot(g, g);
        }
        const double step0 =
            history.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(g, g))) : 1.0;

        const double c1 = settings.armijo, c2 = settings.curvature;
        const double f_tol = 1e-11 * (1.0 + std::abs(f));
        auto sufficient = [&](const detail::Probe& p) {
            return p.f <= f + c1 * p.alpha * slope0;
        };
        auto acceptable = [&](const detail::Probe& p) {
            if (sufficient(p) && std::abs(p.slope) <= -c2 * slope0) return true;
            return p.f <= f + f_tol && p.slope <= -0.8 * slope0 && p.slope >= c2 * slope0;
        };

        // Bracketing phase.
        detail::Probe prev;
        prev.alpha = 0.0;
        prev.f = f;
        prev.slope = slope0;
        std::optional<detail::Probe> accepted;
        std::optional<detail::Probe> lo, hi;
        double alpha = step0;
        int evals = 0;
        while (evals < settings.max_line_search) {
            auto cur = evaluate(x, d, alpha);
            ++evals;
            if (!std::isfinite(cur.f) || !std::isfinite(cur.slope)) {
                alpha = prev.alpha + 0.1 * (alpha - prev.alpha);
                continue;
            }
            if (acceptable(cur)) {
                accepted = std::move(cur);
                break;
            }
            if (!sufficient(cur) || (prev.alpha > 0.0 && cur.f >= prev.f)) {
                lo = prev;
                hi = std::move(cur);
                break;
            }
            if (cur.slope >= 0.0) {
                lo = std::move(cur);
                hi = prev;
                break;
            }
            prev = std::move(cur);
            alpha *= 2.0;
        }

        // Zoom phase; lo always satisfies sufficient decrease.
        if (!accepted && lo && hi) {
            while (evals < settings.max_line_search) {
                if (std::abs(hi->alpha - lo->alpha) <= 1e-16 * std::max(1.0, lo->alpha)) break;
                const double a = detail::cubic_step(lo->alpha, lo->f, lo->slope, hi->alpha, hi->f,
                                                    hi->slope);
                auto cur = evaluate(x, d, a);
                ++evals;
                if (!std::isfinite(cur.f) || !std::isfinite(cur.slope)) {
                    hi = std::move(cur);
                    hi->f = std::numeric_limits<double>::infinity();
                    hi->slope = std::numeric_limits<double>::infinity();
                    continue;
                }
                if (acceptable(cur)) {
                    accepted = std::move(cur);
                    break;
                }
                if (!sufficient(cur) || cur.f >= lo->f) {
                    hi = std::move(cur);
                } else {
                    if (cur.slope * (hi->alpha - lo->alpha) >= 0.0) hi = lo;
                    lo = std::move(cur);
                }
            }
            if (!accepted && lo->alpha > 0.0 && lo->f < f) accepted = lo;
        }
        if (!accepted && prev.alpha > 0.0 && prev.f < f) accepted = prev;

        if (!accepted) {
            if (!history.empty()) {
                history.clear();
                continue;
            }
            result.status = LbfgsStatus::line_search_failed;
            break;
        }

        Pair p;
        p.s.resize(n);
        p.y.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            p.s[k] = accepted->x[k] - x[k];
            p.y[k] = accepted->g[k] - g[k];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (history.size() > settings.memory) history.pop_front();
        }
        x = std::move(accepted->x);
        g = std::move(accepted->g);
        f = accepted->f;
        ++iter;
    }

    result.x = std::move(x);
    result.value = f;
    result.gradient_norm = detail::inf_norm(g);
    result.iterations = iter;
    return result;
}

}  // namespace fairrank::optim
