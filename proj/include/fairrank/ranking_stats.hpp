#pragma once

// Simple-average baseline, rank correlation, rank displacement, and the two
// regressions used to summarize the failure surface.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairrank/eval_core.hpp"

namespace fairrank {

/// Ranks of J systems (1 = best) together with the score they were derived
/// from. Exact ties share the average of the ranks they span.
struct Ranking {
    std::vector<double> ranks;
    std::vector<double> scores;

    [[nodiscard]] std::size_t size() const noexcept { return ranks.size(); }
};

/// Average ranks with rank 1 assigned to the largest score.
[[nodiscard]] inline std::vector<double> average_ranks_descending(std::span<const double> scores) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<double> ranks(n);
    std::size_t k = 0;
    while (k < n) {
        std::size_t end = k + 1;
        while (end < n && scores[order[end]] == scores[order[k]]) ++end;
        // Positions k..end-1 hold ranks k+1..end.
        const double avg = 0.5 * static_cast<double>(k + 1 + end);
        for (std::size_t m = k; m < end; ++m) ranks[order[m]] = avg;
        k = end;
    }
    return ranks;
}

[[nodiscard]] inline Ranking rank_scores(std::vector<double> scores) {
    Ranking r;
    r.ranks = average_ranks_descending(scores);
    r.scores = std::move(scores);
    return r;
}

/// Unweighted mean of each system's per-item success rates over its observed
/// items, and the ranking it induces.
[[nodiscard]] inline Ranking simple_average(const ResponseMatrix& matrix) {
    const std::size_t J = matrix.n_systems();
    std::vector<double> sum(J, 0.0);
    std::vector<std::size_t> count(J, 0);
    for (const auto& e : matrix.entries()) {
        sum[e.system] += static_cast<double>(e.cell.successes) / static_cast<double>(e.cell.trials);
        ++count[e.system];
    }
    std::vector<double> scores(J);
    for (std::size_t j = 0; j < J; ++j) {
        if (count[j] == 0)
            throw std::invalid_argument("system '" + matrix.system_labels()[j] +
                                        "' has no observed cells");
        scores[j] = sum[j] / static_cast<double>(count[j]);
    }
    return rank_scores(std::move(scores));
}

/// Pearson correlation of two rank vectors.
[[nodiscard]] inline double spearman_rho(std::span<const double> ranks_a,
                                         std::span<const double> ranks_b) {
    const std::size_t n = ranks_a.size();
    if (n != ranks_b.size()) throw std::invalid_argument("spearman_rho: length mismatch");
    if (n < 2) throw std::invalid_argument("spearman_rho: need at least 2 systems");
    const double ma = std::accumulate(ranks_a.begin(), ranks_a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(ranks_b.begin(), ranks_b.end(), 0.0) / static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double da = ranks_a[k] - ma, db = ranks_b[k] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::domain_error("spearman_rho undefined for a constant ranking");
    return sab / std::sqrt(saa * sbb);
}

[[nodiscard]] inline double spearman_rho(const Ranking& a, const Ranking& b) {
    return spearman_rho(a.ranks, b.ranks);
}

/// Estimated rank minus true rank; positive means the system was demoted.
[[nodiscard]] inline double rank_displacement(const Ranking& estimated, const Ranking& truth,
                                              std::size_t system) {
    if (system >= estimated.size() || system >= truth.size())
        throw std::out_of_range("rank_displacement: unknown system index");
    return estimated.ranks[system] - truth.ranks[system];
}

/// One grid cell of a failure surface.
struct SurfacePoint {
    double sparsity = 0.0;
    double gap = 0.0;
    double error = 0.0;
};

struct InteractionFit {
    std::array<double, 4> gamma{};
    std::array<double, 4> t_values{};
    double r_squared = 0.0;
    double mean_sparsity = 0.0;
    double mean_gap = 0.0;
    std::size_t n = 0;
};

/// OLS of error on centered S, D and their product:
///   error = g0 + g1 Sc + g2 Dc + g3 Sc Dc.
/// t-values use homoskedastic standard errors with sigma^2 = RSS / (n - 4).
[[nodiscard]] inline InteractionFit ols_interaction(std::span<const SurfacePoint> points) {
    const std::size_t n = points.size();
    std::set<std::pair<double, double>> distinct;
    for (const auto& p : points) distinct.emplace(p.sparsity, p.gap);
    if (distinct.size() < 5)
        throw std::invalid_argument("ols_interaction needs at least 5 distinct (S, D) points");

    InteractionFit fit;
    fit.n = n;
    for (const auto& p : points) {
        fit.mean_sparsity += p.sparsity;
        fit.mean_gap += p.gap;
    }
    fit.mean_sparsity /= static_cast<double>(n);
    fit.mean_gap /= static_cast<double>(n);

    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd y(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double sc = points[k].sparsity - fit.mean_sparsity;
        const double dc = points[k].gap - fit.mean_gap;
        X.row(static_cast<Eigen::Index>(k)) << 1.0, sc, dc, sc * dc;
        y(static_cast<Eigen::Index>(k)) = points[k].error;
    }
    const Eigen::Matrix4d xtx = X.transpose() * X;
    const Eigen::FullPivLU<Eigen::Matrix4d> lu(xtx);
    if (!lu.isInvertible() || lu.rcond() < 1e-12)
        throw std::domain_error("ols_interaction: singular design");
    const Eigen::Vector4d beta = lu.solve(X.transpose() * y);
    const Eigen::VectorXd resid = y - X * beta;
    const double rss = resid.squaredNorm();
    const double tss = (y.array() - y.mean()).square().sum();
    const Eigen::Matrix4d cov = lu.inverse();
    const double sigma2 = n > 4 ? rss / static_cast<double>(n - 4) : 0.0;
    for (int c = 0; c < 4; ++c) {
        fit.gamma[c] = beta(c);
        const double se = std::sqrt(sigma2 * cov(c, c));
        fit.t_values[c] = se > 0.0 ? beta(c) / se : std::copysign(std::numeric_limits<double>::infinity(), beta(c));
    }
    fit.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
    return fit;
}

struct PowerLawFit {
    double alpha = 0.0;
    double beta = 0.0;
    double r_squared = 0.0;
    std::size_t n_fitted = 0;
    std::size_t n_scored = 0;
};

/// Cells whose error is at or below this floor cannot enter the log fit.
inline constexpr double kPowerLawErrorFloor = 1e-4;

/// Fits error = alpha (S D)^beta by least squares in log space over cells
/// with S D > 0 and error above the floor. R^2 is computed on the raw error
/// scale over every cell with S D > 0.
[[nodiscard]] inline PowerLawFit power_law_fit(std::span<const SurfacePoint> points,
                                               double error_floor = kPowerLawErrorFloor) {
    std::vector<double> lx, ly;
    for (const auto& p : points) {
        const double sd = p.sparsity * p.gap;
        if (sd > 0.0 && p.error > error_floor) {
            lx.push_back(std::log(sd));
            ly.push_back(std::log(p.error));
        }
    }
    if (lx.size() < 3) throw std::invalid_argument("power_law_fit needs at least 3 eligible cells");
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    if (sxx == 0.0) throw std::domain_error("power_law_fit: all S*D values identical");

    PowerLawFit fit;
    fit.beta = sxy / sxx;
    fit.alpha = std::exp(my - fit.beta * mx);
    fit.n_fitted = lx.size();

    std::vector<double> err, pred;
    for (const auto& p : points) {
        const double sd = p.sparsity * p.gap;
        if (sd <= 0.0) continue;
        err.push_back(p.error);
        pred.push_back(fit.alpha * std::pow(sd, fit.beta));
    }
    fit.n_scored = err.size();
    const double me = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
    double rss = 0.0, tss = 0.0;
    for (std::size_t k = 0; k < err.size(); ++k) {
        rss += (err[k] - pred[k]) * (err[k] - pred[k]);
        tss += (err[k] - me) * (err[k] - me);
    }
    // Raw-scale R^2 of a log-space fit can be negative; clamp to [0, 1].
    fit.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
    return fit;
}

}  // namespace fairrank
