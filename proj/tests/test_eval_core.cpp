#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "fairrank/fairrank.hpp"
#include "oracles.hpp"

using namespace fairrank;

namespace {

ResponseMatrix full_matrix(std::size_t J, std::size_t I, int trials = 10) {
    std::vector<CellEntry> cells;
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < I; ++i)
            cells.push_back({j, i, {static_cast<int>((j + i) % static_cast<std::size_t>(trials + 1)), trials}});
    return ResponseMatrix(J, I, cells);
}

}  // namespace

TEST(Coverage, FullTwelveByEightIsOne) {
    EXPECT_DOUBLE_EQ(coverage(full_matrix(12, 8)), 1.0);
}

TEST(Coverage, TwoByTwoWithOneCell) {
    const ResponseMatrix m(2, 2, {{0, 1, {1, 2}}});
    EXPECT_DOUBLE_EQ(coverage(m), 0.25);
}

TEST(Coverage, ClinicalDomainMask) {
    const auto cfg = domain_config(Domain::clinical, 0);
    EXPECT_NEAR(coverage(cfg.mask), 0.65, 0.02);
}

TEST(Coverage, PlusSparsityIsOne) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        ObservationMask m(6, 5);
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t i = 0; i < 5; ++i) m.set(j, i, rng() % 2 == 0);
        const auto d = diagnose_mask(m);
        EXPECT_DOUBLE_EQ(coverage(m) + d.sparsity, 1.0);
    }
}

TEST(DifficultyGap, GlueItems) {
    const auto cfg = domain_config(Domain::nlp);
    EXPECT_NEAR(difficulty_gap(cfg.truth.items), 1.61, 1e-12);
}

TEST(DifficultyGap, CyberItems) {
    const auto cfg = domain_config(Domain::cyber);
    EXPECT_NEAR(difficulty_gap(cfg.truth.items), 3.50, 1e-12);
}

TEST(DifficultyGap, SingleItemIsZero) {
    const auto items = ItemParameterSet::from_discrimination({0.7}, {1.0});
    EXPECT_DOUBLE_EQ(difficulty_gap(items), 0.0);
}

TEST(DifficultyGap, EmptyThrows) {
    EXPECT_THROW((void)difficulty_gap(ItemParameterSet{}), std::invalid_argument);
}

TEST(DifficultyGap, TranslationInvariant) {
    const auto items = ItemParameterSet::from_discrimination({-0.3, 1.2, 0.4}, {1, 1, 1});
    auto shifted = items;
    for (double& b : shifted.difficulty) b += 3.7;
    EXPECT_NEAR(difficulty_gap(items), difficulty_gap(shifted), 1e-12);
}

TEST(Heterogeneity, EqualRatesGiveZero) {
    const ResponseMatrix m(2, 3, {{0, 0, {5, 10}}, {1, 0, {5, 10}}, {0, 1, {5, 10}},
                                  {1, 1, {5, 10}}, {0, 2, {5, 10}}, {1, 2, {5, 10}}});
    EXPECT_DOUBLE_EQ(estimate_difficulty_heterogeneity(m), 0.0);
}

TEST(Heterogeneity, HandComputedRates) {
    // Item rates 0.9, 0.5, 0.1: mean 0.5, population variance (0.16 + 0 + 0.16) / 3.
    const ResponseMatrix m(2, 3, {{0, 0, {9, 10}}, {1, 0, {9, 10}}, {0, 1, {5, 10}},
                                  {1, 1, {5, 10}}, {0, 2, {1, 10}}, {1, 2, {1, 10}}});
    EXPECT_NEAR(estimate_difficulty_heterogeneity(m), std::sqrt(0.32 / 3.0) / 0.5, 1e-12);
}

TEST(Heterogeneity, NlpMatchesDirectRecomputation) {
    const auto cfg = domain_config(Domain::nlp);
    const auto m = generate_responses(cfg.truth, cfg.mask, cfg.trials, 11);
    std::vector<double> rates;
    for (std::size_t i = 0; i < m.n_items(); ++i) {
        double s = 0, t = 0;
        for (std::size_t j = 0; j < m.n_systems(); ++j)
            if (auto c = m.at(j, i)) {
                s += c->successes;
                t += c->trials;
            }
        rates.push_back(s / t);
    }
    double mean = 0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    double ss = 0;
    for (double r : rates) ss += (r - mean) * (r - mean);
    EXPECT_NEAR(estimate_difficulty_heterogeneity(m),
                std::sqrt(ss / static_cast<double>(rates.size())) / mean, 1e-12);
}

TEST(Heterogeneity, ItemWithoutCellsThrows) {
    const ResponseMatrix m(2, 2, {{0, 0, {1, 2}}, {1, 0, {1, 2}}});
    EXPECT_THROW((void)estimate_difficulty_heterogeneity(m), std::invalid_argument);
}

TEST(Heterogeneity, ZeroMeanThrows) {
    const ResponseMatrix m(2, 2, {{0, 0, {0, 2}}, {1, 1, {0, 2}}});
    EXPECT_THROW((void)estimate_difficulty_heterogeneity(m), std::domain_error);
}

TEST(DiagnoseMask, FullMask) {
    const auto d = diagnose_mask(ObservationMask(5, 4, true));
    EXPECT_EQ(d.min_items_per_system, 4u);
    EXPECT_EQ(d.min_systems_per_item, 5u);
    EXPECT_TRUE(d.bipartite_connected);
}

TEST(DiagnoseMask, ClinicalMaskMeetsMinimums) {
    const auto d = diagnose_mask(domain_config(Domain::clinical, 0).mask);
    EXPECT_GE(d.min_items_per_system, 2u);
    EXPECT_GE(d.min_systems_per_item, 3u);
    EXPECT_TRUE(d.bipartite_connected);
}

TEST(DiagnoseMask, DisjointBlocksDisconnected) {
    ObservationMask m(4, 4);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 2; ++i) {
            m.set(j, i, true);
            m.set(j + 2, i + 2, true);
        }
    EXPECT_FALSE(diagnose_mask(m).bipartite_connected);
}

TEST(DiagnoseMask, ConnectivityAgreesWithBruteForce) {
    std::mt19937_64 rng(17);
    int disconnected = 0;
    for (int rep = 0; rep < 400; ++rep) {
        const std::size_t J = 2 + rng() % 11, I = 2 + rng() % 7;
        const double p = 0.1 + 0.3 * static_cast<double>(rng() % 100) / 100.0;
        std::bernoulli_distribution keep(p);
        ObservationMask m(J, I);
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t i = 0; i < I; ++i) m.set(j, i, keep(rng));
        const bool expected = oracle::brute_force_connected(m);
        disconnected += expected ? 0 : 1;
        ASSERT_EQ(bipartite_connected(m), expected) << "J=" << J << " I=" << I;
    }
    EXPECT_GT(disconnected, 20);
    EXPECT_LT(disconnected, 380);
}

TEST(ResponseMatrixType, RejectsInvalidCells) {
    EXPECT_THROW(ResponseMatrix(2, 2, {{0, 0, {3, 2}}}), std::invalid_argument);
    EXPECT_THROW(ResponseMatrix(2, 2, {{0, 0, {0, 0}}}), std::invalid_argument);
    EXPECT_THROW(ResponseMatrix(2, 2, {{0, 0, {1, 2}}, {0, 0, {1, 2}}}), std::invalid_argument);
    EXPECT_THROW(ResponseMatrix(2, 2, {{2, 0, {1, 2}}}), std::out_of_range);
    EXPECT_THROW(ResponseMatrix(1, 2, {}), std::invalid_argument);
}

TEST(Csv, ThreeRowsWithOneMissingPair) {
    std::istringstream in("system,item,successes,trials\nA,x,3,5\nA,y,1,5\nB,x,4,5\n");
    const auto m = load_matrix_csv(in);
    EXPECT_EQ(m.n_systems(), 2u);
    EXPECT_EQ(m.n_items(), 2u);
    EXPECT_DOUBLE_EQ(coverage(m), 0.75);
    EXPECT_FALSE(m.observed(1, 1));
    EXPECT_EQ(m.system_labels()[1], "B");
    EXPECT_EQ(m.item_labels()[1], "y");
}

TEST(Csv, SuccessesAboveTrialsRejectedWithLine) {
    std::istringstream in("system,item,successes,trials\nA,x,3,5\nA,y,7,5\n");
    try {
        (void)load_matrix_csv(in);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Csv, DuplicatePairRejected) {
    std::istringstream in("system,item,successes,trials\nA,x,3,5\nB,x,1,5\nA,x,2,5\n");
    try {
        (void)load_matrix_csv(in);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    }
}

TEST(Csv, MalformedRowsRejected) {
    for (const char* body : {"A,x,3\n", "A,x,three,5\n", "A,x,-1,5\n", "A,x,1,0\n", ",x,1,2\n",
                             "A,x,1.5,2\n"}) {
        std::istringstream in(std::string("system,item,successes,trials\n") + body);
        EXPECT_THROW((void)load_matrix_csv(in), std::runtime_error) << body;
    }
    std::istringstream no_header("A,x,1,2\n");
    EXPECT_THROW((void)load_matrix_csv(no_header), std::runtime_error);
    std::istringstream empty("");
    EXPECT_THROW((void)load_matrix_csv(empty), std::runtime_error);
}

// Loading indexes labels by first appearance, so equality is checked by label.
TEST(Csv, RoundTripPreservesEveryCell) {
    for (auto d : kAllDomains) {
        const auto cfg = domain_config(d, 5);
        const auto m = generate_responses(cfg.truth, cfg.mask, cfg.trials, 9);
        std::stringstream buf;
        save_matrix_csv(m, buf);
        const auto back = load_matrix_csv(buf);
        ASSERT_EQ(back.n_observed(), m.n_observed()) << cfg.name;
        ASSERT_EQ(back.n_systems(), m.n_systems());
        ASSERT_EQ(back.n_items(), m.n_items());
        auto index_of = [](const std::vector<std::string>& labels, const std::string& l) {
            return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), l) - labels.begin());
        };
        for (const auto& e : m.entries()) {
            const auto j = index_of(back.system_labels(), m.system_labels()[e.system]);
            const auto i = index_of(back.item_labels(), m.item_labels()[e.item]);
            const auto cell = back.at(j, i);
            ASSERT_TRUE(cell.has_value());
            EXPECT_EQ(*cell, e.cell);
        }
    }
}

TEST(Csv, RoundTripOfFullMatrixIsExact) {
    const auto m = full_matrix(4, 3);
    std::stringstream buf;
    save_matrix_csv(m, buf);
    EXPECT_EQ(load_matrix_csv(buf), m);
}

TEST(Csv, RejectsUnwritableLabels) {
    const ResponseMatrix m(2, 2, {{0, 0, {1, 2}}}, {"a,b", "c"}, {"x", "y"});
    std::ostringstream out;
    EXPECT_THROW(save_matrix_csv(m, out), std::invalid_argument);
}
