#include "gncqr/synthetic.hpp"
#include "gncqr/tuning.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace gncqr;

namespace {

MixedFrequencyDataset synthetic_panel(int quarters, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.quarters = quarters;
    spec.seed = seed;
    const SyntheticData s = generate_synthetic(spec);
    return build_panel(s.target, {HighFrequencySeries::from_weeks(to_calendar_weeks(s.weekly), 12)}, Horizon::quarters(1), 1);
}

// One weekly block of uniform lags with tail-off weights. Either a pure
// location shift, or a spread that switches on once the stress index rises.
MixedFrequencyDataset lag_panel(int n, bool heteroskedastic, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    MixedFrequencyDataset d;
    d.ar_lags = 1;
    d.target.resize(n);
    d.low_freq.resize(n, 2);
    HighFrequencyBlock blk{"X", Frequency::weekly, 12, Matrix(n, 12)};
    for (int i = 0; i < n; ++i) {
        d.low_freq(i, 0) = 1.0;
        d.low_freq(i, 1) = nd(rng);
        double stress = 0.0;
        for (int k = 0; k < 12; ++k) {
            blk.values(i, k) = ud(rng);
            stress += (11 - k) * (11 - k) * blk.values(i, k) / 506.0;
        }
        const double loc = 1.0 + 0.5 * d.low_freq(i, 1) + 2.0 * stress;
        const double e = nd(rng);
        d.target[i] = heteroskedastic ? loc + 3.0 * (0.1 + 4.0 * std::max(0.0, stress - 0.3)) * e : loc + e;
        d.target_quarter.push_back(i);
        d.cutoff_week.push_back(12 * (i + 1));
        d.latest_input_week.push_back(12 * i);
    }
    d.blocks.push_back(blk);
    return d;
}

}  // namespace

TEST(HvBlock, FoldsPartitionTheSampleChronologically) {
    for (Index n : {10, 37, 100})
        for (int k : {2, 5, 10}) {
            const HvBlockPlan plan = make_plan(n, k, 2);
            ASSERT_EQ(plan.n_folds(), k);
            Index next = 0;
            Index smallest = n, largest = 0;
            for (const HvFold& f : plan.folds) {
                EXPECT_EQ(f.test_begin, next);
                next = f.test_end;
                smallest = std::min(smallest, f.test_end - f.test_begin);
                largest = std::max(largest, f.test_end - f.test_begin);
            }
            EXPECT_EQ(next, n);
            EXPECT_LE(largest - smallest, 1);
        }
}

TEST(HvBlock, GuardRemovesNeighboursOnBothSides) {
    const HvBlockPlan plan = make_plan(30, 3, 2);
    for (const HvFold& f : plan.folds) {
        const std::set<Index> train(f.train.begin(), f.train.end());
        for (Index i = 0; i < 30; ++i) {
            const bool near = i >= f.test_begin - 2 && i < f.test_end + 2;
            EXPECT_EQ(train.count(i) == 1, !near) << "row " << i;
        }
    }
    const HvBlockPlan none = make_plan(12, 4, 0);
    for (const HvFold& f : none.folds) EXPECT_EQ(static_cast<Index>(f.train.size()), 12 - (f.test_end - f.test_begin));
}

TEST(HvBlock, HundredRowsTenFolds) {
    const HvBlockPlan plan = make_plan(100, 10, Horizon::quarters(1));
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        EXPECT_EQ(plan.folds[f].test_end - plan.folds[f].test_begin, 10);
        const bool boundary = f == 0 || f + 1 == plan.folds.size();
        EXPECT_EQ(plan.folds[f].train.size(), boundary ? 89u : 88u);
    }
}

TEST(HvBlock, LeaveOneOutIsAValidPlan) {
    const HvBlockPlan plan = make_plan(12, 12, 1);
    for (const HvFold& f : plan.folds) {
        EXPECT_EQ(f.test_end - f.test_begin, 1);
        EXPECT_FALSE(f.train.empty());
    }
}

TEST(HvBlock, NoTrainingRowWithinTheGuard) {
    for (Index n : {60, 100, 200})
        for (int k : {5, 10})
            for (int w : {1, 12, 48}) {
                const HvBlockPlan plan = make_plan(n, k, Horizon::from_weeks(w));
                for (const HvFold& f : plan.folds)
                    for (Index i : f.train)
                        for (Index j = f.test_begin; j < f.test_end; ++j) ASSERT_GT(std::abs(i - j), plan.h_guard);
            }
}

TEST(HvBlock, WiderGuardNeverGrowsATrainingSet) {
    for (int g = 0; g < 6; ++g) {
        const HvBlockPlan a = make_plan(80, 8, g), b = make_plan(80, 8, g + 1);
        for (std::size_t f = 0; f < a.folds.size(); ++f) EXPECT_GE(a.folds[f].train.size(), b.folds[f].train.size());
    }
}

TEST(HvBlock, GuardFollowsTheHorizon) {
    EXPECT_EQ(hv_guard(Horizon::parse("0.42")), 1);
    EXPECT_EQ(hv_guard(Horizon::from_weeks(1)), 1);
    EXPECT_EQ(hv_guard(Horizon::from_weeks(11)), 1);
    EXPECT_EQ(hv_guard(Horizon::quarters(1)), 1);
    EXPECT_EQ(hv_guard(Horizon::quarters(4)), 4);
    EXPECT_EQ(make_plan(40, 5, Horizon::quarters(2)).h_guard, 2);
}

TEST(HvBlock, RejectsDegeneratePlans) {
    EXPECT_THROW(make_plan(10, 1, 1), InvalidInput);
    EXPECT_THROW(make_plan(10, 2, -1), InvalidInput);
    try {
        make_plan(4, 5, 1);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("needs at least 5 observations"), std::string::npos);
    }
    EXPECT_THROW(make_plan(3, 2, 2), DataError);  // a guard that swallows every training row
}

TEST(AlphaSelection, DefaultGrid) {
    const std::vector<double> g = default_alpha_grid();
    ASSERT_EQ(g.size(), 14u);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g[5], 0.5);
    EXPECT_EQ(g.back(), 2.0);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}

TEST(AlphaSelection, ScoresMatchADirectFoldRefit) {
    const MixedFrequencyDataset d = synthetic_panel(60, 3);
    const std::vector<std::optional<AlmonMap>> maps{make_almon_map(12, 3, true)};
    const QuantileGrid grid = QuantileGrid::standard();
    const HvBlockPlan plan = make_plan(d.rows(), 4, 1);
    const AlphaSelection sel = select_alpha(d, maps, grid, {1.0, 0.0, 0.5, 0.5}, plan);
    ASSERT_EQ(sel.grid, (std::vector<double>{0.0, 0.5, 1.0}));
    ASSERT_EQ(sel.per_fold.rows(), 4);

    const HvFold& f = plan.folds[2];
    const QuantilePanelFit fit = fit_joint(d.subset(f.train), maps, grid, Constraints::adaptive(0.5));
    std::vector<Index> idx;
    for (Index i = f.test_begin; i < f.test_end; ++i) idx.push_back(i);
    const MixedFrequencyDataset test = d.subset(idx);
    const Matrix pred = predict(fit, test);
    double total = 0.0;
    for (Index t = 0; t < test.rows(); ++t) {
        double row = 0.0;
        for (Index q = 0; q < grid.size(); ++q) row += tick_loss(test.target[t] - pred(t, q), grid[q]);
        total += row / static_cast<double>(grid.size());
    }
    EXPECT_NEAR(sel.per_fold(2, 1), total / static_cast<double>(test.rows()), 1e-12);

    for (std::size_t a = 0; a < sel.grid.size(); ++a) {
        EXPECT_NEAR(sel.cv_scores[a], sel.per_fold.col(static_cast<Index>(a)).mean(), 1e-15);
        EXPECT_GE(sel.cv_scores[a], *std::min_element(sel.cv_scores.begin(), sel.cv_scores.end()));
    }
    const auto best = std::min_element(sel.cv_scores.begin(), sel.cv_scores.end()) - sel.cv_scores.begin();
    EXPECT_EQ(sel.chosen_alpha, sel.grid[static_cast<std::size_t>(best)]);
}

TEST(AlphaSelection, TiesGoToTheSmallestAlpha) {
    // Exact linear data: every alpha fits perfectly, so every CV loss is zero.
    MixedFrequencyDataset d = synthetic_panel(50, 4);
    const std::vector<std::optional<AlmonMap>> maps{make_almon_map(12, 3, true)};
    for (Index i = 0; i < d.rows(); ++i) d.target[i] = 1.0 + 0.5 * d.low_freq(i, 1);
    const AlphaSelection sel = select_alpha(d, maps, QuantileGrid::standard(), {2.0, 0.7, 1.0}, make_plan(d.rows(), 5, 1));
    for (double s : sel.cv_scores) EXPECT_NEAR(s, 0.0, 1e-9);
    EXPECT_EQ(sel.chosen_alpha, 0.7);
}

TEST(AlphaSelection, SingleCandidateIsReturned) {
    const MixedFrequencyDataset d = lag_panel(40, false, 1);
    const AlphaSelection sel = select_alpha(d, {make_almon_map(12, 3, true)}, QuantileGrid::standard(), {0.4},
                                            make_plan(d.rows(), 4, 1));
    EXPECT_EQ(sel.chosen_alpha, 0.4);
    EXPECT_EQ(sel.per_fold.rows(), 4);
    EXPECT_GT(sel.per_fold.minCoeff(), 0.0);
}

TEST(AlphaSelection, LocationShiftFavoursTheTightEnd) {
    // Quantile slopes are all equal, so cross-quantile variation is noise the constraint suppresses.
    int tight = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const MixedFrequencyDataset d = lag_panel(100, false, seed);
        const AlphaSelection sel = select_alpha(d, {make_almon_map(12, 3, true)}, QuantileGrid::standard(), {0.0, 1.0, 2.0},
                                                make_plan(d.rows(), 5, 1));
        tight += sel.chosen_alpha == 2.0;
    }
    EXPECT_GE(tight, 4);
}

TEST(AlphaSelection, HeteroskedasticDataKeepsTheConstraintLoose) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const MixedFrequencyDataset d = lag_panel(100, true, seed);
        const AlphaSelection sel = select_alpha(d, {make_almon_map(12, 3, true)}, QuantileGrid::standard(), {0.0, 1.0, 2.0},
                                                make_plan(d.rows(), 5, 1));
        EXPECT_LT(sel.chosen_alpha, 2.0) << "seed " << seed;
    }
}

TEST(AlphaSelection, ThreadCountDoesNotChangeTheResult) {
    const MixedFrequencyDataset d = synthetic_panel(50, 5);
    const std::vector<std::optional<AlmonMap>> maps{make_almon_map(12, 3, true)};
    const HvBlockPlan plan = make_plan(d.rows(), 5, 1);
    const AlphaSelection a = select_alpha(d, maps, QuantileGrid::standard(), {0.0, 1.0, 2.0}, plan, Weighting::center, {}, 1);
    const AlphaSelection b = select_alpha(d, maps, QuantileGrid::standard(), {0.0, 1.0, 2.0}, plan, Weighting::center, {}, 3);
    EXPECT_TRUE((a.per_fold.array() == b.per_fold.array()).all());
    EXPECT_EQ(a.chosen_alpha, b.chosen_alpha);
}

TEST(AlphaSelection, AuditCsvListsEveryFoldAndAlpha) {
    const MixedFrequencyDataset d = synthetic_panel(40, 6);
    const AlphaSelection sel = select_alpha(d, {make_almon_map(12, 3, true)}, QuantileGrid::standard(), {0.0, 1.0},
                                            make_plan(d.rows(), 3, 1));
    std::ostringstream os;
    write_cv_audit_csv(os, sel);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "fold,alpha,loss");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 6);
}

TEST(AlphaSelection, RejectsBadInputs) {
    const MixedFrequencyDataset d = synthetic_panel(40, 7);
    const std::vector<std::optional<AlmonMap>> maps{make_almon_map(12, 3, true)};
    const HvBlockPlan plan = make_plan(d.rows(), 3, 1);
    EXPECT_THROW(select_alpha(d, maps, QuantileGrid::standard(), {}, plan), InvalidInput);
    EXPECT_THROW(select_alpha(d, maps, QuantileGrid::standard(), {-1.0}, plan), InvalidInput);
    EXPECT_THROW(select_alpha(d, maps, QuantileGrid::standard(), {1.0}, make_plan(d.rows() - 1, 3, 1)), InvalidInput);
}
