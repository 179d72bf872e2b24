#pragma once

// hv-block cross-validation for the adaptive constraint tightness alpha.

#include "gncqr/common.hpp"
#include "gncqr/dataset.hpp"
#include "gncqr/evaluation.hpp"
#include "gncqr/parallel.hpp"
#include "gncqr/solver.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace gncqr {

struct HvFold {
    Index test_begin = 0;  // contiguous test block [test_begin, test_end)
    Index test_end = 0;
    std::vector<Index> train;
};

struct HvBlockPlan {
    std::vector<HvFold> folds;
    int h_guard = 1;
    Index n_obs = 0;

    Index n_folds() const { return static_cast<Index>(folds.size()); }
};

/// Guard width in low-frequency periods: ceil(h), and 1 for nowcasts.
inline int hv_guard(Horizon h) { return h.is_nowcast() ? 1 : h.ceil_quarters(); }

/// Chronological contiguous test blocks; rows within `guard` of a block are
/// removed from that fold's training set on both sides.
inline HvBlockPlan make_plan(Index n_obs, int n_folds, int guard) {
    if (n_folds < 2) throw InvalidInput("hv-block CV needs at least 2 folds");
    if (guard < 0) throw InvalidInput("guard must be non-negative");
    if (n_obs < n_folds)
        throw DataError("hv-block CV with " + std::to_string(n_folds) + " folds needs at least " +
                        std::to_string(n_folds) + " observations, got " + std::to_string(n_obs));
    HvBlockPlan plan;
    plan.h_guard = guard;
    plan.n_obs = n_obs;
    const Index base = n_obs / n_folds, extra = n_obs % n_folds;
    Index begin = 0;
    for (Index f = 0; f < n_folds; ++f) {
        HvFold fold;
        fold.test_begin = begin;
        fold.test_end = begin + base + (f < extra ? 1 : 0);
        begin = fold.test_end;
        for (Index i = 0; i < n_obs; ++i)
            if (i < fold.test_begin - guard || i >= fold.test_end + guard) fold.train.push_back(i);
        if (fold.train.empty())
            throw DataError("hv-block fold " + std::to_string(f) + " has an empty training set; need more than " +
                            std::to_string(n_obs) + " observations");
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

inline HvBlockPlan make_plan(Index n_obs, int n_folds, Horizon h) { return make_plan(n_obs, n_folds, hv_guard(h)); }

struct AlphaSelection {
    std::vector<double> grid;
    std::vector<double> cv_scores;  // mean over folds, per alpha
    double chosen_alpha = 0.0;
    Matrix per_fold;  // folds x alphas
};

/// {0, 0.1, ..., 1.0, 1.25, 1.5, 2.0}
inline std::vector<double> default_alpha_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    g.insert(g.end(), {1.25, 1.5, 2.0});
    return g;
}

/// Fits the adaptive model for every (fold, alpha), scores the held-out block
/// with mean qwCRPS and picks the minimizer (ties go to the smaller alpha).
inline AlphaSelection select_alpha(const MixedFrequencyDataset& data, const std::vector<std::optional<AlmonMap>>& maps,
                                   const QuantileGrid& grid, std::vector<double> alpha_grid, const HvBlockPlan& plan,
                                   Weighting loss = Weighting::equal, const lp::SolverOptions& options = {},
                                   int jobs = 1) {
    if (alpha_grid.empty()) throw InvalidInput("alpha grid is empty");
    for (double a : alpha_grid)
        if (!(a >= 0.0)) throw InvalidInput("alpha grid values must be non-negative");
    if (plan.n_obs != data.rows()) throw InvalidInput("CV plan was built for a different number of rows");
    std::sort(alpha_grid.begin(), alpha_grid.end());
    alpha_grid.erase(std::unique(alpha_grid.begin(), alpha_grid.end()), alpha_grid.end());

    const std::size_t n_alpha = alpha_grid.size();
    const std::size_t n_fold = plan.folds.size();
    AlphaSelection sel;
    sel.grid = alpha_grid;
    sel.per_fold = Matrix::Zero(static_cast<Index>(n_fold), static_cast<Index>(n_alpha));

    std::vector<MixedFrequencyDataset> train(n_fold), test(n_fold);
    for (std::size_t f = 0; f < n_fold; ++f) {
        const HvFold& fold = plan.folds[f];
        train[f] = data.subset(fold.train);
        std::vector<Index> idx;
        for (Index i = fold.test_begin; i < fold.test_end; ++i) idx.push_back(i);
        test[f] = data.subset(idx);
    }

    parallel_for(n_fold * n_alpha, jobs, [&](std::size_t task) {
        const std::size_t f = task / n_alpha, a = task % n_alpha;
        QuantilePanelFit fit;
        try {
            fit = fit_joint(train[f], maps, grid, Constraints::adaptive(alpha_grid[a]), options);
        } catch (const std::exception& e) {
            throw DataError("CV fold " + std::to_string(f) + " (alpha " + format_double(alpha_grid[a]) +
                            ") failed: " + e.what());
        }
        if (!fit.optimal())
            throw DataError("CV fold " + std::to_string(f) + " (alpha " + format_double(alpha_grid[a]) +
                            ") solver status " + lp::to_string(fit.status));
        const Matrix pred = predict(fit, test[f]);
        const Matrix qs = quantile_score_panel(test[f].target, pred, grid);
        sel.per_fold(static_cast<Index>(f), static_cast<Index>(a)) = qwcrps_rows(qs, grid, loss).mean();
    });

    std::size_t best = 0;
    for (std::size_t a = 0; a < n_alpha; ++a) {
        sel.cv_scores.push_back(sel.per_fold.col(static_cast<Index>(a)).mean());
        if (sel.cv_scores[a] < sel.cv_scores[best]) best = a;
    }
    sel.chosen_alpha = alpha_grid[best];
    return sel;
}

inline void write_cv_audit_csv(std::ostream& os, const AlphaSelection& sel) {
    os << "fold,alpha,loss\n";
    for (Index f = 0; f < sel.per_fold.rows(); ++f)
        for (std::size_t a = 0; a < sel.grid.size(); ++a)
            os << f << ',' << format_double(sel.grid[a]) << ',' << format_double(sel.per_fold(f, static_cast<Index>(a)))
               << '\n';
}

}  // namespace gncqr
