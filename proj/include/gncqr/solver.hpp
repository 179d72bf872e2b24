#pragma once

// Joint multi-quantile regression as a linear program.
//
// Coefficients are written as cumulative differences across quantiles:
//   delta_1 = upsilon_1,  delta_q = delta_{q-1} + upsilon_q,
// with upsilon = upsilon^+ - upsilon^-. Residuals split into u^+ - u^-, so
//   minimize   sum_q sum_t tau_q u^+_{t,q} + (1 - tau_q) u^-_{t,q}
//   s.t.       z_t' sum_{r<=q} upsilon_r + u^+_{t,q} - u^-_{t,q} = y_t.
// Non-crossing rows (q >= 2) on the min-max scaled design:
//   bondell:   upsilon_{0,q} - sum_j upsilon^-_{j,q} >= 0
//   adaptive:  upsilon_{0,q} + sum_j lo_j upsilon^+_{j,q} - sum_j hi_j upsilon^-_{j,q} >= 0
//              lo_j = (1 - alpha) mean_j + alpha min_j,  hi_j = (1 - alpha) mean_j + alpha max_j
// The intercept (j = 0) is excluded from the sums.

#include "gncqr/almon.hpp"
#include "gncqr/common.hpp"
#include "gncqr/dataset.hpp"
#include "gncqr/loss.hpp"
#include "gncqr/lp.hpp"
#include "gncqr/scaling.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gncqr {

struct QuantileGrid {
    std::vector<double> taus;

    QuantileGrid() = default;
    explicit QuantileGrid(std::vector<double> t) : taus(std::move(t)) { validate(); }

    /// Deciles plus the quartiles: 11 levels.
    static QuantileGrid standard() {
        return QuantileGrid({0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9});
    }

    Index size() const { return static_cast<Index>(taus.size()); }
    double operator[](Index q) const { return taus[static_cast<std::size_t>(q)]; }

    void validate() const {
        if (taus.empty()) throw InvalidInput("quantile grid is empty");
        for (std::size_t i = 0; i < taus.size(); ++i) {
            if (!(taus[i] > 0.0 && taus[i] < 1.0)) throw InvalidInput("quantile levels must lie in (0, 1)");
            if (i > 0 && !(taus[i] > taus[i - 1])) throw InvalidInput("quantile levels must be strictly increasing");
        }
    }
};

enum class ConstraintMode { plain, bondell, adaptive };

inline const char* to_string(ConstraintMode m) {
    switch (m) {
    case ConstraintMode::plain: return "plain";
    case ConstraintMode::bondell: return "bondell";
    case ConstraintMode::adaptive: return "adaptive";
    }
    return "?";
}

struct Constraints {
    ConstraintMode mode = ConstraintMode::plain;
    double alpha = 0.0;  // adaptive only

    static Constraints plain() { return {}; }
    static Constraints bondell() { return {ConstraintMode::bondell, 0.0}; }
    static Constraints adaptive(double alpha) { return {ConstraintMode::adaptive, alpha}; }
};

/// A joint quantile LP together with the metadata needed to decode its solution.
struct QuantileLp {
    lp::LpProblem problem;
    QuantileGrid grid;
    Constraints constraints;
    Index n_obs = 0;
    Index n_coef = 0;  // K + 1
    ScalingMap scaling;

    Index coef_column(Index j, Index q, bool negative) const { return 2 * (q * n_coef + j) + (negative ? 1 : 0); }
    Index resid_column(Index t, Index q, bool negative) const {
        return 2 * n_coef * grid.size() + 2 * (q * n_obs + t) + (negative ? 1 : 0);
    }
};

/// Builds the LP for a scaled design (intercept in column 0 for constrained modes).
inline QuantileLp assemble_lp(const Matrix& design, const Vector& y, const QuantileGrid& grid, Constraints constraints,
                              const ScalingMap& scaling) {
    grid.validate();
    const Index t_n = design.rows();
    const Index k1 = design.cols();
    const Index q_n = grid.size();
    if (y.size() != t_n) throw InvalidInput("target length does not match design rows");
    if (t_n == 0 || k1 == 0) throw InvalidInput("empty design");
    if (!y.allFinite() || !design.allFinite()) throw InvalidInput("design or target has non-finite values");
    if (constraints.mode != ConstraintMode::plain) {
        if (scaling.size() != k1) throw InvalidInput("scaling map does not match design columns");
        if (!scaling.columns[0].intercept) throw InvalidInput("constrained modes need the intercept in column 0");
    }
    if (constraints.mode == ConstraintMode::adaptive && !(constraints.alpha >= 0.0))
        throw InvalidInput("alpha must be non-negative");

    QuantileLp out;
    out.grid = grid;
    out.constraints = constraints;
    out.n_obs = t_n;
    out.n_coef = k1;
    out.scaling = scaling;

    const Index n_cols = 2 * k1 * q_n + 2 * t_n * q_n;
    lp::LpProblem& p = out.problem;
    p.cost = Vector::Zero(n_cols);
    p.catalog.resize(static_cast<std::size_t>(n_cols));
    for (Index q = 0; q < q_n; ++q) {
        for (Index j = 0; j < k1; ++j) {
            p.catalog[static_cast<std::size_t>(out.coef_column(j, q, false))] = {lp::ColumnKind::coef_pos, int(j), int(q), -1};
            p.catalog[static_cast<std::size_t>(out.coef_column(j, q, true))] = {lp::ColumnKind::coef_neg, int(j), int(q), -1};
        }
        for (Index t = 0; t < t_n; ++t) {
            const Index cp = out.resid_column(t, q, false), cn = out.resid_column(t, q, true);
            p.catalog[static_cast<std::size_t>(cp)] = {lp::ColumnKind::resid_pos, -1, int(q), int(t)};
            p.catalog[static_cast<std::size_t>(cn)] = {lp::ColumnKind::resid_neg, -1, int(q), int(t)};
            p.cost[cp] = grid[q];
            p.cost[cn] = 1.0 - grid[q];
        }
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(t_n * q_n * (k1 * (q_n + 1) + 2)));
    for (Index q = 0; q < q_n; ++q) {
        for (Index t = 0; t < t_n; ++t) {
            const Index row = q * t_n + t;
            for (Index r = 0; r <= q; ++r) {
                for (Index j = 0; j < k1; ++j) {
                    const double z = design(t, j);
                    if (z == 0.0) continue;
                    trip.emplace_back(row, out.coef_column(j, r, false), z);
                    trip.emplace_back(row, out.coef_column(j, r, true), -z);
                }
            }
            trip.emplace_back(row, out.resid_column(t, q, false), 1.0);
            trip.emplace_back(row, out.resid_column(t, q, true), -1.0);
        }
    }
    p.equalities.resize(t_n * q_n, n_cols);
    p.equalities.setFromTriplets(trip.begin(), trip.end());
    p.equalities.makeCompressed();
    p.equality_rhs.resize(t_n * q_n);
    for (Index q = 0; q < q_n; ++q) p.equality_rhs.segment(q * t_n, t_n) = y;

    trip.clear();
    Index n_in = 0;
    if (constraints.mode != ConstraintMode::plain) {
        n_in = q_n - 1;
        for (Index q = 1; q < q_n; ++q) {
            const Index row = q - 1;
            trip.emplace_back(row, out.coef_column(0, q, false), 1.0);
            trip.emplace_back(row, out.coef_column(0, q, true), -1.0);
            for (Index j = 1; j < k1; ++j) {
                double lo = 0.0, hi = 1.0;
                if (constraints.mode == ConstraintMode::adaptive) {
                    const ColumnScale& c = scaling.columns[static_cast<std::size_t>(j)];
                    const double a = constraints.alpha;
                    lo = (1.0 - a) * c.mean + a * c.min;
                    hi = (1.0 - a) * c.mean + a * c.max;
                }
                if (lo != 0.0) trip.emplace_back(row, out.coef_column(j, q, false), lo);
                if (hi != 0.0) trip.emplace_back(row, out.coef_column(j, q, true), -hi);
            }
        }
    }
    p.inequalities.resize(n_in, n_cols);
    p.inequalities.setFromTriplets(trip.begin(), trip.end());
    p.inequalities.makeCompressed();
    p.inequality_rhs = Vector::Zero(n_in);
    return out;
}

struct BlockLayout {
    std::string id;
    int lags = 0;
    std::optional<AlmonMap> map;  // none: raw lags (UMIDAS)
    Index offset = 0;             // first design column
    Index width = 0;
};

/// Column layout of the design z = (x, transformed high-frequency blocks).
struct DesignLayout {
    int ar_lags = 0;
    std::vector<BlockLayout> blocks;
    std::vector<std::string> terms;

    Index width() const { return static_cast<Index>(terms.size()); }
};

inline DesignLayout make_layout(const MixedFrequencyDataset& d, const std::vector<std::optional<AlmonMap>>& maps) {
    if (maps.size() != d.blocks.size())
        throw InvalidInput("expected " + std::to_string(d.blocks.size()) + " lag maps, got " + std::to_string(maps.size()));
    DesignLayout layout;
    layout.ar_lags = d.ar_lags;
    layout.terms.push_back("intercept");
    for (int k = 1; k <= d.ar_lags; ++k) layout.terms.push_back("y_lag" + std::to_string(k));
    Index offset = layout.width();
    for (std::size_t b = 0; b < maps.size(); ++b) {
        BlockLayout bl;
        bl.id = d.blocks[b].id;
        bl.lags = d.blocks[b].lags;
        bl.map = maps[b];
        bl.offset = offset;
        if (bl.map) {
            if (bl.map->lags != bl.lags)
                throw InvalidInput(bl.id + ": Almon map has " + std::to_string(bl.map->lags) + " lags, block has " +
                                   std::to_string(bl.lags));
            bl.width = bl.map->free_parameters();
            for (Index i = 0; i < bl.width; ++i) layout.terms.push_back(bl.id + "_theta" + std::to_string(i));
        } else {
            bl.width = bl.lags;
            for (Index i = 1; i <= bl.width; ++i) layout.terms.push_back(bl.id + "_lag" + std::to_string(i));
        }
        offset += bl.width;
        layout.blocks.push_back(std::move(bl));
    }
    return layout;
}

/// Unscaled design matrix for the dataset under a layout.
inline Matrix build_design(const MixedFrequencyDataset& d, const DesignLayout& layout) {
    if (layout.blocks.size() != d.blocks.size() || layout.ar_lags != d.ar_lags)
        throw InvalidInput("dataset does not match the fitted design layout");
    Matrix z(d.rows(), layout.width());
    z.leftCols(d.low_freq.cols()) = d.low_freq;
    for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
        const BlockLayout& bl = layout.blocks[b];
        if (d.blocks[b].lags != bl.lags || d.blocks[b].id != bl.id)
            throw InvalidInput("block " + d.blocks[b].id + " does not match the fitted design layout");
        z.middleCols(bl.offset, bl.width) = bl.map ? bl.map->regressors(d.blocks[b].values) : d.blocks[b].values;
    }
    return z;
}

struct QuantilePanelFit {
    Matrix delta;    // (K+1) x Q, coefficients on the scaled design
    Matrix upsilon;  // successive differences, column 0 = delta column 0
    Constraints constraints;
    double objective_value = 0.0;
    ScalingMap scaling;
    QuantileGrid grid;
    lp::SolveStatus status = lp::SolveStatus::infeasible;
    long iterations = 0;
    DesignLayout layout;  // empty when fitted directly from a design matrix

    bool optimal() const { return status == lp::SolveStatus::optimal; }

    std::optional<double> alpha() const {
        if (constraints.mode == ConstraintMode::adaptive) return constraints.alpha;
        return std::nullopt;
    }

    /// Coefficients of quantile q expressed per unit of the unscaled regressor.
    Vector raw_coefficients(Index q) const {
        Vector out = delta.col(q);
        for (Index j = 0; j < out.size(); ++j) {
            const ColumnScale& c = scaling.columns[static_cast<std::size_t>(j)];
            if (!c.intercept) out[j] /= (c.raw_max - c.raw_min);
        }
        return out;
    }

    /// gamma_{q,m} for one high-frequency block (Almon profile or raw lag coefficients).
    Vector lag_profile(std::size_t block, Index q) const {
        const BlockLayout& bl = layout.blocks.at(block);
        const Vector theta = raw_coefficients(q).segment(bl.offset, bl.width);
        return bl.map ? gncqr::lag_profile(*bl.map, theta) : theta;
    }
};

/// Solves an assembled program and decodes delta/upsilon from the column catalog.
inline QuantilePanelFit solve(const QuantileLp& qlp, double tol = 1e-9, long max_iter = 0) {
    const lp::LpSolution sol = lp::solve_lp(qlp.problem, {tol, max_iter});
    const Index k1 = qlp.n_coef, q_n = qlp.grid.size();
    QuantilePanelFit fit;
    fit.status = sol.status;
    fit.iterations = sol.iterations;
    fit.grid = qlp.grid;
    fit.constraints = qlp.constraints;
    fit.scaling = qlp.scaling;
    fit.upsilon.resize(k1, q_n);
    for (Index q = 0; q < q_n; ++q)
        for (Index j = 0; j < k1; ++j) {
            // Only the difference enters residuals; a common part of the pair is dropped.
            fit.upsilon(j, q) = sol.x[qlp.coef_column(j, q, false)] - sol.x[qlp.coef_column(j, q, true)];
        }
    fit.delta.resize(k1, q_n);
    fit.delta.col(0) = fit.upsilon.col(0);
    for (Index q = 1; q < q_n; ++q) fit.delta.col(q) = fit.delta.col(q - 1) + fit.upsilon.col(q);
    fit.objective_value = sol.objective;
    return fit;
}

/// Predicted quantiles (rows x Q) for unscaled design rows.
inline Matrix predict(const QuantilePanelFit& fit, const Matrix& design_rows) {
    if (design_rows.cols() != fit.delta.rows())
        throw InvalidInput("design has " + std::to_string(design_rows.cols()) + " columns, fit expects " +
                           std::to_string(fit.delta.rows()));
    return fit.scaling.apply(design_rows) * fit.delta;
}

inline Matrix predict(const QuantilePanelFit& fit, const MixedFrequencyDataset& rows) {
    return predict(fit, build_design(rows, fit.layout));
}

/// Scales an unscaled design, assembles and solves.
inline QuantilePanelFit fit_design(const Matrix& design, const Vector& y, const QuantileGrid& grid,
                                   Constraints constraints, const lp::SolverOptions& options = {}) {
    auto [scaled, scaling] = minmax_fit_apply(design);
    const QuantileLp qlp = assemble_lp(scaled, y, grid, constraints, scaling);
    return solve(qlp, options.tol, options.max_iter);
}

/// Almon (or raw, for std::nullopt) lag blocks + scaling + joint LP.
inline QuantilePanelFit fit_joint(const MixedFrequencyDataset& d, const std::vector<std::optional<AlmonMap>>& maps,
                                  const QuantileGrid& grid, Constraints constraints,
                                  const lp::SolverOptions& options = {}) {
    DesignLayout layout = make_layout(d, maps);
    QuantilePanelFit fit = fit_design(build_design(d, layout), d.target, grid, constraints, options);
    fit.layout = std::move(layout);
    return fit;
}

/// Sum of tick losses of a fit on (design, y), computed outside the LP.
inline double tick_objective(const Matrix& fitted, const Vector& y, const QuantileGrid& grid) {
    double total = 0.0;
    for (Index q = 0; q < grid.size(); ++q)
        for (Index t = 0; t < y.size(); ++t) total += tick_loss(y[t] - fitted(t, q), grid[q]);
    return total;
}

}  // namespace gncqr
