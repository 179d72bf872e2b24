#pragma once

// Sparse standard-form linear programs and a bounded-variable primal simplex.
//
//   minimize    c'x
//   subject to  E x  = e
//               G x >= g
//               x >= 0
//
// solve_lp() works on the dual of this program. Primal columns with a single
// nonzero in E (residual splits u+/u- in quantile regression) turn into box
// bounds on the dual, so the simplex basis only spans the remaining
// "structural" columns. For a joint quantile LP that is 2(K+1)Q rows instead
// of T*Q, which is what makes repeated fits inside cross-validation and
// backtests affordable.

#include "gncqr/common.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <algorithm>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace gncqr::lp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

enum class ColumnKind { coef_pos, coef_neg, resid_pos, resid_neg, other };

/// Semantic name of an LP column (upsilon^+_{j,q}, upsilon^-_{j,q}, u^+_{t,q}, u^-_{t,q}).
struct ColumnTag {
    ColumnKind kind = ColumnKind::other;
    int regressor = -1;  // j, coefficient columns
    int quantile = -1;   // q
    int obs = -1;        // t, residual columns

    std::string name() const {
        switch (kind) {
        case ColumnKind::coef_pos: return "vp_" + std::to_string(regressor) + "_" + std::to_string(quantile);
        case ColumnKind::coef_neg: return "vn_" + std::to_string(regressor) + "_" + std::to_string(quantile);
        case ColumnKind::resid_pos: return "up_" + std::to_string(obs) + "_" + std::to_string(quantile);
        case ColumnKind::resid_neg: return "un_" + std::to_string(obs) + "_" + std::to_string(quantile);
        case ColumnKind::other: break;
        }
        return "x";
    }
};

/// All decision variables have lower bound 0 and no upper bound.
struct LpProblem {
    Vector cost;
    std::vector<ColumnTag> catalog;
    SparseMatrix equalities;  // rows x columns
    Vector equality_rhs;
    SparseMatrix inequalities;  // rows are ">=" constraints
    Vector inequality_rhs;

    Index num_columns() const { return cost.size(); }
    Index num_equalities() const { return equalities.rows(); }
    Index num_inequalities() const { return inequalities.rows(); }

    void validate() const {
        const Index n = num_columns();
        if (static_cast<Index>(catalog.size()) != n) throw InvalidInput("LP catalog does not cover every column");
        if (equalities.cols() != n || inequalities.cols() != n) throw InvalidInput("LP constraint width mismatch");
        if (equality_rhs.size() != equalities.rows() || inequality_rhs.size() != inequalities.rows())
            throw InvalidInput("LP right-hand side length mismatch");
        if (!cost.allFinite()) throw InvalidInput("LP objective has non-finite entries");
    }
};

enum class SolveStatus { optimal, iteration_limit, infeasible, unbounded };

inline const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    }
    return "?";
}

struct SolverOptions {
    double tol = 1e-9;
    long max_iter = 0;  // 0: 50 * number of primal columns
};

struct LpSolution {
    SolveStatus status = SolveStatus::infeasible;
    Vector x;
    double objective = 0.0;
    long iterations = 0;
    double max_violation = 0.0;  // worst primal constraint violation of x
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Revised bounded-variable primal simplex with a dense explicit basis inverse.
// Nonbasic variables may rest anywhere inside their box (free variables start
// at 0), which avoids a separate treatment of free columns.
class BoundedSimplex {
public:
    enum class Outcome { optimal, iteration_limit, unbounded };

    BoundedSimplex(const SparseMatrix& a, Vector rhs, Vector lo, Vector hi, double tol)
        : m_(a.rows()), n_(a.cols()), rhs_(std::move(rhs)), lo_(std::move(lo)), hi_(std::move(hi)), tol_(tol) {
        col_ptr_.assign(a.outerIndexPtr(), a.outerIndexPtr() + n_ + 1);
        const Index nnz = a.nonZeros();
        row_idx_.assign(a.innerIndexPtr(), a.innerIndexPtr() + nnz);
        val_.assign(a.valuePtr(), a.valuePtr() + nnz);
        x_ = Vector::Zero(n_);
        basic_pos_.assign(static_cast<std::size_t>(n_), -1);
    }

    /// Nonbasic values come from `x`; `basis` lists one column per row.
    void start(const std::vector<Index>& basis, const Vector& x) {
        head_ = basis;
        x_ = x;
        std::fill(basic_pos_.begin(), basic_pos_.end(), -1);
        for (Index r = 0; r < m_; ++r) basic_pos_[static_cast<std::size_t>(head_[r])] = r;
        refactor();
    }

    Outcome run(const Vector& cost, long max_iter, long& iterations) {
        int degenerate_run = 0;
        bool bland = false;
        int since_refactor = 0;
        Vector y(m_), alpha(m_);
        while (true) {
            if (iterations >= max_iter) return Outcome::iteration_limit;
            compute_multipliers(cost, y);

            Index enter = -1;
            int dir = 0;
            double best = 0.0;
            // Partial pricing: scan segments cyclically from the cursor and stop at
            // the first segment that offers an improving column.
            const Index segment = std::max<Index>(kMinSegment, n_ / kSegments);
            Index scanned = 0;
            Index j = cursor_;
            while (scanned < n_) {
                const Index stop = std::min<Index>(scanned + segment, n_);
                for (; scanned < stop; ++scanned, j = (j + 1 == n_ ? 0 : j + 1)) {
                    if (basic_pos_[static_cast<std::size_t>(j)] >= 0) continue;
                    double d = cost[j];
                    for (Index p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) d -= y[row_idx_[p]] * val_[p];
                    int cand = 0;
                    if (d < -tol_ && x_[j] < hi_[j] - tol_) cand = +1;
                    else if (d > tol_ && x_[j] > lo_[j] + tol_) cand = -1;
                    if (cand == 0) continue;
                    if (bland) {
                        if (enter < 0 || j < enter) {
                            enter = j;
                            dir = cand;
                        }
                        continue;
                    }
                    if (std::abs(d) > best) {
                        best = std::abs(d);
                        enter = j;
                        dir = cand;
                    }
                }
                if (enter >= 0 && !bland) break;
            }
            cursor_ = j;
            if (enter < 0) return Outcome::optimal;
            ++iterations;

            alpha.setZero();
            for (Index p = col_ptr_[enter]; p < col_ptr_[enter + 1]; ++p) alpha += binv_.col(row_idx_[p]) * val_[p];

            // Ratio test; x_B moves by -dir * theta * alpha.
            double theta = dir > 0 ? hi_[enter] - x_[enter] : x_[enter] - lo_[enter];
            Index leave_row = -1;
            double leave_piv = 0.0;
            for (Index r = 0; r < m_; ++r) {
                const double rate = -dir * alpha[r];
                if (std::abs(rate) <= kPivotTol) continue;
                const Index b = head_[r];
                double limit;
                if (rate < 0) {
                    if (lo_[b] == -kInf) continue;
                    limit = std::max(0.0, (x_[b] - lo_[b]) / -rate);
                } else {
                    if (hi_[b] == kInf) continue;
                    limit = std::max(0.0, (hi_[b] - x_[b]) / rate);
                }
                const double slack = 1e-12 * (1.0 + limit);
                if (leave_row < 0 ? limit < theta : limit < theta - slack) {
                    theta = limit;
                    leave_row = r;
                    leave_piv = std::abs(rate);
                } else if (leave_row >= 0 && limit <= theta + slack) {
                    const bool better = bland ? head_[r] < head_[leave_row] : std::abs(rate) > leave_piv;
                    if (better) {
                        theta = std::min(theta, limit);
                        leave_row = r;
                        leave_piv = std::abs(rate);
                    }
                }
            }
            if (theta == kInf) return Outcome::unbounded;

            if (theta <= tol_) {
                if (++degenerate_run > kStallLimit) bland = true;
            } else {
                degenerate_run = 0;
                bland = false;
            }

            x_[enter] += dir * theta;
            for (Index r = 0; r < m_; ++r) x_[head_[r]] -= dir * theta * alpha[r];

            if (leave_row < 0) {
                // Bound flip: entering column crosses its own box, basis unchanged.
                x_[enter] = dir > 0 ? hi_[enter] : lo_[enter];
                continue;
            }

            const Index leaving = head_[leave_row];
            const double rate = -dir * alpha[leave_row];
            x_[leaving] = rate < 0 ? lo_[leaving] : hi_[leaving];

            const double piv = alpha[leave_row];
            binv_.row(leave_row) /= piv;
            for (Index r = 0; r < m_; ++r) {
                if (r == leave_row || alpha[r] == 0.0) continue;
                binv_.row(r) -= alpha[r] * binv_.row(leave_row);
            }
            head_[leave_row] = enter;
            basic_pos_[static_cast<std::size_t>(leaving)] = -1;
            basic_pos_[static_cast<std::size_t>(enter)] = leave_row;

            if (++since_refactor >= kRefactorEvery) {
                refactor();
                since_refactor = 0;
            }
        }
    }

    /// Simplex multipliers y = B^{-T} c_B at the current basis.
    Vector multipliers(const Vector& cost) {
        refactor();
        Vector y(m_);
        compute_multipliers(cost, y);
        return y;
    }

    const Vector& values() const { return x_; }
    Vector& mutable_bounds_hi() { return hi_; }
    bool is_basic(Index j) const { return basic_pos_[static_cast<std::size_t>(j)] >= 0; }

private:
    static constexpr double kPivotTol = 1e-9;
    static constexpr int kStallLimit = 50;
    static constexpr int kRefactorEvery = 100;
    static constexpr Index kSegments = 8;
    static constexpr Index kMinSegment = 64;

    void compute_multipliers(const Vector& cost, Vector& y) const {
        y.setZero();
        for (Index r = 0; r < m_; ++r) {
            const double cb = cost[head_[r]];
            if (cb != 0.0) y += cb * binv_.row(r).transpose();
        }
    }

    void refactor() {
        if (m_ == 0) return;
        Matrix basis = Matrix::Zero(m_, m_);
        for (Index r = 0; r < m_; ++r) {
            const Index j = head_[r];
            for (Index p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) basis(row_idx_[p], r) = val_[p];
        }
        binv_ = basis.partialPivLu().inverse();
        Vector resid = rhs_;
        for (Index j = 0; j < n_; ++j) {
            if (basic_pos_[static_cast<std::size_t>(j)] >= 0 || x_[j] == 0.0) continue;
            for (Index p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) resid[row_idx_[p]] -= val_[p] * x_[j];
        }
        const Vector xb = binv_ * resid;
        for (Index r = 0; r < m_; ++r) x_[head_[r]] = xb[r];
    }

    Index m_, n_;
    std::vector<Index> col_ptr_;
    std::vector<Index> row_idx_;
    std::vector<double> val_;
    Vector rhs_, lo_, hi_;
    double tol_;
    Vector x_;
    std::vector<Index> head_;
    std::vector<Index> basic_pos_;
    Matrix binv_;
    Index cursor_ = 0;
};

}  // namespace detail

/// Solves an LpProblem to an optimal basic solution. Deterministic for identical inputs.
inline LpSolution solve_lp(const LpProblem& problem, const SolverOptions& options = {}) {
    using detail::kInf;
    problem.validate();
    const Index n = problem.num_columns();
    const Index m_eq = problem.num_equalities();
    const Index m_in = problem.num_inequalities();
    const Index n_dual = m_eq + m_in;
    const long max_iter = options.max_iter > 0 ? options.max_iter : 50L * std::max<Index>(n, 1);

    // Row-wise view of constraints per primal column.
    const SparseMatrix& eq = problem.equalities;
    const SparseMatrix& in = problem.inequalities;

    Vector lo(n_dual), hi(n_dual);
    lo.head(m_eq).setConstant(-kInf);
    hi.head(m_eq).setConstant(kInf);
    lo.tail(m_in).setZero();
    hi.tail(m_in).setConstant(kInf);

    std::vector<std::vector<std::pair<Index, double>>> singletons(static_cast<std::size_t>(m_eq));
    std::vector<Index> structural;  // primal columns that become dual rows
    LpSolution sol;
    sol.x = Vector::Zero(n);

    for (Index j = 0; j < n; ++j) {
        const Index nnz_eq = eq.outerIndexPtr()[j + 1] - eq.outerIndexPtr()[j];
        const Index nnz_in = in.outerIndexPtr()[j + 1] - in.outerIndexPtr()[j];
        if (nnz_in == 0 && nnz_eq == 1) {
            SparseMatrix::InnerIterator it(eq, j);
            const double a = it.value();
            const Index i = it.row();
            if (a > 0) hi[i] = std::min(hi[i], problem.cost[j] / a);
            else if (a < 0) lo[i] = std::max(lo[i], problem.cost[j] / a);
            singletons[static_cast<std::size_t>(i)].emplace_back(j, a);
        } else if (nnz_in == 0 && nnz_eq == 0) {
            if (problem.cost[j] < 0) {
                sol.status = SolveStatus::unbounded;
                return sol;
            }
        } else {
            structural.push_back(j);
        }
    }
    for (Index i = 0; i < n_dual; ++i) {
        if (lo[i] > hi[i] + options.tol) {
            sol.status = SolveStatus::unbounded;  // dual infeasible
            return sol;
        }
        if (lo[i] > hi[i]) lo[i] = hi[i];
    }

    // Inner program over w = (pi, mu, slacks, artificials): D w_dual + s = c_S.
    const Index m = static_cast<Index>(structural.size());
    Vector w0 = Vector::Zero(n_dual);
    for (Index i = 0; i < n_dual; ++i) {
        if (lo[i] > 0) w0[i] = lo[i];
        else if (hi[i] < 0) w0[i] = hi[i];
    }
    std::vector<Eigen::Triplet<double>> trip;
    Vector c_s(m), row_val = Vector::Zero(m);
    for (Index r = 0; r < m; ++r) {
        const Index j = structural[static_cast<std::size_t>(r)];
        c_s[r] = problem.cost[j];
        for (SparseMatrix::InnerIterator it(eq, j); it; ++it) {
            trip.emplace_back(r, it.row(), it.value());
            row_val[r] += it.value() * w0[it.row()];
        }
        for (SparseMatrix::InnerIterator it(in, j); it; ++it) {
            trip.emplace_back(r, m_eq + it.row(), it.value());
            row_val[r] += it.value() * w0[m_eq + it.row()];
        }
    }
    std::vector<Index> basis(static_cast<std::size_t>(m));
    Index n_art = 0;
    for (Index r = 0; r < m; ++r) {
        trip.emplace_back(r, n_dual + r, 1.0);
        if (c_s[r] - row_val[r] < 0) {
            trip.emplace_back(r, n_dual + m + n_art, -1.0);
            basis[static_cast<std::size_t>(r)] = n_dual + m + n_art;
            ++n_art;
        } else {
            basis[static_cast<std::size_t>(r)] = n_dual + r;
        }
    }
    const Index n_inner = n_dual + m + n_art;
    SparseMatrix inner(m, n_inner);
    inner.setFromTriplets(trip.begin(), trip.end());
    inner.makeCompressed();

    Vector ilo(n_inner), ihi(n_inner);
    ilo.head(n_dual) = lo;
    ihi.head(n_dual) = hi;
    ilo.tail(m + n_art).setZero();
    ihi.tail(m + n_art).setConstant(kInf);
    Vector x0 = Vector::Zero(n_inner);
    x0.head(n_dual) = w0;

    detail::BoundedSimplex simplex(inner, c_s, ilo, ihi, options.tol);
    simplex.start(basis, x0);

    long iters = 0;
    if (n_art > 0) {
        Vector phase1 = Vector::Zero(n_inner);
        phase1.tail(n_art).setOnes();
        auto out = simplex.run(phase1, max_iter, iters);
        if (out == detail::BoundedSimplex::Outcome::iteration_limit) {
            sol.status = SolveStatus::iteration_limit;
            sol.iterations = iters;
            return sol;
        }
        if (simplex.values().tail(n_art).sum() > 1e-7) {
            sol.status = SolveStatus::unbounded;  // dual infeasible
            sol.iterations = iters;
            return sol;
        }
        simplex.mutable_bounds_hi().tail(n_art).setZero();
    }

    Vector phase2 = Vector::Zero(n_inner);
    phase2.head(m_eq) = -problem.equality_rhs;
    phase2.segment(m_eq, m_in) = -problem.inequality_rhs;
    auto out = simplex.run(phase2, max_iter, iters);
    sol.iterations = iters;
    if (out == detail::BoundedSimplex::Outcome::unbounded) {
        sol.status = SolveStatus::infeasible;
        return sol;
    }
    sol.status = out == detail::BoundedSimplex::Outcome::optimal ? SolveStatus::optimal : SolveStatus::iteration_limit;

    // Primal values of structural columns are the negated inner multipliers.
    const Vector y = simplex.multipliers(phase2);
    for (Index r = 0; r < m; ++r) {
        const double v = -y[r];
        sol.x[structural[static_cast<std::size_t>(r)]] = v > 0 ? v : 0.0;
    }

    // Singleton columns absorb the equality residuals at least cost.
    Vector resid = problem.equality_rhs - eq * sol.x;
    for (Index i = 0; i < m_eq; ++i) {
        const double r = resid[i];
        if (r == 0.0) continue;
        Index pick = -1;
        double pick_a = 0.0, pick_cost = kInf;
        for (const auto& [j, a] : singletons[static_cast<std::size_t>(i)]) {
            if (a * r <= 0) continue;
            const double unit = problem.cost[j] / std::abs(a);
            if (unit < pick_cost) {
                pick_cost = unit;
                pick = j;
                pick_a = a;
            }
        }
        if (pick >= 0) sol.x[pick] = r / pick_a;
    }

    const Vector eq_resid = problem.equality_rhs - eq * sol.x;
    double viol = eq_resid.size() ? eq_resid.cwiseAbs().maxCoeff() : 0.0;
    if (m_in > 0) {
        const Vector in_gap = in * sol.x - problem.inequality_rhs;
        viol = std::max(viol, std::max(0.0, -in_gap.minCoeff()));
    }
    sol.max_violation = viol;
    sol.objective = problem.cost.dot(sol.x);
    if (sol.status == SolveStatus::optimal && viol > 1e-6 * (1.0 + problem.equality_rhs.cwiseAbs().maxCoeff()))
        throw std::logic_error("simplex reported optimal but primal recovery violates constraints by " +
                               format_double(viol));
    return sol;
}

/// CPLEX-LP style text dump for cross-checking with external solvers.
inline void write_cplex_lp(std::ostream& os, const LpProblem& problem) {
    problem.validate();
    auto name = [&](Index j) { return problem.catalog[static_cast<std::size_t>(j)].name(); };
    auto emit_terms = [&](const std::vector<std::pair<Index, double>>& terms) {
        int on_line = 0;
        bool first = true;
        for (const auto& [j, v] : terms) {
            if (v == 0.0) continue;
            if (on_line == 6) {
                os << "\n   ";
                on_line = 0;
            }
            os << (v < 0 ? " - " : (first ? " " : " + ")) << format_double(std::abs(v)) << ' ' << name(j);
            first = false;
            ++on_line;
        }
        if (first) os << " 0 " << name(0);
    };
    auto rows_of = [](const SparseMatrix& a) {
        std::vector<std::vector<std::pair<Index, double>>> rows(static_cast<std::size_t>(a.rows()));
        for (Index j = 0; j < a.outerSize(); ++j)
            for (SparseMatrix::InnerIterator it(a, j); it; ++it)
                rows[static_cast<std::size_t>(it.row())].emplace_back(j, it.value());
        return rows;
    };

    os << "\\ quantile regression LP: " << problem.num_columns() << " columns, " << problem.num_equalities()
       << " equalities, " << problem.num_inequalities() << " inequalities\n";
    os << "Minimize\n obj:";
    std::vector<std::pair<Index, double>> obj;
    for (Index j = 0; j < problem.num_columns(); ++j) obj.emplace_back(j, problem.cost[j]);
    emit_terms(obj);
    os << "\nSubject To\n";
    const auto eq_rows = rows_of(problem.equalities);
    for (std::size_t i = 0; i < eq_rows.size(); ++i) {
        os << " e" << i << ":";
        emit_terms(eq_rows[i]);
        os << " = " << format_double(problem.equality_rhs[static_cast<Index>(i)]) << '\n';
    }
    const auto in_rows = rows_of(problem.inequalities);
    for (std::size_t i = 0; i < in_rows.size(); ++i) {
        os << " nc" << i << ":";
        emit_terms(in_rows[i]);
        os << " >= " << format_double(problem.inequality_rhs[static_cast<Index>(i)]) << '\n';
    }
    os << "Bounds\n";
    for (Index j = 0; j < problem.num_columns(); ++j) os << " " << name(j) << " >= 0\n";
    os << "End\n";
}

}  // namespace gncqr::lp
