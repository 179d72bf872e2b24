#pragma once

// Forecast scoring: quantile score, quantile-weighted CRPS, Diebold-Mariano,
// and density curves reconstructed from predicted quantiles.

#include "gncqr/common.hpp"
#include "gncqr/loss.hpp"
#include "gncqr/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace gncqr {

/// Pinball loss of a quantile prediction at level tau.
inline double quantile_score(double y, double q_pred, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in (0, 1)");
    return tick_loss(y - q_pred, tau);
}

enum class Weighting { equal = 1, center = 2, left_tail = 3, right_tail = 4 };

inline constexpr std::array<Weighting, 4> kAllWeightings = {Weighting::equal, Weighting::center, Weighting::left_tail,
                                                          Weighting::right_tail};

inline Weighting parse_weighting(std::string_view s) {
    if (s == "w1" || s == "equal") return Weighting::equal;
    if (s == "w2" || s == "center") return Weighting::center;
    if (s == "w3" || s == "left_tail") return Weighting::left_tail;
    if (s == "w4" || s == "right_tail") return Weighting::right_tail;
    throw InvalidInput("unknown weighting '" + std::string(s) + "' (expected w1..w4)");
}

inline double quantile_weight(Weighting w, double tau) {
    switch (w) {
    case Weighting::equal: return 1.0;
    case Weighting::center: return tau * (1.0 - tau);
    case Weighting::left_tail: return (1.0 - tau) * (1.0 - tau);
    case Weighting::right_tail: return tau * tau;
    }
    return 0.0;
}

/// Discretized qwCRPS over the grid: the equal scheme is the plain average of the
/// scores; the other schemes are raw weighted sums.
inline double qwcrps(const Vector& qs_row, const QuantileGrid& grid, Weighting scheme) {
    if (qs_row.size() != grid.size())
        throw InvalidInput("score row has " + std::to_string(qs_row.size()) + " entries, grid has " +
                           std::to_string(grid.size()));
    double total = 0.0;
    for (Index q = 0; q < grid.size(); ++q) total += quantile_weight(scheme, grid[q]) * qs_row[q];
    return scheme == Weighting::equal ? total / static_cast<double>(grid.size()) : total;
}

/// Per-observation, per-quantile scores (rows x Q).
inline Matrix quantile_score_panel(const Vector& y, const Matrix& predicted, const QuantileGrid& grid) {
    if (predicted.rows() != y.size() || predicted.cols() != grid.size())
        throw InvalidInput("prediction panel shape does not match targets and grid");
    Matrix qs(y.size(), grid.size());
    for (Index t = 0; t < y.size(); ++t)
        for (Index q = 0; q < grid.size(); ++q) qs(t, q) = quantile_score(y[t], predicted(t, q), grid[q]);
    return qs;
}

/// qwCRPS of every row of a score panel.
inline Vector qwcrps_rows(const Matrix& qs, const QuantileGrid& grid, Weighting scheme) {
    Vector out(qs.rows());
    for (Index t = 0; t < qs.rows(); ++t) out[t] = qwcrps(qs.row(t).transpose(), grid, scheme);
    return out;
}

struct DmResult {
    double statistic = 0.0;  // > 0: first argument has the lower loss
    double p_value = 1.0;
    int hac_lags = 0;
};

/// Newey-West long-run variance of d with Bartlett weights.
inline double newey_west_variance(const Vector& d, int lags) {
    const Index n = d.size();
    const double mean = d.mean();
    auto autocov = [&](Index k) {
        double s = 0.0;
        for (Index t = k; t < n; ++t) s += (d[t] - mean) * (d[t - k] - mean);
        return s / static_cast<double>(n);
    };
    double v = autocov(0);
    for (int k = 1; k <= lags && k < n; ++k) v += 2.0 * (1.0 - k / static_cast<double>(lags + 1)) * autocov(k);
    return v;
}

/// Diebold-Mariano test on d_t = loss_b - loss_a with a two-sided normal p-value.
inline DmResult dm_test(const Vector& loss_a, const Vector& loss_b, int hac_lags) {
    if (loss_a.size() != loss_b.size()) throw InvalidInput("loss series differ in length");
    if (loss_a.size() < 10) throw InvalidInput("Diebold-Mariano needs at least 10 observations");
    if (hac_lags < 0) throw InvalidInput("HAC lag count must be non-negative");
    const Vector d = loss_b - loss_a;
    const double mean = d.mean();
    const double var = newey_west_variance(d, hac_lags);
    DmResult r;
    r.hac_lags = hac_lags;
    if (!(var > 0.0)) {
        if (mean == 0.0) return r;
        throw DataError("degenerate differential: constant nonzero loss difference");
    }
    r.statistic = mean / std::sqrt(var / static_cast<double>(d.size()));
    r.p_value = std::min(1.0, std::erfc(std::abs(r.statistic) / std::sqrt(2.0)));
    return r;
}

/// Significance stars at 10/5/1%.
inline std::string significance_stars(double p_value) {
    if (p_value < 0.01) return "***";
    if (p_value < 0.05) return "**";
    if (p_value < 0.10) return "*";
    return "";
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant through (x_i, y_i).
class MonotoneCubic {
public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw InvalidInput("monotone interpolation needs at least two points");
        std::vector<double> delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        slope_.assign(n, 0.0);
        slope_[0] = delta[0];
        slope_[n - 1] = delta[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i) slope_[i] = delta[i - 1] * delta[i] <= 0 ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (delta[i] == 0.0) {
                slope_[i] = slope_[i + 1] = 0.0;
                continue;
            }
            const double a = slope_[i] / delta[i], b = slope_[i + 1] / delta[i];
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double t = 3.0 / std::sqrt(s);
                slope_[i] = t * a * delta[i];
                slope_[i + 1] = t * b * delta[i];
            }
        }
    }

    double operator()(double x) const {
        if (x <= x_.front()) return y_.front();
        if (x >= x_.back()) return y_.back();
        const std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * slope_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
               (t3 - t2) * h * slope_[i + 1];
    }

    double lo() const { return x_.front(); }
    double hi() const { return x_.back(); }

private:
    std::vector<double> x_, y_, slope_;
};

struct DensityCurve {
    std::vector<double> support;
    std::vector<double> pdf;
    std::vector<double> cdf;
    bool rearranged = false;  // input quantiles were crossing and got sorted
    bool degenerate = false;  // all quantiles equal: single-bin mass

    /// Number of strict local maxima of the pdf.
    int modes() const {
        int count = 0;
        for (std::size_t i = 1; i + 1 < pdf.size(); ++i) {
            if (pdf[i] <= pdf[i - 1]) continue;
            std::size_t j = i;
            while (j + 1 < pdf.size() && pdf[j + 1] == pdf[i]) ++j;
            if (j + 1 < pdf.size() && pdf[j + 1] < pdf[i]) ++count;
            i = j;
        }
        return count;
    }
};

struct DensityOptions {
    int points = 401;
    double iqr_extension = 0.5;  // support spans q_1 - ext*IQR .. q_Q + ext*IQR
};

/// CDF on an even support grid by inverting a monotone cubic quantile function,
/// pdf by centred finite differences. The CDF is flat at tau_1 below q_1 and at
/// tau_Q above q_Q.
inline DensityCurve density_from_quantiles(const Vector& q_vec, const QuantileGrid& grid, DensityOptions opt = {}) {
    if (q_vec.size() != grid.size()) throw InvalidInput("quantile vector does not match grid");
    if (grid.size() < 2) throw InvalidInput("density construction needs at least two quantiles");
    if (opt.points < 3) throw InvalidInput("density support needs at least three points");
    std::vector<double> q(q_vec.data(), q_vec.data() + q_vec.size());
    DensityCurve out;
    if (!std::is_sorted(q.begin(), q.end())) {
        std::sort(q.begin(), q.end());
        out.rearranged = true;
    }
    const double tau_lo = grid[0], tau_hi = grid[grid.size() - 1];
    if (q.front() == q.back()) {
        out.degenerate = true;
        out.support = {q.front()};
        out.cdf = {tau_hi};
        out.pdf = {tau_hi - tau_lo};
        return out;
    }
    const MonotoneCubic quantile_fn(grid.taus, q);
    const double iqr = quantile_fn(0.75) - quantile_fn(0.25);
    const double ext = opt.iqr_extension * (iqr > 0 ? iqr : q.back() - q.front());
    const double x_lo = q.front() - ext, x_hi = q.back() + ext;
    const int n = opt.points;
    const double step = (x_hi - x_lo) / (n - 1);
    out.support.resize(static_cast<std::size_t>(n));
    out.cdf.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = x_lo + step * i;
        out.support[static_cast<std::size_t>(i)] = x;
        double cdf;
        if (x < q.front()) cdf = tau_lo;
        else if (x >= q.back()) cdf = tau_hi;
        else {
            // largest tau with Q(tau) <= x
            double a = tau_lo, b = tau_hi;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (a + b);
                if (quantile_fn(mid) <= x) a = mid;
                else b = mid;
            }
            cdf = a;
        }
        out.cdf[static_cast<std::size_t>(i)] = cdf;
    }
    out.pdf.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - 1), b = std::min(n - 1, i + 1);
        out.pdf[static_cast<std::size_t>(i)] =
            std::max(0.0, (out.cdf[static_cast<std::size_t>(b)] - out.cdf[static_cast<std::size_t>(a)]) / (step * (b - a)));
    }
    return out;
}

}  // namespace gncqr
