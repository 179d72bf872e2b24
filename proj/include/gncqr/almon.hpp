#pragma once

// Almon lag polynomials in the "direct" parametrization.
//
// A lag profile over m = 1..M is gamma_m = sum_i theta_i m^i (i = 0..p), i.e.
// gamma = Phi' theta with Phi(i, m-1) = m^i. Endpoint restrictions force
// B(M) = 0 and B'(M) = 0; the free parameters are then theta_2..theta_p and
//   theta_1 = -sum_{i>=2} i theta_i M^{i-1}
//   theta_0 =  sum_{i>=2} (i-1) theta_i M^i
// which is the null-space basis stored in AlmonMap.

#include "gncqr/common.hpp"

#include <Eigen/QR>

#include <string>

namespace gncqr {

struct AlmonMap {
    int lags = 1;          // M
    int order = 0;         // p
    int restrictions = 0;  // r: 0 or 2
    Matrix phi;            // (p+1) x M
    Matrix null_basis;     // (p+1) x (p+1-r)

    int free_parameters() const { return order + 1 - restrictions; }
    bool restricted() const { return restrictions > 0; }

    /// Regressor block for the restricted parameters: W (T x M) -> T x (p+1-r).
    Matrix regressors(const Matrix& lag_values) const {
        if (lag_values.cols() != lags)
            throw InvalidInput("lag block has " + std::to_string(lag_values.cols()) + " columns, Almon map expects " +
                               std::to_string(lags));
        return lag_values * (phi.transpose() * null_basis);
    }

    /// Full polynomial coefficients theta (length p+1) from the restricted ones.
    Vector full_theta(const Vector& theta_restricted) const {
        if (theta_restricted.size() != free_parameters())
            throw InvalidInput("theta has length " + std::to_string(theta_restricted.size()) + ", expected " +
                               std::to_string(free_parameters()));
        return null_basis * theta_restricted;
    }
};

/// Endpoint restriction rows: [M^i] (value) and [i M^{i-1}] (slope), i = 0..p.
inline Matrix almon_restriction_matrix(int lags, int order) {
    Matrix r(2, order + 1);
    for (int i = 0; i <= order; ++i) {
        r(0, i) = std::pow(static_cast<double>(lags), i);
        r(1, i) = i == 0 ? 0.0 : i * std::pow(static_cast<double>(lags), i - 1);
    }
    return r;
}

/// Orthonormal null-space basis of `r` via column-pivoted QR of r'.
inline Matrix null_space_qr(const Matrix& r) {
    Eigen::ColPivHouseholderQR<Matrix> qr(r.transpose());
    const Index rank = qr.rank();
    const Matrix q = qr.householderQ() * Matrix::Identity(r.cols(), r.cols());
    return q.rightCols(r.cols() - rank);
}

inline AlmonMap make_almon_map(int lags, int order, bool restricted) {
    if (lags < 1) throw InvalidInput("lag count must be positive");
    if (order < 0) throw InvalidInput("polynomial order must be non-negative");
    if (order >= lags) throw InvalidInput("polynomial order must be below lag count");
    if (restricted && order < 2) throw InvalidInput("restrictions exceed parameters");

    AlmonMap map;
    map.lags = lags;
    map.order = order;
    map.restrictions = restricted ? 2 : 0;
    map.phi.resize(order + 1, lags);
    for (int m = 1; m <= lags; ++m) {
        long long v = 1;  // exact integer powers
        for (int i = 0; i <= order; ++i) {
            map.phi(i, m - 1) = static_cast<double>(v);
            v *= m;
        }
    }
    if (!restricted) {
        map.null_basis = Matrix::Identity(order + 1, order + 1);
        return map;
    }
    map.null_basis = Matrix::Zero(order + 1, order - 1);
    const double big_m = lags;
    for (int i = 2; i <= order; ++i) {
        const int c = i - 2;
        map.null_basis(i, c) = 1.0;
        map.null_basis(1, c) = -i * std::pow(big_m, i - 1);
        map.null_basis(0, c) = (i - 1) * std::pow(big_m, i);
    }
    return map;
}

/// gamma_m for m = 1..M.
inline Vector lag_profile(const AlmonMap& map, const Vector& theta_restricted) {
    return map.phi.transpose() * map.full_theta(theta_restricted);
}

/// Cumulative high-frequency effect: sum over lags of the profile.
inline double overall_effect(const AlmonMap& map, const Vector& theta_restricted) {
    return lag_profile(map, theta_restricted).sum();
}

}  // namespace gncqr
