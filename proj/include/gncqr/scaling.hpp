#pragma once

// Min-max scaling of design matrices onto [0, 1].

#include "gncqr/common.hpp"

#include <utility>
#include <vector>

namespace gncqr {

struct ColumnScale {
    double raw_min = 0.0;
    double raw_max = 1.0;
    // Statistics of the scaled training column; min/max are 0/1 by construction
    // and mean is the column average used by the adaptive constraints.
    double min = 0.0;
    double max = 1.0;
    double mean = 0.0;
    bool intercept = false;
};

struct ScalingMap {
    std::vector<ColumnScale> columns;

    Index size() const { return static_cast<Index>(columns.size()); }

    /// Scales rows with the stored training min/max; values may fall outside [0, 1].
    Matrix apply(const Matrix& design) const {
        if (design.cols() != size())
            throw InvalidInput("design has " + std::to_string(design.cols()) + " columns, scaling expects " +
                               std::to_string(size()));
        Matrix out(design.rows(), design.cols());
        for (Index j = 0; j < design.cols(); ++j) {
            const ColumnScale& c = columns[static_cast<std::size_t>(j)];
            if (c.intercept) {
                out.col(j) = design.col(j);
                continue;
            }
            const double range = c.raw_max - c.raw_min;
            for (Index i = 0; i < design.rows(); ++i) out(i, j) = (design(i, j) - c.raw_min) / range;
        }
        return out;
    }
};

/// Fits column-wise min/max on `design` and returns the scaled matrix with its map.
/// Columns of all ones are treated as the intercept and left untouched.
inline std::pair<Matrix, ScalingMap> minmax_fit_apply(const Matrix& design) {
    ScalingMap map;
    map.columns.resize(static_cast<std::size_t>(design.cols()));
    if (design.rows() == 0) throw InvalidInput("empty design matrix");
    for (Index j = 0; j < design.cols(); ++j) {
        ColumnScale& c = map.columns[static_cast<std::size_t>(j)];
        const auto col = design.col(j);
        if (!col.allFinite()) throw InvalidInput("design column " + std::to_string(j) + " has non-finite values");
        c.raw_min = col.minCoeff();
        c.raw_max = col.maxCoeff();
        if (c.raw_min == 1.0 && c.raw_max == 1.0) {
            c.intercept = true;
            c.min = c.max = c.mean = 1.0;
            continue;
        }
        if (!(c.raw_max > c.raw_min)) throw DataError("constant regressor in design column " + std::to_string(j));
    }
    Matrix scaled = map.apply(design);
    for (Index j = 0; j < design.cols(); ++j) {
        ColumnScale& c = map.columns[static_cast<std::size_t>(j)];
        if (c.intercept) continue;
        c.min = scaled.col(j).minCoeff();
        c.max = scaled.col(j).maxCoeff();
        c.mean = scaled.col(j).mean();
    }
    return {std::move(scaled), std::move(map)};
}

}  // namespace gncqr
