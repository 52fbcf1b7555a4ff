#pragma once

#include <Eigen/Dense>

#include "gopnet/errors.hpp"

namespace gopnet {

// Dense row-major storage throughout; samples are rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// [H, 1]: appends a constant-one column so a linear readout learns a bias.
inline Matrix augment_ones(const Matrix& h) {
    Matrix a(h.rows(), h.cols() + 1);
    a.leftCols(h.cols()) = h;
    a.col(h.cols()).setOnes();
    return a;
}

// Index of the row maximum, lowest index winning ties.
inline int argmax_row(const Matrix& m, Eigen::Index row) {
    int best = 0;
    double best_value = m(row, 0);
    for (int j = 1; j < m.cols(); ++j) {
        if (m(row, j) > best_value) {
            best_value = m(row, j);
            best = j;
        }
    }
    return best;
}

inline void require(bool condition, const std::string& message) {
    if (!condition) throw DimensionError(message);
}

}  // namespace gopnet
