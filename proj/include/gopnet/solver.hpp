#pragma once

// Closed-form output layer: per-sample class weighting and the weighted ridge
// solve for the linear readout. The normal equations are factorized with a
// Cholesky decomposition rather than inverted explicitly.

#include <vector>

#include "gopnet/errors.hpp"
#include "gopnet/matrix.hpp"

namespace gopnet {

struct ClassWeighting {
    Vector per_class;   // s_c, length C
    Vector per_sample;  // s_i = s_{class(i)}, length N
};

// Inverse-frequency weights normalized so the per-sample weights sum to N:
// s_c = N / (C * n_c). Balanced classes reduce to unit weights, which keeps
// the weighted loss commensurate with plain MSE across class skews.
inline ClassWeighting class_weights(const std::vector<int>& labels, int n_classes) {
    if (n_classes < 1) throw DomainError("class_weights: n_classes must be positive");
    std::vector<long> counts(n_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw DomainError("class_weights: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(n_classes) + ")");
        ++counts[labels[i]];
    }
    const double n = static_cast<double>(labels.size());
    ClassWeighting w;
    w.per_class.resize(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            throw DegenerateClassError("class " + std::to_string(c) +
                                       " has no training samples; its weight is undefined");
        w.per_class[c] = n / (n_classes * static_cast<double>(counts[c]));
    }
    w.per_sample.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) w.per_sample[i] = w.per_class[labels[i]];
    return w;
}

// All-ones weighting for the unweighted variant.
inline ClassWeighting uniform_weighting(int n_samples, int n_classes) {
    ClassWeighting w;
    w.per_class = Vector::Ones(n_classes);
    w.per_sample = Vector::Ones(n_samples);
    return w;
}

struct RidgeProblem {
    Matrix hidden;  // N x (D_h + 1), constant column included
    Matrix targets; // N x C one-hot
    double lambda = 1.0;
    ClassWeighting weighting;
};

// Minimizes sum_i s_i ||H_i W - Y_i||^2 + lambda ||W||_F^2 via the normal
// equations (H^T diag(s) H + lambda I) W = H^T diag(s) Y.
inline Matrix solve_output_weights(const Matrix& h, const Matrix& y,
                                   const Vector& sample_weights, double lambda) {
    require(h.rows() == y.rows(), "solve_output_weights: row count mismatch");
    require(sample_weights.size() == h.rows(),
            "solve_output_weights: sample weight count mismatch");
    if (lambda < 0.0) throw DomainError("solve_output_weights: lambda must be non-negative");
    if (!h.allFinite() || !y.allFinite() || !sample_weights.allFinite())
        throw NumericError("solve_output_weights: non-finite input");

    const Matrix hw = sample_weights.asDiagonal() * h;
    Matrix gram = h.transpose() * hw;
    gram.diagonal().array() += lambda;
    const Matrix rhs = hw.transpose() * y;

    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        if (lambda == 0.0)
            throw SingularityError(
                "solve_output_weights: singular Gram matrix with lambda = 0");
        throw NumericError("solve_output_weights: Cholesky factorization failed");
    }
    Matrix w = llt.solve(rhs);
    if (!w.allFinite()) throw NumericError("solve_output_weights: non-finite solution");
    return w;
}

inline Matrix solve_output_weights(const RidgeProblem& problem) {
    return solve_output_weights(problem.hidden, problem.targets,
                                problem.weighting.per_sample, problem.lambda);
}

// (1/N) sum_i s_i ||L_i - Y_i||^2. The scalar tracked by every convergence
// test; shared by the solver and the training loop.
inline double weighted_mse(const Matrix& logits, const Matrix& y, const Vector& sample_weights) {
    require(logits.rows() == y.rows() && logits.cols() == y.cols(),
            "weighted_mse: logits/target shape mismatch");
    require(sample_weights.size() == logits.rows(), "weighted_mse: sample weight count mismatch");
    const Matrix residual = logits - y;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < residual.rows(); ++i)
        acc += sample_weights[i] * residual.row(i).squaredNorm();
    return acc / static_cast<double>(residual.rows());
}

inline double weighted_loss(const Matrix& h, const Matrix& w, const Matrix& y,
                            const Vector& sample_weights) {
    require(h.cols() == w.rows(), "weighted_loss: hidden/weight shape mismatch");
    return weighted_mse(h * w, y, sample_weights);
}

}  // namespace gopnet
