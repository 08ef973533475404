#pragma once

#include "siftlab/error.hpp"
#include "siftlab/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace siftlab {

// All reductions below accumulate in double regardless of the input scalar.

/// Numerically stable softmax (max-subtracted). Throws InvalidInput on an
/// empty or non-finite input.
template <typename Derived>
ScoreRow softmax(const Eigen::MatrixBase<Derived>& logits) {
    if (logits.size() == 0) {
        throw InvalidInput("softmax: empty input");
    }
    const Eigen::VectorXd x = logits.template cast<double>();
    if (!x.allFinite()) {
        throw InvalidInput("softmax: non-finite logit");
    }
    ScoreRow out = (x.array() - x.maxCoeff()).exp().matrix();
    out /= out.sum();
    return out;
}

/// q K^T / sqrt(head_dim): one logit per cached key.
template <typename DerivedQ, typename DerivedK>
Eigen::VectorXd scaled_dot_scores(const Eigen::MatrixBase<DerivedQ>& q,
                                  const Eigen::MatrixBase<DerivedK>& keys, Index head_dim) {
    if (q.size() != head_dim || keys.cols() != head_dim) {
        throw ShapeError("scaled_dot_scores: q has " + std::to_string(q.size()) + " elements, keys have " +
                         std::to_string(keys.cols()) + " columns, head_dim is " +
                         std::to_string(head_dim));
    }
    if (keys.rows() < 1) {
        throw ShapeError("scaled_dot_scores: no keys");
    }
    const Eigen::VectorXd qd = q.template cast<double>();
    Eigen::VectorXd out = keys.template cast<double>() * qd;
    out /= std::sqrt(static_cast<double>(head_dim));
    return out;
}

/// Linear-interpolation quantile between order statistics, rank h = tau*(n-1).
/// Runs in O(n) via two selections instead of a full sort.
template <typename Derived>
double quantile(const Eigen::MatrixBase<Derived>& values, double tau) {
    if (values.size() == 0) {
        throw InvalidInput("quantile: empty input");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw InvalidInput("quantile: tau must lie in [0, 1]");
    }
    std::vector<double> v(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) {
        v[static_cast<std::size_t>(i)] = static_cast<double>(values(i));
    }
    const double h = tau * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double lower = v[lo];
    if (frac == 0.0 || lo + 1 >= v.size()) {
        return lower;
    }
    const double upper = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return lower + frac * (upper - lower);
}

/// sum_i scores[i] * values.row(i)
template <typename DerivedS, typename DerivedV>
Eigen::VectorXd weighted_sum(const Eigen::MatrixBase<DerivedS>& scores,
                             const Eigen::MatrixBase<DerivedV>& values) {
    if (scores.size() != values.rows()) {
        throw ShapeError("weighted_sum: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(values.rows()) + " value rows");
    }
    if (values.rows() == 0) {
        return Eigen::VectorXd::Zero(values.cols());
    }
    return values.template cast<double>().transpose() * scores.template cast<double>();
}

}  // namespace siftlab
