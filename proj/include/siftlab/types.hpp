#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace siftlab {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-major so that a cached key/value row is contiguous.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Post-softmax attention weights for one decode step. Always 64-bit.
using ScoreRow = Eigen::VectorXd;

/// Strictly increasing positions into the KV cache.
using IndexSet = std::vector<Index>;

}  // namespace siftlab
