#pragma once

#include "siftlab/error.hpp"
#include "siftlab/types.hpp"

#include <string>

namespace siftlab {

/// Append-only key/value store for a single attention head. Storage grows
/// geometrically; rows already appended are never moved relative to each
/// other nor modified. No eviction happens here.
template <typename Scalar>
class KvCache {
public:
    using MatrixType = Matrix<Scalar>;

    explicit KvCache(Index head_dim) : head_dim_(head_dim) {
        if (head_dim < 1) {
            throw InvalidInput("KvCache: head_dim must be positive");
        }
    }

    Index head_dim() const noexcept { return head_dim_; }
    Index size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

    template <typename DerivedK, typename DerivedV>
    void append(const Eigen::MatrixBase<DerivedK>& k, const Eigen::MatrixBase<DerivedV>& v) {
        if (k.size() != head_dim_ || v.size() != head_dim_) {
            throw ShapeError("KvCache::append: expected vectors of length " + std::to_string(head_dim_) +
                             ", got " + std::to_string(k.size()) + " and " + std::to_string(v.size()));
        }
        if (size_ == keys_.rows()) {
            const Index capacity = size_ == 0 ? 16 : 2 * size_;
            keys_.conservativeResize(capacity, head_dim_);
            values_.conservativeResize(capacity, head_dim_);
        }
        keys_.row(size_) = k.template cast<Scalar>().transpose();
        values_.row(size_) = v.template cast<Scalar>().transpose();
        ++size_;
    }

    auto keys() const { return keys_.topRows(size_); }
    auto values() const { return values_.topRows(size_); }

    /// Rows of V at `indices` (strictly increasing, each < size()).
    MatrixType gather_values(const IndexSet& indices) const {
        MatrixType out(static_cast<Index>(indices.size()), head_dim_);
        for (std::size_t j = 0; j < indices.size(); ++j) {
            const Index i = indices[j];
            if (i < 0 || i >= size_) {
                throw IndexError("gather_values: index " + std::to_string(i) + " outside cache of length " +
                                 std::to_string(size_));
            }
            if (j > 0 && i <= indices[j - 1]) {
                throw InvalidInput("gather_values: indices must be strictly increasing");
            }
            out.row(static_cast<Index>(j)) = values_.row(i);
        }
        return out;
    }

private:
    Index head_dim_;
    Index size_ = 0;
    MatrixType keys_;
    MatrixType values_;
};

}  // namespace siftlab
