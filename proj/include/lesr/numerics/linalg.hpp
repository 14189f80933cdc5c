#pragma once

#include "lesr/numerics/tensor.hpp"

namespace lesr::num {

// Row-wise softmax with per-row max subtraction. Throws DomainError on any
// non-finite entry.
template <class T>
Mat<T> softmax_rows(const Mat<T>& logits);

struct PcaResult {
  MatD components;          // d×D, orthonormal rows, descending variance
  MatD projection;          // n×d, centered rows projected onto components
  RowVec<double> mean;      // 1×D column means removed before decomposition
  RowVec<double> variance;  // 1×d explained variance per component
  bool zero_variance = false;
};

// Principal components of the rows of x via a thin SVD of the centered
// matrix. Each component is sign-normalized so that its largest-magnitude
// coordinate is positive (first such coordinate on ties).
//
// Requires n ≥ 2 and d ≤ min(n, D). If every row equals the mean, the
// projection is zero, the components are the first d unit vectors, and
// zero_variance is set.
PcaResult pca_reduce(const MatD& x, Index d);

}  // namespace lesr::num
