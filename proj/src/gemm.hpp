#pragma once

#include <Eigen/Core>

namespace ymwml::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// C (m x n) += op(A) * op(B), all row-major and densely packed.
// op(A) is m x k, op(B) is k x n.
inline void gemm_acc(bool trans_a, bool trans_b, long m, long n, long k, const double* a,
                     const double* b, double* c) {
  Map cm(c, m, n);
  if (!trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
  } else if (!trans_a && trans_b) {
    cm.noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
  } else if (trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
  } else {
    cm.noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, n, k).transpose();
  }
}

}  // namespace ymwml::detail
