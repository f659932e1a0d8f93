#pragma once

#include "lorid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace lorid {

/// Thin SVD m = u * diag(s) * vt with k = min(rows, cols).
template <typename Scalar>
struct SvdResult {
  MatrixX<Scalar> u;   // rows x k, orthonormal columns
  VectorX<Scalar> s;   // k values, descending, nonnegative
  MatrixX<Scalar> vt;  // k x cols, orthonormal rows
};

namespace detail {

// Extends the columns of q flagged in `missing` so that q has orthonormal
// columns. Used when a singular value is zero and its left vector is undefined.
template <typename Scalar>
void complete_orthonormal(MatrixX<Scalar>& q, const std::vector<bool>& missing) {
  const Eigen::Index n = q.rows();
  Eigen::Index candidate = 0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    while (true) {
      if (candidate >= n)
        throw std::logic_error("svd: unable to complete orthonormal basis");
      VectorX<Scalar> v = VectorX<Scalar>::Unit(n, candidate++);
      // Two Gram-Schmidt passes against every column already fixed.
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index k = 0; k < q.cols(); ++k) {
          if (k == j || (missing[static_cast<std::size_t>(k)] && k > j)) continue;
          v -= q.col(k).dot(v) * q.col(k);
        }
      const Scalar norm = v.norm();
      if (norm > Scalar(1e-6)) {
        q.col(j) = v / norm;
        break;
      }
    }
  }
}

// One-sided (Hestenes) Jacobi on a tall matrix (rows >= cols).
template <typename Scalar>
SvdResult<Scalar> jacobi_svd_tall(MatrixX<Scalar> a) {
  const Eigen::Index n = a.cols();
  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  // TODO: apply rotations with Eigen::JacobiRotation so the column updates vectorise.
  constexpr int kMaxSweeps = 80;

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const Scalar alpha = a.col(i).squaredNorm();
        const Scalar beta = a.col(j).squaredNorm();
        const Scalar gamma = a.col(i).dot(a.col(j));
        if (gamma == Scalar(0) ||
            std::abs(gamma) <= eps * std::sqrt(alpha * beta))
          continue;
        converged = false;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
          const Scalar ai = a(r, i);
          const Scalar aj = a(r, j);
          a(r, i) = c * ai - s * aj;
          a(r, j) = s * ai + c * aj;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const Scalar vi = v(r, i);
          const Scalar vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
  }
  if (!converged) throw std::runtime_error("svd: Jacobi sweeps did not converge");

  VectorX<Scalar> sigma(n);
  for (Eigen::Index k = 0; k < n; ++k) sigma[k] = a.col(k).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return sigma[x] > sigma[y]; });

  SvdResult<Scalar> out;
  out.u.resize(a.rows(), n);
  out.s.resize(n);
  out.vt.resize(n, n);
  const Scalar floor = sigma.size() ? sigma.maxCoeff() * eps * Scalar(a.rows()) : Scalar(0);
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.s[k] = sigma[src];
    out.vt.row(k) = v.col(src).transpose();
    if (sigma[src] > floor && sigma[src] > Scalar(0)) {
      out.u.col(k) = a.col(src) / sigma[src];
    } else {
      out.u.col(k).setZero();
      missing[static_cast<std::size_t>(k)] = true;
    }
  }
  if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; }))
    complete_orthonormal(out.u, missing);
  return out;
}

}  // namespace detail

/// Thin SVD by one-sided Jacobi rotations. Accurate to working precision for
/// the few-hundred-column matrices used here; cost grows as rows * cols^2
/// per sweep, so wide inputs are transposed first.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) throw std::invalid_argument("svd: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("svd: non-finite input");
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall<Scalar>(m.eval());
  auto t = detail::jacobi_svd_tall<Scalar>(m.transpose().eval());
  SvdResult<Scalar> out;
  out.u = t.vt.transpose();
  out.s = std::move(t.s);
  out.vt = t.u.transpose();
  return out;
}

}  // namespace lorid
