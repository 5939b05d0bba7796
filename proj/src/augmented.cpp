// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/augmented.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "wlfreq/error.hpp"

namespace wlfreq {

double max_abs(const CMat& m)
{
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

AugmentedVector AugmentedVector::from_materialized(const CVec& full, double tol)
{
  if (full.size() % 2 != 0)
    throw std::invalid_argument("augmented vector must have even length");
  const Eigen::Index n = full.size() / 2;
  const CVec top = full.head(n);
  const CVec bottom = full.tail(n);
  const double scale = full.size() ? full.cwiseAbs().maxCoeff() : 0.0;
  const double dev = n ? (top - bottom.conjugate()).cwiseAbs().maxCoeff() / 2 : 0.0;
  if (dev > tol * scale)
    throw StructureError("augmented vector halves are not conjugate (deviation " +
                         std::to_string(dev) + ")");
  return AugmentedVector((top + bottom.conjugate()) / 2.0);
}

CVec AugmentedVector::materialize() const
{
  CVec full(2 * top_.size());
  full << top_, top_.conjugate();
  return full;
}

AugmentedMatrix::AugmentedMatrix(CMat block11, CMat block12)
    : b11_(std::move(block11)), b12_(std::move(block12))
{
  if (b11_.rows() != b12_.rows() || b11_.cols() != b12_.cols())
    throw std::invalid_argument("augmented matrix blocks must have equal shape");
}

AugmentedMatrix AugmentedMatrix::zero(Eigen::Index rows, Eigen::Index cols)
{
  return {CMat::Zero(rows, cols), CMat::Zero(rows, cols)};
}

AugmentedMatrix AugmentedMatrix::identity(Eigen::Index n)
{
  return {CMat::Identity(n, n), CMat::Zero(n, n)};
}

AugmentedMatrix AugmentedMatrix::diagonal(const Eigen::VectorXd& diag)
{
  const Eigen::Index n = diag.size();
  return {diag.cast<cd>().asDiagonal().toDenseMatrix(), CMat::Zero(n, n)};
}

CMat AugmentedMatrix::materialize() const
{
  const Eigen::Index p = b11_.rows();
  const Eigen::Index n = b11_.cols();
  CMat full(2 * p, 2 * n);
  full.topLeftCorner(p, n) = b11_;
  full.topRightCorner(p, n) = b12_;
  full.bottomLeftCorner(p, n) = b12_.conjugate();
  full.bottomRightCorner(p, n) = b11_.conjugate();
  return full;
}

AugmentedVector AugmentedMatrix::operator*(const AugmentedVector& v) const
{
  return AugmentedVector(b11_ * v.top() + b12_ * v.top().conjugate());
}

AugmentedMatrix AugmentedMatrix::operator*(const AugmentedMatrix& m) const
{
  // [A B; B* A*][C D; D* C*] = [AC + BD*, AD + BC*; ...]
  return {b11_ * m.b11_ + b12_ * m.b12_.conjugate(),
          b11_ * m.b12_ + b12_ * m.b11_.conjugate()};
}

AugmentedVector augment(const CVec& x)
{
  return AugmentedVector(x);
}

AugmentedMatrix augmented_moments(std::span<const CVec> samples)
{
  if (samples.empty())
    throw std::invalid_argument("augmented_moments: empty sample set");
  const Eigen::Index n = samples.front().size();
  CMat cov = CMat::Zero(n, n);
  CMat pseudo = CMat::Zero(n, n);
  for (const auto& x : samples) {
    if (x.size() != n)
      throw std::invalid_argument("augmented_moments: samples differ in length");
    cov.noalias() += x * x.adjoint();
    pseudo.noalias() += x * x.transpose();
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  cov *= inv;
  pseudo *= inv;
  // Round-off can break the exact symmetries; restore them.
  cov = (cov + cov.adjoint()).eval() / 2.0;
  pseudo = (pseudo + pseudo.transpose()).eval() / 2.0;
  return {cov, pseudo};
}

double structure_deviation(const GeneralAugmented2n& m)
{
  if (m.rows() % 2 != 0 || m.cols() % 2 != 0)
    throw std::invalid_argument("augmented matrix must have even dimensions");
  const Eigen::Index p = m.rows() / 2;
  const Eigen::Index n = m.cols() / 2;
  if (p == 0 || n == 0)
    return 0.0;
  const double d11 = (m.topLeftCorner(p, n) - m.bottomRightCorner(p, n).conjugate())
                         .cwiseAbs().maxCoeff();
  const double d12 = (m.topRightCorner(p, n) - m.bottomLeftCorner(p, n).conjugate())
                         .cwiseAbs().maxCoeff();
  return std::max(d11, d12) / 2.0;
}

AugmentedMatrix enforce_structure(const GeneralAugmented2n& m, double tol)
{
  const double dev = structure_deviation(m);
  const double scale = max_abs(m);
  if (dev > tol * scale)
    throw StructureError("matrix deviates from conjugate block structure by " +
                         std::to_string(dev) + " (limit " +
                         std::to_string(tol * scale) + ")");
  const Eigen::Index p = m.rows() / 2;
  const Eigen::Index n = m.cols() / 2;
  CMat b11 = (m.topLeftCorner(p, n) + m.bottomRightCorner(p, n).conjugate()) / 2.0;
  CMat b12 = (m.topRightCorner(p, n) + m.bottomLeftCorner(p, n).conjugate()) / 2.0;
  return {std::move(b11), std::move(b12)};
}

}  // namespace wlfreq
