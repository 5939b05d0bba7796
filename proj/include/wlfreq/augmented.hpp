// SPDX-License-Identifier: Apache-2.0
//
// Augmented complex vectors and matrices.
//
// A widely linear quantity x^a = [x; conj(x)] carries no information in its
// bottom half, so only the top half is stored. Matrices acting on augmented
// vectors have the block form
//
//     [ B11        B12       ]
//     [ conj(B12)  conj(B11) ]
//
// and only B11 and B12 are stored. The 2n-dimensional forms are built on
// demand with materialize().

#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace wlfreq {

using cd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Unconstrained 2p x 2n complex matrix. Intermediate filter products live
/// here until enforce_structure() projects them back.
using GeneralAugmented2n = CMat;

class AugmentedVector {
public:
  AugmentedVector() = default;
  explicit AugmentedVector(CVec top) : top_(std::move(top)) {}

  /// Accepts a materialized 2n vector whose halves are conjugate within
  /// `tol` (relative to the vector max-norm). The stored top half is the
  /// average of the top and the conjugated bottom.
  static AugmentedVector from_materialized(const CVec& full, double tol = 1e-9);

  Eigen::Index size() const { return top_.size(); }
  const CVec& top() const { return top_; }
  CVec& top() { return top_; }
  cd operator[](Eigen::Index i) const { return top_(i); }

  CVec materialize() const;

private:
  CVec top_;
};

class AugmentedMatrix {
public:
  AugmentedMatrix() = default;
  AugmentedMatrix(CMat block11, CMat block12);

  static AugmentedMatrix zero(Eigen::Index rows, Eigen::Index cols);
  static AugmentedMatrix identity(Eigen::Index n);
  /// Diagonal block11 with the given real entries and block12 = 0.
  static AugmentedMatrix diagonal(const Eigen::VectorXd& diag);

  Eigen::Index rows() const { return b11_.rows(); }
  Eigen::Index cols() const { return b11_.cols(); }
  const CMat& block11() const { return b11_; }
  const CMat& block12() const { return b12_; }
  CMat& block11() { return b11_; }
  CMat& block12() { return b12_; }

  CMat materialize() const;

  AugmentedVector operator*(const AugmentedVector& v) const;
  AugmentedMatrix operator*(const AugmentedMatrix& m) const;

private:
  CMat b11_;
  CMat b12_;
};

/// [x; conj(x)].
AugmentedVector augment(const CVec& x);

/// Sample covariance C = mean(x x^H) and pseudo-covariance R = mean(x x^T),
/// returned as block11 = C, block12 = R.
/// Throws std::invalid_argument on an empty or ragged sample set.
AugmentedMatrix augmented_moments(std::span<const CVec> samples);

/// Maximum entrywise deviation of M from conjugate block structure, i.e.
/// max |M - flip(M)| / 2 where flip swaps and conjugates the blocks.
double structure_deviation(const GeneralAugmented2n& m);

/// Projects M onto conjugate block structure as (M + flip(M)) / 2.
/// Throws StructureError when the deviation exceeds tol * max|M|.
AugmentedMatrix enforce_structure(const GeneralAugmented2n& m, double tol = 1e-9);

double max_abs(const CMat& m);

}  // namespace wlfreq
