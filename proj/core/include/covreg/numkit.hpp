#ifndef COVREG_NUMKIT_HPP
#define COVREG_NUMKIT_HPP

#include <Eigen/Dense>

#include "covreg/errors.hpp"

namespace covreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense square matrix whose storage is exactly symmetric: entry (j,k)
/// and entry (k,j) are the same double for every j,k.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Symmetrizes `m` as (m + m^T)/2.  If `check_tol` is nonnegative, first
  /// requires max |m - m^T| <= check_tol * max(1, max|m|).
  explicit SymMatrix(const Matrix& m, double check_tol = -1.0);

  /// Adopts `m`, trusting that it is already exactly symmetric.
  static SymMatrix trusted(Matrix m);

  static SymMatrix identity(int p) { return trusted(Matrix::Identity(p, p)); }
  static SymMatrix zero(int p) { return trusted(Matrix::Zero(p, p)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Alias used where the contract additionally promises positive
/// semidefiniteness (checked at construction sites, not by the type).
using PsdMatrix = SymMatrix;

namespace numkit {

/// Relative tolerance deciding positive definiteness: C counts as PD when
/// lambda_min > kPdTolFactor * lambda_max.
inline constexpr double kPdTolFactor = 1e-10;

/// Default numerical-rank rule for pseudo-inverses: eigenvalues below
/// dim * machine epsilon * lambda_max are treated as zero.
double default_rank_tol(int dim);

/// Column-major stacking of a p x p matrix into a p^2 vector.
Vector vec(const Matrix& m);
inline Vector vec(const SymMatrix& m) { return vec(m.mat()); }

/// Inverse of vec: reshapes a length-p^2 vector into a p x p matrix.
Matrix mat(const Vector& v, int p);

/// Result of a symmetric square root: S with S*S = C, plus its inverse.
struct SqrtPair {
  SymMatrix sqrt;
  SymMatrix inv_sqrt;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Symmetric square root of a positive definite matrix.
/// Throws NotPositiveDefinite when lambda_min <= kPdTolFactor * lambda_max.
SymMatrix sym_sqrt(const SymMatrix& c);

/// Computes the square root and its inverse from one eigendecomposition.
SqrtPair sym_sqrt_pair(const SymMatrix& c);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via
/// eigendecomposition.  Eigenvalues below rank_tol * lambda_max are zeroed;
/// negative rank_tol selects default_rank_tol(dim).
PsdMatrix pinv(const PsdMatrix& v, double rank_tol = -1.0);

/// Commutation matrix K_{p,p}: K * vec(A) == vec(A^T) for every p x p A.
Matrix commutation(int p);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const SymMatrix& c);

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
double spectral_norm_sym(const Matrix& m);

/// Upper quantile of the standard normal distribution.
double normal_quantile(double prob);

}  // namespace numkit
}  // namespace covreg

#endif  // COVREG_NUMKIT_HPP
