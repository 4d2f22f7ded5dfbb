#ifndef COVREG_CONDVAR_HPP
#define COVREG_CONDVAR_HPP

#include <functional>
#include <utility>

#include "covreg/model.hpp"
#include "covreg/numkit.hpp"

namespace covreg {

/// Fourth moment of the standardized errors, either pooled (length 1) or
/// per coordinate (length p).  Cauchy-Schwarz forces mu4 >= 1.
struct ErrorMoments {
  Vector mu4;

  static ErrorMoments pooled(double m4);
  static ErrorMoments per_coordinate(Vector m4);

  /// Fourth moment for coordinate j (broadcasts the pooled value).
  double at(int j) const { return mu4.size() == 1 ? mu4[0] : mu4[j]; }
  bool valid_for(int p) const { return mu4.size() == 1 || mu4.size() == p; }
};

namespace condvar {

/// Closed form of V(X) = Cov[vec(YY^T)|X] under Y = C^{1/2} eps with
/// independent standardized errors:
///   V = (S (x) S) (I + K_{p,p} + sum_j (mu4_j - 3) E_jj (x) E_jj) (S (x) S),
/// where S is the symmetric square root of C.
PsdMatrix cond_cov_vecyy(const SymMatrix& c, const ErrorMoments& moments);

/// Pooled estimate of the fourth moment from standardized residuals,
/// clipped below at 1.
ErrorMoments estimate_mu4(const Matrix& residuals);

/// V(X) as an operator.  apply() costs O(p^3) instead of the O(p^4) dense
/// product; the matrix itself is never materialized.
class CondCov {
 public:
  CondCov() = default;
  CondCov(const SymMatrix& c, const ErrorMoments& moments);

  int p() const { return s_.dim(); }

  /// V * v for an arbitrary vector (the antisymmetric part is annihilated).
  Vector apply(const Vector& v) const;

  /// mat(V * vec(R)) for symmetric R.
  Matrix apply_sym(const Matrix& r) const;

  /// Materializes the p^2 x p^2 matrix (small-p paths and tests).
  PsdMatrix dense() const;

 private:
  SymMatrix s_;  // C^{1/2}
  Vector mu4_;   // per-coordinate fourth moments, length p
};

}  // namespace condvar

/// Symmetric PSD weight matrix W(X) in operator form.  The inverse-V weight
/// uses the closed-form Moore-Penrose inverse
///   V^+ = (S^{-1} (x) S^{-1}) ((I+K)/4 + sum_j c_j E_jj (x) E_jj) (S^{-1} (x) S^{-1}),
/// c_j = 1/(mu4_j - 1) - 1/2, with the diagonal direction dropped when
/// mu4_j == 1.  Equality with numkit::pinv of the dense V is covered by
/// tests.
class Weight {
 public:
  enum class Kind { Identity, InverseV, Custom };

  Weight() = default;

  static Weight identity(int p);
  /// W = pseudo-inverse of cond_cov_vecyy(c, moments).
  static Weight inverse_cond_cov(const SymMatrix& c, const ErrorMoments& moments);
  /// Dense user weight; throws NonPsdCustomWeight when not PSD.
  static Weight custom(const PsdMatrix& w);

  Kind kind() const { return kind_; }
  int p() const { return p_; }

  Vector apply(const Vector& v) const;
  /// mat(W * vec(R)) for symmetric R.
  Matrix apply_sym(const Matrix& r) const;
  /// r^T W r.
  double quadform(const Vector& r) const;
  /// vec(R)^T W vec(R) for symmetric R.
  double quadform_sym(const Matrix& r) const;

  /// Materializes the p^2 x p^2 matrix.
  PsdMatrix dense() const;

 private:
  Kind kind_ = Kind::Identity;
  int p_ = 0;
  SymMatrix s_inv_;   // C^{-1/2}   (InverseV)
  Vector diag_coef_;  // c_j        (InverseV)
  Matrix dense_;      // Custom
};

/// Recipe for constructing W(X_i): identity, the pseudo-inverse of the true
/// conditional covariance (KnownV), its plug-in estimate from a pilot fit
/// (EstimatedV), or a user-provided matrix per observation.
struct WeightSpec {
  enum class Kind { Identity, KnownV, EstimatedV, Custom };

  Kind kind = Kind::Identity;
  ParamVector beta_for_v;  // KnownV: beta0; EstimatedV: pilot estimate
  ErrorMoments moments;    // KnownV: true moments; EstimatedV: pooled mu4-hat
  std::function<PsdMatrix(const CovariateSet&)> provider;

  static WeightSpec identity();
  static WeightSpec known_v(ParamVector beta0, ErrorMoments moments);
  /// Placeholder resolved by the FGLS pipeline, which fills beta_for_v and
  /// moments from a pilot OLS fit.
  static WeightSpec estimated_v();
  static WeightSpec custom(std::function<PsdMatrix(const CovariateSet&)> fn);

  bool resolved() const;
};

namespace condvar {

/// Builds the weight operator for one observation.
Weight build_weight(const WeightSpec& spec, const ModelFamily& family,
                    const CovariateSet& x);

/// Convenience: weight operators for every observation of a dataset.
std::vector<Weight> build_weights(const WeightSpec& spec, const Dataset& data);

}  // namespace condvar
}  // namespace covreg

#endif  // COVREG_CONDVAR_HPP
