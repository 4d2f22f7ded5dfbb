#ifndef COVREG_MODEL_HPP
#define COVREG_MODEL_HPP

#include <utility>
#include <vector>

#include "covreg/numkit.hpp"

namespace covreg {

enum class FamilyKind { Linear, NetworkAr };

/// Parametric covariance map beta -> C_beta(X): either a linear combination
/// of K symmetric design matrices, or sigma^2 (I - beta1 X)^{-2} on a
/// row-normalized network adjacency matrix (K = 2, beta = (beta1, sigma^2)).
struct ModelFamily {
  FamilyKind kind = FamilyKind::Linear;
  int K = 0;
  int p = 0;
};

using ParamVector = Vector;

/// Per-observation explanatory data.  Linear: K design matrices.
/// NetworkAr: one adjacency matrix.
struct CovariateSet {
  FamilyKind family = FamilyKind::Linear;
  std::vector<SymMatrix> designs;

  int dim() const { return designs.empty() ? 0 : designs.front().dim(); }
};

/// n observations (X_i, Y_i); rows of Y are the response vectors.
struct Dataset {
  ModelFamily family;
  std::vector<CovariateSet> X;
  Matrix Y;  // n x p

  int n() const { return static_cast<int>(X.size()); }
  int p() const { return family.p; }
};

namespace model {

/// Box constraints on the parameter space; the network family restricts
/// |beta1| <= 0.99 and sigma^2 >= 1e-8, the linear family is unconstrained.
struct ParamBox {
  Vector lower;
  Vector upper;
  bool active = false;
};

ParamBox param_box(const ModelFamily& family);

/// Evaluates C_beta(X).
SymMatrix eval(const ModelFamily& family, const ParamVector& beta,
               const CovariateSet& X);

/// Analytic derivative of eval with respect to beta[k].
SymMatrix grad(const ModelFamily& family, const ParamVector& beta,
               const CovariateSet& X, int k);

/// Builds the rank-one linear family C = beta1 I + sum_k beta_k x_k x_k^T
/// from K-1 vectors.  With intercept=false the identity block is dropped.
std::pair<ModelFamily, CovariateSet> from_vectors(
    const std::vector<Vector>& vectors, bool intercept = true);

/// Validates a covariate set against its family invariants (shared
/// dimension; network adjacency: zero diagonal, rows summing to 1 or 0).
void validate(const ModelFamily& family, const CovariateSet& X,
              double tol = 1e-9);

/// Smallest eigenvalue of C_beta(X_i) over all observations.
double min_cov_eigenvalue(const ModelFamily& family, const ParamVector& beta,
                          const std::vector<CovariateSet>& X);

}  // namespace model
}  // namespace covreg

#endif  // COVREG_MODEL_HPP
