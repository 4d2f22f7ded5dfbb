#include "covreg/model.hpp"

#include <cmath>
#include <limits>

namespace covreg {
namespace model {

namespace {

constexpr double kNetworkBetaBound = 0.99;
constexpr double kNetworkSigmaFloor = 1e-8;

void check_shapes(const ModelFamily& family, const CovariateSet& X) {
  if (X.family != family.kind) {
    throw DimensionMismatch("covariate set family does not match model family");
  }
  if (family.kind == FamilyKind::Linear) {
    if (static_cast<int>(X.designs.size()) != family.K) {
      throw DimensionMismatch("linear covariate set holds " +
                              std::to_string(X.designs.size()) +
                              " design matrices, family expects " +
                              std::to_string(family.K));
    }
  } else {
    if (X.designs.size() != 1) {
      throw DimensionMismatch("network covariate set must hold one adjacency");
    }
    if (family.K != 2) {
      throw DimensionMismatch("network family has K = 2");
    }
  }
  for (const SymMatrix& d : X.designs) {
    if (d.dim() != family.p) {
      throw DimensionMismatch("design matrix dimension " +
                              std::to_string(d.dim()) + " != p = " +
                              std::to_string(family.p));
    }
  }
}

void check_args(const ModelFamily& family, const ParamVector& beta,
                const CovariateSet& X) {
  if (beta.size() != family.K) {
    throw DimensionMismatch("parameter vector has length " +
                            std::to_string(beta.size()) + ", family expects " +
                            std::to_string(family.K));
  }
  if (!beta.allFinite()) throw Error("parameter vector has non-finite entries");
  check_shapes(family, X);
}

// Cholesky-based inverse of (I - beta1 X); the factor is reused for both
// eval and grad.  Throws SingularResolvent outside the stable region.
Matrix resolvent_inverse(const SymMatrix& adj, double beta1) {
  const int p = adj.dim();
  Matrix m = Matrix::Identity(p, p) - beta1 * adj.mat();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularResolvent("(I - beta1 X) is not positive definite at beta1 = " +
                            std::to_string(beta1));
  }
  return llt.solve(Matrix::Identity(p, p));
}

}  // namespace

ParamBox param_box(const ModelFamily& family) {
  ParamBox box;
  if (family.kind == FamilyKind::NetworkAr) {
    box.lower = Vector(2);
    box.upper = Vector(2);
    box.lower << -kNetworkBetaBound, kNetworkSigmaFloor;
    box.upper << kNetworkBetaBound, std::numeric_limits<double>::infinity();
    box.active = true;
  } else {
    const double inf = std::numeric_limits<double>::infinity();
    box.lower = Vector::Constant(family.K, -inf);
    box.upper = Vector::Constant(family.K, inf);
    box.active = false;
  }
  return box;
}

SymMatrix eval(const ModelFamily& family, const ParamVector& beta,
               const CovariateSet& X) {
  check_args(family, beta, X);
  if (family.kind == FamilyKind::Linear) {
    Matrix c = Matrix::Zero(family.p, family.p);
    for (int k = 0; k < family.K; ++k) c += beta[k] * X.designs[k].mat();
    return SymMatrix::trusted(std::move(c));
  }
  const double beta1 = beta[0];
  const double sigma2 = beta[1];
  if (std::abs(beta1) > kNetworkBetaBound + 1e-12) {
    throw SingularResolvent("|beta1| exceeds the stable bound 0.99");
  }
  if (sigma2 <= 0.0) {
    throw NotPositiveDefinite(sigma2);
  }
  Matrix inv = resolvent_inverse(X.designs[0], beta1);
  return SymMatrix(sigma2 * inv * inv);
}

SymMatrix grad(const ModelFamily& family, const ParamVector& beta,
               const CovariateSet& X, int k) {
  check_args(family, beta, X);
  if (k < 0 || k >= family.K) {
    throw DimensionMismatch("gradient index " + std::to_string(k) +
                            " out of range for K = " + std::to_string(family.K));
  }
  if (family.kind == FamilyKind::Linear) {
    return X.designs[k];
  }
  const double beta1 = beta[0];
  const double sigma2 = beta[1];
  Matrix inv = resolvent_inverse(X.designs[0], beta1);
  if (k == 0) {
    // X commutes with (I - beta1 X)^{-1}, so the product is symmetric.
    return SymMatrix(2.0 * sigma2 * inv * inv * inv * X.designs[0].mat());
  }
  return SymMatrix(inv * inv);
}

std::pair<ModelFamily, CovariateSet> from_vectors(
    const std::vector<Vector>& vectors, bool intercept) {
  if (vectors.empty() && !intercept) {
    throw DimensionMismatch("from_vectors needs at least one vector");
  }
  const int p = vectors.empty() ? 0 : static_cast<int>(vectors.front().size());
  for (const Vector& v : vectors) {
    if (v.size() != p) {
      throw DimensionMismatch("from_vectors: vectors must share dimension");
    }
  }
  CovariateSet X;
  X.family = FamilyKind::Linear;
  if (intercept) X.designs.push_back(SymMatrix::identity(p));
  for (const Vector& v : vectors) {
    X.designs.push_back(SymMatrix::trusted(v * v.transpose()));
  }
  ModelFamily family{FamilyKind::Linear, static_cast<int>(X.designs.size()), p};
  return {family, std::move(X)};
}

void validate(const ModelFamily& family, const CovariateSet& X, double tol) {
  check_shapes(family, X);
  if (family.kind == FamilyKind::NetworkAr) {
    const Matrix& a = X.designs[0].mat();
    if (a.diagonal().cwiseAbs().maxCoeff() > tol) {
      throw ValidationError("X", "network adjacency must have zero diagonal");
    }
    for (int r = 0; r < a.rows(); ++r) {
      const double s = a.row(r).sum();
      if (std::abs(s) > tol && std::abs(s - 1.0) > tol) {
        throw ValidationError("X", "network adjacency row " + std::to_string(r) +
                                       " sums to " + std::to_string(s) +
                                       ", expected 0 or 1");
      }
    }
  }
}

double min_cov_eigenvalue(const ModelFamily& family, const ParamVector& beta,
                          const std::vector<CovariateSet>& X) {
  double lo = std::numeric_limits<double>::infinity();
  for (const CovariateSet& x : X) {
    lo = std::min(lo, numkit::min_eigenvalue(eval(family, beta, x)));
  }
  return lo;
}

}  // namespace model
}  // namespace covreg
