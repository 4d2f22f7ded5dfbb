#include "covreg/numkit.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

namespace covreg {

SymMatrix::SymMatrix(const Matrix& m, double check_tol) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("SymMatrix requires a square matrix, got " +
                            std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw Error("SymMatrix entries must be finite");
  if (check_tol >= 0.0) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > check_tol * scale) {
      throw DimensionMismatch("matrix is not symmetric (max asymmetry " +
                              std::to_string(asym) + ")");
    }
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::trusted(Matrix m) {
  SymMatrix s;
  s.m_ = std::move(m);
  return s;
}

namespace numkit {

double default_rank_tol(int dim) {
  return dim * std::numeric_limits<double>::epsilon();
}

Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix mat(const Vector& v, int p) {
  if (v.size() != static_cast<Eigen::Index>(p) * p) {
    throw DimensionMismatch("mat: vector of length " + std::to_string(v.size()) +
                            " cannot reshape to " + std::to_string(p) + "x" +
                            std::to_string(p));
  }
  return Eigen::Map<const Matrix>(v.data(), p, p);
}

SqrtPair sym_sqrt_pair(const SymMatrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.mat());
  if (es.info() != Eigen::Success) {
    throw Error("eigendecomposition failed in sym_sqrt");
  }
  const Vector& lam = es.eigenvalues();
  const double lmin = lam.minCoeff();
  const double lmax = lam.maxCoeff();
  if (lmin <= kPdTolFactor * std::max(lmax, 0.0) || lmax <= 0.0) {
    throw NotPositiveDefinite(lmin);
  }
  const Vector root = lam.cwiseSqrt();
  Matrix s = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  Matrix si = es.eigenvectors() * root.cwiseInverse().asDiagonal() *
              es.eigenvectors().transpose();
  SqrtPair out;
  out.sqrt = SymMatrix(s);
  out.inv_sqrt = SymMatrix(si);
  out.lambda_min = lmin;
  out.lambda_max = lmax;
  return out;
}

SymMatrix sym_sqrt(const SymMatrix& c) { return sym_sqrt_pair(c).sqrt; }

PsdMatrix pinv(const PsdMatrix& v, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(v.mat());
  if (es.info() != Eigen::Success) {
    throw Error("eigendecomposition failed in pinv");
  }
  const Vector& lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (lmax <= 0.0) {
    // PSD with no positive spectrum: the zero matrix maps to itself.
    return SymMatrix::trusted(Matrix::Zero(v.dim(), v.dim()));
  }
  if (rank_tol < 0.0) rank_tol = default_rank_tol(v.dim());
  const double cutoff = rank_tol * lmax;
  Vector inv = Vector::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] > cutoff) inv[i] = 1.0 / lam[i];
  }
  Matrix out = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return SymMatrix(out);
}

Matrix commutation(int p) {
  if (p < 1) throw DimensionMismatch("commutation requires p >= 1");
  Matrix k = Matrix::Zero(static_cast<Eigen::Index>(p) * p,
                          static_cast<Eigen::Index>(p) * p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      // vec index of entry (r,c) is c*p + r; K maps it to the (c,r) slot.
      k(r * p + c, c * p + r) = 1.0;
    }
  }
  return k;
}

double min_eigenvalue(const SymMatrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.mat(), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_norm_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw ValidationError("prob", "normal quantile needs 0 < prob < 1");
  }
  boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, prob);
}

}  // namespace numkit
}  // namespace covreg
