#ifndef COVREG_TESTS_SUPPORT_HPP
#define COVREG_TESTS_SUPPORT_HPP

#include <random>

#include "covreg/model.hpp"
#include "covreg/numkit.hpp"

namespace covreg::testsupport {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& g) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = d(g);
  }
  return m;
}

inline SymMatrix random_symmetric(int p, std::mt19937_64& g) {
  return SymMatrix(random_matrix(p, p, g));
}

inline SymMatrix random_pd(int p, std::mt19937_64& g, double ridge = 0.5) {
  Matrix a = random_matrix(p, p, g);
  return SymMatrix(a * a.transpose() + ridge * Matrix::Identity(p, p));
}

/// Dense Kronecker product (test oracle only).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
    }
  }
  return out;
}

/// Random linear covariance family whose C_beta(X_i) stay comfortably PD:
/// X1 = I with beta1 in [2,4], the rest small symmetric with |beta_k| <= 0.3.
inline Dataset random_linear_dataset(int n, int p, int K, std::mt19937_64& g,
                                     ParamVector* beta_out = nullptr) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::uniform_real_distribution<double> u1(2.0, 4.0);
  Dataset data;
  data.family = ModelFamily{FamilyKind::Linear, K, p};
  ParamVector beta(K);
  beta[0] = u1(g);
  for (int k = 1; k < K; ++k) beta[k] = u(g);
  for (int i = 0; i < n; ++i) {
    CovariateSet x;
    x.family = FamilyKind::Linear;
    x.designs.push_back(SymMatrix::identity(p));
    for (int k = 1; k < K; ++k) {
      x.designs.push_back(SymMatrix((random_symmetric(p, g).mat() / p).eval()));
    }
    data.X.push_back(std::move(x));
  }
  data.Y = Matrix(n, p);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    SymMatrix c = model::eval(data.family, beta, data.X[i]);
    Matrix s = numkit::sym_sqrt(c).mat();
    Vector eps(p);
    for (int j = 0; j < p; ++j) eps[j] = d(g);
    data.Y.row(i) = (s * eps).transpose();
  }
  if (beta_out) *beta_out = beta;
  return data;
}

/// Symmetric doubly stochastic adjacency with zero diagonal via Sinkhorn
/// scaling of a random positive symmetric matrix.
inline SymMatrix sinkhorn_adjacency(int p, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Matrix a = Matrix::Zero(p, p);
  for (int r = 0; r < p; ++r) {
    for (int c = r + 1; c < p; ++c) a(r, c) = a(c, r) = u(g);
  }
  for (int it = 0; it < 500; ++it) {
    Vector rs = a.rowwise().sum();
    Vector scale = rs.cwiseSqrt().cwiseInverse();
    a = scale.asDiagonal() * a * scale.asDiagonal();
    a = 0.5 * (a + a.transpose()).eval();
  }
  // Final row normalization is exact up to rounding for symmetric Sinkhorn.
  return SymMatrix(a);
}

/// Ring graph: every node splits weight evenly over its two neighbors.
inline SymMatrix ring_adjacency(int p) {
  Matrix a = Matrix::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    a(j, (j + 1) % p) = 0.5;
    a(j, (j + p - 1) % p) = 0.5;
  }
  return SymMatrix(a);
}

inline Dataset network_dataset(int n, int p, double beta1, double sigma2,
                               std::mt19937_64& g) {
  Dataset data;
  data.family = ModelFamily{FamilyKind::NetworkAr, 2, p};
  ParamVector beta(2);
  beta << beta1, sigma2;
  std::normal_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    CovariateSet x;
    x.family = FamilyKind::NetworkAr;
    x.designs.push_back(ring_adjacency(p));
    data.X.push_back(std::move(x));
  }
  data.Y = Matrix(n, p);
  for (int i = 0; i < n; ++i) {
    SymMatrix c = model::eval(data.family, beta, data.X[i]);
    Matrix s = numkit::sym_sqrt(c).mat();
    Vector eps(p);
    for (int j = 0; j < p; ++j) eps[j] = d(g);
    data.Y.row(i) = (s * eps).transpose();
  }
  return data;
}

}  // namespace covreg::testsupport

#endif  // COVREG_TESTS_SUPPORT_HPP
