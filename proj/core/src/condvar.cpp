#include "covreg/condvar.hpp"

#include <cmath>

namespace covreg {

ErrorMoments ErrorMoments::pooled(double m4) {
  if (!(m4 >= 1.0)) {
    throw ValidationError("mu4", "fourth moment must be >= 1, got " +
                                     std::to_string(m4));
  }
  ErrorMoments m;
  m.mu4 = Vector::Constant(1, m4);
  return m;
}

ErrorMoments ErrorMoments::per_coordinate(Vector m4) {
  if (m4.size() == 0 || (m4.array() < 1.0).any()) {
    throw ValidationError("mu4", "per-coordinate fourth moments must be >= 1");
  }
  ErrorMoments m;
  m.mu4 = std::move(m4);
  return m;
}

namespace condvar {

namespace {

Vector broadcast_mu4(const ErrorMoments& moments, int p) {
  if (!moments.valid_for(p)) {
    throw DimensionMismatch("mu4 has length " + std::to_string(moments.mu4.size()) +
                            ", expected 1 or " + std::to_string(p));
  }
  if (moments.mu4.size() == 1) return Vector::Constant(p, moments.mu4[0]);
  return moments.mu4;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

PsdMatrix cond_cov_vecyy(const SymMatrix& c, const ErrorMoments& moments) {
  const int p = c.dim();
  const Vector mu4 = broadcast_mu4(moments, p);
  const Matrix s = numkit::sym_sqrt(c).mat();
  const Eigen::Index pp = static_cast<Eigen::Index>(p) * p;
  Matrix v(pp, pp);
  // Column for unit vector e_q: vec(S (T0 + T0^T + Dg(T0)) S), T0 = S E_q S.
  for (int col = 0; col < p; ++col) {
    for (int row = 0; row < p; ++row) {
      const Eigen::Index q = static_cast<Eigen::Index>(col) * p + row;
      Matrix t0 = s.col(row) * s.row(col);  // S E_{row,col} S
      Matrix middle = t0 + t0.transpose();
      middle.diagonal() += (mu4.array() - 3.0).matrix().cwiseProduct(t0.diagonal());
      v.col(q) = numkit::vec(s * middle * s);
    }
  }
  return SymMatrix(v, 1e-9);
}

ErrorMoments estimate_mu4(const Matrix& residuals) {
  if (residuals.size() < 2) {
    throw DimensionMismatch("estimate_mu4 needs at least two residuals");
  }
  const double m4 = residuals.array().pow(4).mean();
  return ErrorMoments::pooled(std::max(1.0, m4));
}

CondCov::CondCov(const SymMatrix& c, const ErrorMoments& moments)
    : s_(numkit::sym_sqrt(c)), mu4_(broadcast_mu4(moments, c.dim())) {}

Matrix CondCov::apply_sym(const Matrix& r) const {
  const Matrix& s = s_.mat();
  Matrix t = s * r * s;
  Matrix middle = 2.0 * t;
  middle.diagonal() += (mu4_.array() - 3.0).matrix().cwiseProduct(t.diagonal());
  return s * middle * s;
}

Vector CondCov::apply(const Vector& v) const {
  return numkit::vec(apply_sym(symmetrize(numkit::mat(v, p()))));
}

PsdMatrix CondCov::dense() const {
  const Eigen::Index pp = static_cast<Eigen::Index>(p()) * p();
  Matrix out(pp, pp);
  Vector e = Vector::Zero(pp);
  for (Eigen::Index q = 0; q < pp; ++q) {
    e[q] = 1.0;
    out.col(q) = apply(e);
    e[q] = 0.0;
  }
  return SymMatrix(out, 1e-9);
}

}  // namespace condvar

Weight Weight::identity(int p) {
  Weight w;
  w.kind_ = Kind::Identity;
  w.p_ = p;
  return w;
}

Weight Weight::inverse_cond_cov(const SymMatrix& c, const ErrorMoments& moments) {
  Weight w;
  w.kind_ = Kind::InverseV;
  w.p_ = c.dim();
  w.s_inv_ = numkit::sym_sqrt_pair(c).inv_sqrt;
  const Vector mu4 = condvar::broadcast_mu4(moments, c.dim());
  w.diag_coef_ = Vector(c.dim());
  // Spectrum of the middle factor is 2 off the diagonal coordinates and
  // mu4_j - 1 on them; a vanishing mu4_j - 1 marks a rank-deficient
  // direction and gets a zero inverse eigenvalue.
  const double rank_tol = numkit::default_rank_tol(c.dim() * c.dim());
  for (int j = 0; j < c.dim(); ++j) {
    const double lam = mu4[j] - 1.0;
    w.diag_coef_[j] = (lam > rank_tol * 2.0) ? (1.0 / lam - 0.5) : -0.5;
  }
  return w;
}

Weight Weight::custom(const PsdMatrix& m) {
  const Eigen::Index pp = m.mat().rows();
  const int p = static_cast<int>(std::lround(std::sqrt(double(pp))));
  if (static_cast<Eigen::Index>(p) * p != pp) {
    throw DimensionMismatch("custom weight must be p^2 x p^2");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.mat(), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (lmin < -numkit::kPdTolFactor * std::max(lmax, 1.0)) {
    throw NonPsdCustomWeight(lmin);
  }
  Weight w;
  w.kind_ = Kind::Custom;
  w.p_ = p;
  w.dense_ = m.mat();
  return w;
}

Matrix Weight::apply_sym(const Matrix& r) const {
  switch (kind_) {
    case Kind::Identity:
      return r;
    case Kind::InverseV: {
      const Matrix& si = s_inv_.mat();
      Matrix t = si * r * si;
      Matrix middle = 0.5 * t;
      middle.diagonal() += diag_coef_.cwiseProduct(t.diagonal());
      return si * middle * si;
    }
    case Kind::Custom:
      return numkit::mat(dense_ * numkit::vec(r), p_);
  }
  throw Error("unreachable weight kind");
}

Vector Weight::apply(const Vector& v) const {
  if (kind_ == Kind::Identity) return v;
  if (kind_ == Kind::Custom) return dense_ * v;
  return numkit::vec(apply_sym(condvar::symmetrize(numkit::mat(v, p_))));
}

double Weight::quadform(const Vector& r) const {
  if (kind_ == Kind::Identity) return r.squaredNorm();
  if (kind_ == Kind::Custom) return r.dot(dense_ * r);
  return quadform_sym(condvar::symmetrize(numkit::mat(r, p_)));
}

double Weight::quadform_sym(const Matrix& r) const {
  switch (kind_) {
    case Kind::Identity:
      return r.squaredNorm();
    case Kind::InverseV: {
      const Matrix& si = s_inv_.mat();
      Matrix t = si * r * si;
      return 0.5 * t.squaredNorm() +
             diag_coef_.dot(t.diagonal().cwiseAbs2());
    }
    case Kind::Custom: {
      Vector v = numkit::vec(r);
      return v.dot(dense_ * v);
    }
  }
  throw Error("unreachable weight kind");
}

PsdMatrix Weight::dense() const {
  const Eigen::Index pp = static_cast<Eigen::Index>(p_) * p_;
  if (kind_ == Kind::Identity) {
    return SymMatrix::trusted(Matrix::Identity(pp, pp));
  }
  if (kind_ == Kind::Custom) return SymMatrix(dense_, 1e-9);
  Matrix out(pp, pp);
  Vector e = Vector::Zero(pp);
  for (Eigen::Index q = 0; q < pp; ++q) {
    e[q] = 1.0;
    out.col(q) = apply(e);
    e[q] = 0.0;
  }
  return SymMatrix(out, 1e-9);
}

WeightSpec WeightSpec::identity() { return WeightSpec{}; }

WeightSpec WeightSpec::known_v(ParamVector beta0, ErrorMoments moments) {
  WeightSpec s;
  s.kind = Kind::KnownV;
  s.beta_for_v = std::move(beta0);
  s.moments = std::move(moments);
  return s;
}

WeightSpec WeightSpec::estimated_v() {
  WeightSpec s;
  s.kind = Kind::EstimatedV;
  return s;
}

WeightSpec WeightSpec::custom(std::function<PsdMatrix(const CovariateSet&)> fn) {
  WeightSpec s;
  s.kind = Kind::Custom;
  s.provider = std::move(fn);
  return s;
}

bool WeightSpec::resolved() const {
  switch (kind) {
    case Kind::Identity:
      return true;
    case Kind::Custom:
      return static_cast<bool>(provider);
    case Kind::KnownV:
    case Kind::EstimatedV:
      return beta_for_v.size() > 0 && moments.mu4.size() > 0;
  }
  return false;
}

namespace condvar {

Weight build_weight(const WeightSpec& spec, const ModelFamily& family,
                    const CovariateSet& x) {
  switch (spec.kind) {
    case WeightSpec::Kind::Identity:
      return Weight::identity(family.p);
    case WeightSpec::Kind::Custom:
      if (!spec.provider) {
        throw ValidationError("weight", "custom weight spec lacks a provider");
      }
      return Weight::custom(spec.provider(x));
    case WeightSpec::Kind::KnownV:
    case WeightSpec::Kind::EstimatedV: {
      if (!spec.resolved()) {
        throw ValidationError("weight",
                              "estimated-V weight spec has no pilot estimate; "
                              "run the FGLS pipeline or supply beta/mu4");
      }
      SymMatrix c = model::eval(family, spec.beta_for_v, x);
      return Weight::inverse_cond_cov(c, spec.moments);
    }
  }
  throw Error("unreachable weight spec kind");
}

std::vector<Weight> build_weights(const WeightSpec& spec, const Dataset& data) {
  std::vector<Weight> out;
  out.reserve(data.X.size());
  for (const CovariateSet& x : data.X) {
    out.push_back(build_weight(spec, data.family, x));
  }
  return out;
}

}  // namespace condvar
}  // namespace covreg
