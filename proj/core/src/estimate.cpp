#include "covreg/estimate.hpp"
#include <cstdlib>

#include <cmath>
#include <functional>
#include <limits>

#include "covreg/inference.hpp"

namespace covreg {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::QMLE: return "qmle";
    case EstimatorKind::OLS:  return "ols";
    case EstimatorKind::GLS:  return "gls";
    case EstimatorKind::FGLS: return "fgls";
    case EstimatorKind::WLS:  return "wls";
  }
  return "?";
}

namespace estimate {

namespace {

constexpr double kArmijoC = 1e-4;
constexpr double kConditionLimit = 1e12;
constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_fit_preconditions(const Dataset& data, const FitOptions& opts) {
  const long np = static_cast<long>(data.n()) * data.p();
  if (data.n() == 0) throw DimensionMismatch("dataset is empty");
  if (data.Y.rows() != data.n() || data.Y.cols() != data.p()) {
    throw DimensionMismatch("response matrix must be n x p");
  }
  if (np < data.family.K) throw Underdetermined(np, data.family.K);
  if (opts.max_iters < 1) throw ValidationError("max_iters", "must be >= 1");
  if (!(opts.grad_tol > 0)) throw ValidationError("grad_tol", "must be > 0");
  if (!(opts.constraint_floor > 0)) {
    throw ValidationError("constraint_floor", "must be > 0");
  }
}

/// True when C - floor*I is positive definite for every observation.
bool feasible_pd(const Dataset& data, const ParamVector& beta, double floor) {
  const int p = data.p();
  for (const CovariateSet& x : data.X) {
    Matrix c;
    try {
      c = model::eval(data.family, beta, x).mat();
    } catch (const Error&) {
      return false;
    }
    c.diagonal().array() -= floor;
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() != Eigen::Success) return false;
  }
  (void)p;
  return true;
}

bool inside_box(const model::ParamBox& box, const ParamVector& beta) {
  if (!box.active) return true;
  return (beta.array() >= box.lower.array()).all() &&
         (beta.array() <= box.upper.array()).all();
}

struct BfgsProblem {
  std::function<double(const ParamVector&)> value;
  std::function<Vector(const ParamVector&)> gradient;
  std::function<bool(const ParamVector&)> feasible;
  /// Gradient of the binding eigenvalue constraint at x, or nullopt when no
  /// constraint is near-active.  Lets the search slide along the positive
  /// definiteness wall instead of zigzagging into it.
  std::function<std::optional<Vector>(const ParamVector&)> active_normal;
  /// Exact Newton direction when the objective has a known Hessian (linear
  /// families: the step to the closed-form optimum).  Sidesteps the extreme
  /// conditioning that defeats secant updates under near-singular weights.
  std::function<Vector(const ParamVector&)> newton_direction;
  /// Tangent Newton step at the wall: minimizes the quadratic model subject
  /// to a'd = 0 given the gradient and the active constraint normal.
  std::function<Vector(const Vector& grad, const Vector& normal)> kkt_direction;
};

struct BfgsOutcome {
  ParamVector beta;
  double value = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  /// Progress stopped against the feasibility boundary: the iterate is the
  /// constrained minimizer up to line-search resolution.
  bool boundary_blocked = false;
};

/// Minimizes problem.value by BFGS with Armijo backtracking.  Every trial
/// point must pass problem.feasible; when the unit step leaves the feasible
/// set the search bisects onto the boundary first, which realizes the
/// constrained estimator.  Termination is either a small gradient or lack of
/// objective progress while pinned to the boundary.
BfgsOutcome bfgs_minimize(const BfgsProblem& problem, ParamVector start,
                          int max_iters, double grad_tol) {
  const int K = static_cast<int>(start.size());
  Matrix h = Matrix::Identity(K, K);
  ParamVector x = std::move(start);
  double f = problem.value(x);
  Vector g = problem.gradient(x);
  if (!std::isfinite(f) || !g.allFinite()) {
    throw Error("objective is not finite at the starting point");
  }
  BfgsOutcome out;
  int iter = 0;
  int wall_window = 0;
  double wall_decrease = 0.0;
  int stagnation_window = 0;
  double stagnation_decrease = 0.0;
  for (; iter < max_iters; ++iter) {
    if (g.cwiseAbs().maxCoeff() < grad_tol) {
      out.converged = true;
      break;
    }
    std::optional<Vector> normal;
    if (problem.active_normal) normal = problem.active_normal(x);
    if (normal && normal->squaredNorm() > 0.0) {
      // KKT at the wall: gradient parallel to the constraint normal with a
      // nonnegative multiplier, and nothing left in the tangent space.
      const double mu = normal->dot(g) / normal->squaredNorm();
      if (mu > 0.0) {
        Vector gproj = g - mu * (*normal);
        if (gproj.cwiseAbs().maxCoeff() < grad_tol) {
          out.converged = true;
          out.boundary_blocked = true;
          break;
        }
      }
    }
    Vector d;
    double slope = 0.0;
    bool have_direction = false;
    if (normal && normal->squaredNorm() > 0.0 && problem.kkt_direction) {
      d = problem.kkt_direction(g, *normal);
      slope = g.dot(d);
      have_direction = slope < 0 && d.allFinite();
    }
    if (!have_direction && problem.newton_direction) {
      d = problem.newton_direction(x);
      slope = g.dot(d);
      have_direction = slope < 0;
    }
    if (!have_direction) {
      d = -(h * g);
      slope = g.dot(d);
      if (!(slope < 0)) {  // curvature lost; restart from steepest descent
        h.setIdentity();
        d = -g;
        slope = g.dot(d);
      }
    }
    if (normal && normal->squaredNorm() > 0.0) {
      // Remove the outward component so the step slides along the wall.
      const double dn = normal->dot(d) / normal->squaredNorm();
      if (dn < 0.0) {
        d -= dn * (*normal);
        slope = g.dot(d);
        if (!(slope < 0)) {
          const double mu = std::max(normal->dot(g) / normal->squaredNorm(), 0.0);
          d = -(g - mu * (*normal));
          slope = g.dot(d);
          if (!(slope < 0)) {
            out.boundary_blocked = true;
            break;
          }
        }
      }
    }

    // Cap the step at the feasibility wall.
    double t_max = 1.0;
    bool capped = false;
    if (!problem.feasible(x + d)) {
      capped = true;
      double lo = 0.0, hi = 1.0;
      for (int b = 0; b < 50; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (problem.feasible(x + mid * d)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      t_max = lo;
    }

    double t = t_max;
    bool stepped = false;
    double f_new = f;
    ParamVector x_new = x;
    while (t > 1e-16 * std::max(1.0, t_max)) {
      x_new = x + t * d;
      if (problem.feasible(x_new)) {
        double cand;
        try {
          cand = problem.value(x_new);
        } catch (const Error&) {
          cand = std::numeric_limits<double>::quiet_NaN();
        }
        if (std::isfinite(cand) && cand <= f + kArmijoC * t * slope) {
          f_new = cand;
          stepped = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (stepped && !capped && t == t_max) {
      // The full step passed at once; forward-track so a badly scaled
      // quasi-Newton matrix cannot pin the search to microscopic steps on
      // flat stretches.
      double t2 = 2.0 * t;
      while (t2 <= 1048576.0) {
        ParamVector x2 = x + t2 * d;
        if (!problem.feasible(x2)) break;
        double cand;
        try {
          cand = problem.value(x2);
        } catch (const Error&) {
          break;
        }
        if (!(std::isfinite(cand) && cand <= f + kArmijoC * t2 * slope &&
              cand < f_new)) {
          break;
        }
        x_new = std::move(x2);
        f_new = cand;
        t = t2;
        t2 *= 2.0;
      }
    }

    if (!stepped) {
      out.boundary_blocked = capped;
      break;
    }
    const double decrease = f - f_new;
    const bool at_wall = capped && t == t_max;
    if (std::getenv("COVREG_BFGS_TRACE")) {
      std::fprintf(stderr,
                   "it %3d f %.12g dec %.3g t %.3g tmax %.3g cap %d g %.3g n %d\n",
                   iter, f_new, decrease, t, t_max, int(capped),
                   g.cwiseAbs().maxCoeff(), int(normal.has_value()));
    }
    // Objective stagnation: the search has hit the numerical floor of the
    // objective.  At the wall that is constrained convergence; in the
    // interior the caller decides via the gradient test.
    stagnation_decrease += decrease;
    if (++stagnation_window >= 10) {
      if (stagnation_decrease <= 1e-13 * std::max(1.0, std::abs(f))) {
        x = std::move(x_new);
        f = f_new;
        g = problem.gradient(x);
        const bool wall_adjacent =
            normal.has_value() || at_wall ||
            (problem.active_normal && problem.active_normal(x).has_value());
        if (wall_adjacent) {
          out.boundary_blocked = true;
        } else {
          // Interior minimum to the numerical precision of the objective.
          out.converged = true;
        }
        break;
      }
      stagnation_window = 0;
      stagnation_decrease = 0.0;
    }
    if (at_wall) {
      ++wall_window;
      wall_decrease += decrease;
      // Creeping along a curved boundary: once a run of wall-limited steps
      // stops paying, the iterate is the constrained optimum for practical
      // purposes and sits exactly on the floor.
      if (wall_window >= 6 &&
          wall_decrease <= 1e-6 * std::max(1.0, std::abs(f))) {
        x = std::move(x_new);
        f = f_new;
        g = problem.gradient(x);
        out.boundary_blocked = true;
        break;
      }
      if (wall_window >= 6) {
        wall_window = 0;
        wall_decrease = 0.0;
      }
    } else {
      wall_window = 0;
      wall_decrease = 0.0;
    }
    Vector g_new = problem.gradient(x_new);
    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (iter == 0) h *= sy / y.squaredNorm();  // standard initial scaling
      const Matrix sy_outer = (s * y.transpose()) / sy;
      h = (Matrix::Identity(K, K) - sy_outer) * h *
              (Matrix::Identity(K, K) - sy_outer.transpose()) +
          (s * s.transpose()) / sy;
    }
    x = std::move(x_new);
    f = f_new;
    g = std::move(g_new);
  }
  out.beta = x;
  out.value = f;
  out.grad_norm = g.cwiseAbs().maxCoeff();
  out.iters = iter;
  if (!out.converged) out.converged = out.grad_norm < grad_tol;
  return out;
}

struct PerObsLik {
  double logdet = 0.0;
  Vector alpha;  // C^{-1} Y_i
  Matrix cinv;
};

PerObsLik decompose_obs(const Dataset& data, const ParamVector& beta, int i) {
  SymMatrix c = model::eval(data.family, beta, data.X[i]);
  Eigen::LLT<Matrix> llt(c.mat());
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite(numkit::min_eigenvalue(c), i);
  }
  PerObsLik out;
  const Matrix& l = llt.matrixL();
  out.logdet = 2.0 * l.diagonal().array().log().sum();
  out.alpha = llt.solve(data.Y.row(i).transpose());
  out.cinv = llt.solve(Matrix::Identity(data.p(), data.p()));
  return out;
}

/// Starting point for linear families: the OLS estimate, pulled toward a
/// "scaled identity" anchor when the constraint requires a feasible start.
ParamVector auto_start_linear(const Dataset& data, const FitOptions& opts,
                              bool need_feasible);

ParamVector auto_start_network(const Dataset& data, const FitOptions& opts);

/// Gradient of the smallest fitted eigenvalue over observations, reported
/// only within `band` of the constraint floor.  Works for any family via
/// the analytic derivative of C_beta.
std::function<std::optional<Vector>(const ParamVector&)> make_active_normal(
    const Dataset& data, double band) {
  return [&data, band](const ParamVector& b) -> std::optional<Vector> {
    // Cheap screen: a shifted Cholesky succeeds iff the observation clears
    // the band; only near-active observations get an eigendecomposition.
    double lmin = std::numeric_limits<double>::infinity();
    int which = -1;
    Vector u;
    const int p = data.p();
    for (int i = 0; i < data.n(); ++i) {
      Matrix c;
      try {
        c = model::eval(data.family, b, data.X[i]).mat();
      } catch (const Error&) {
        return std::nullopt;
      }
      Matrix shifted = c;
      shifted.diagonal().array() -= band;
      if (Eigen::LLT<Matrix>(shifted).info() == Eigen::Success) continue;
      Eigen::SelfAdjointEigenSolver<Matrix> es(c);
      if (es.eigenvalues()[0] < lmin) {
        lmin = es.eigenvalues()[0];
        which = i;
        u = es.eigenvectors().col(0);
      }
    }
    (void)p;
    if (which < 0 || lmin > band) return std::nullopt;
    Vector a(data.family.K);
    for (int k = 0; k < data.family.K; ++k) {
      a[k] = u.dot(model::grad(data.family, b, data.X[which], k).mat() * u);
    }
    return a;
  };
}

ParamVector auto_start(const Dataset& data, const FitOptions& opts,
                       bool need_feasible) {
  if (opts.start) {
    if (opts.start->size() != data.family.K) {
      throw DimensionMismatch("start vector length does not match K");
    }
    return *opts.start;
  }
  if (data.family.kind == FamilyKind::Linear) {
    return auto_start_linear(data, opts, need_feasible);
  }
  return auto_start_network(data, opts);
}

/// Least squares fit of C_beta to (scale * I): a cheap always-well-defined
/// anchor in parameter space used to repair infeasible starts.
ParamVector identity_anchor(const Dataset& data) {
  const int K = data.family.K;
  Matrix g = Matrix::Zero(K, K);
  Vector b = Vector::Zero(K);
  const double scale =
      data.Y.array().square().sum() / (static_cast<double>(data.n()) * data.p());
  for (const CovariateSet& x : data.X) {
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = k1; k2 < K; ++k2) {
        const double t =
            x.designs[k1].mat().cwiseProduct(x.designs[k2].mat()).sum();
        g(k1, k2) += t;
        g(k2, k1) = g(k1, k2);
      }
      b[k1] += scale * x.designs[k1].mat().trace();
    }
  }
  return g.ldlt().solve(b);
}

/// Pulls `target` toward a feasible anchor until every fitted covariance
/// clears a scale-aware margin.  Starting a search hard against the wall
/// (margin ~ 1e-8) leaves gradients of order 1/margin, so the repair aims
/// well inside; the optimizer walks back to the wall when it has to.
ParamVector repair_to_feasible(const Dataset& data, const ParamVector& target,
                               double floor) {
  const double scale =
      data.Y.array().square().sum() / (static_cast<double>(data.n()) * data.p());
  const double margin = std::max(2.0 * floor, 1e-3 * scale);
  if (feasible_pd(data, target, margin)) return target;
  ParamVector anchor = identity_anchor(data);
  if (!feasible_pd(data, anchor, margin)) {
    throw NotPositiveDefinite(model::min_cov_eigenvalue(data.family, anchor, data.X));
  }
  // Largest step toward the target that keeps the floor, by bisection.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    ParamVector cand = (1.0 - mid) * anchor + mid * target;
    if (feasible_pd(data, cand, margin)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return (1.0 - lo) * anchor + lo * target;
}

struct LinearNormalEq {
  Matrix gram;   // sum_i X_i' W X_i
  Vector rhs;    // sum_i X_i' W vec(Y_i Y_i')
};

LinearNormalEq linear_normal_equations(const Dataset& data,
                                       const std::vector<Weight>& weights) {
  const int K = data.family.K;
  LinearNormalEq eq;
  eq.gram = Matrix::Zero(K, K);
  eq.rhs = Vector::Zero(K);
  for (int i = 0; i < data.n(); ++i) {
    const CovariateSet& x = data.X[i];
    std::vector<Matrix> wd(K);
    for (int k = 0; k < K; ++k) {
      wd[k] = weights[i].apply_sym(x.designs[k].mat());
    }
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = k1; k2 < K; ++k2) {
        const double t = x.designs[k1].mat().cwiseProduct(wd[k2]).sum();
        eq.gram(k1, k2) += t;
        if (k2 != k1) eq.gram(k2, k1) += t;
      }
    }
    const Matrix r = data.Y.row(i).transpose() * data.Y.row(i);
    const Matrix wr = weights[i].apply_sym(r);
    for (int k = 0; k < K; ++k) {
      eq.rhs[k] += x.designs[k].mat().cwiseProduct(wr).sum();
    }
  }
  return eq;
}

ParamVector solve_normal_equations(const LinearNormalEq& eq) {
  // Equilibrate first: the condition guard should flag collinear designs,
  // not weight-scale imbalance across observations.
  const Eigen::Index K = eq.gram.rows();
  Vector scale(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double dkk = eq.gram(k, k);
    if (!(dkk > 0.0)) {
      throw SingularNormalEquations(std::numeric_limits<double>::infinity());
    }
    scale[k] = 1.0 / std::sqrt(dkk);
  }
  const Matrix gs = scale.asDiagonal() * eq.gram * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gs);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) {
    throw SingularNormalEquations(lmin > 0.0 ? lmax / lmin
                                             : std::numeric_limits<double>::infinity());
  }
  const Vector rhs_s = scale.asDiagonal() * eq.rhs;
  const Vector sol_s = es.eigenvectors() *
                       es.eigenvalues().cwiseInverse().asDiagonal() *
                       (es.eigenvectors().transpose() * rhs_s);
  return scale.asDiagonal() * sol_s;
}

ParamVector auto_start_linear(const Dataset& data, const FitOptions& opts,
                              bool need_feasible) {
  std::vector<Weight> id(data.n(), Weight::identity(data.p()));
  ParamVector beta = solve_normal_equations(linear_normal_equations(data, id));
  if (need_feasible) beta = repair_to_feasible(data, beta, opts.constraint_floor);
  return beta;
}

ParamVector auto_start_network(const Dataset& data, const FitOptions& opts) {
  (void)opts;
  const double np = static_cast<double>(data.n()) * data.p();
  double best = -std::numeric_limits<double>::infinity();
  ParamVector best_beta(2);
  best_beta << 0.0, 1.0;
  for (int gi = -9; gi <= 9; ++gi) {
    const double b1 = 0.1 * gi;
    // Profile sigma^2 from the autoregressive residuals (I - b1 X) Y.
    double rss = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      const Matrix& adj = data.X[i].designs[0].mat();
      Vector resid = data.Y.row(i).transpose() - b1 * (adj * data.Y.row(i).transpose());
      rss += resid.squaredNorm();
    }
    const double sigma2 = std::max(rss / np, 1e-8);
    ParamVector cand(2);
    cand << b1, sigma2;
    double ll;
    try {
      ll = loglik(data, cand);
    } catch (const Error&) {
      continue;
    }
    if (ll > best) {
      best = ll;
      best_beta = cand;
    }
  }
  return best_beta;
}

FitResult run_iterative(const Dataset& data, const FitOptions& opts,
                        const BfgsProblem& problem, ParamVector start,
                        EstimatorKind kind) {
  BfgsOutcome res = bfgs_minimize(problem, std::move(start), opts.max_iters,
                                  opts.grad_tol);
  FitResult fit;
  fit.beta = res.beta;
  fit.estimator = kind;
  fit.converged = res.converged;
  fit.iters = res.iters;
  fit.objective = res.value;
  if (opts.constrain_pd) {
    const double lmin = model::min_cov_eigenvalue(data.family, fit.beta, data.X);
    fit.constrained_active = lmin <= 2.0 * opts.constraint_floor;
    // Blocked against the positive definiteness wall: that point is the
    // constrained optimum even though the raw gradient stays nonzero.
    if (!fit.converged && res.boundary_blocked && fit.constrained_active) {
      fit.converged = true;
    }
  }
  if (!fit.converged &&
      opts.on_nonconvergence == FitOptions::OnNonconvergence::Throw) {
    throw NotConverged(res.beta, res.grad_norm, res.iters);
  }
  return fit;
}

}  // namespace

double loglik(const Dataset& data, const ParamVector& beta) {
  const double np = static_cast<double>(data.n()) * data.p();
  double logdet = 0.0;
  double quad = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    PerObsLik obs = decompose_obs(data, beta, i);
    logdet += obs.logdet;
    quad += data.Y.row(i).dot(obs.alpha);
  }
  return -0.5 * np * std::log(kTwoPi) - 0.5 * logdet - 0.5 * quad;
}

Vector score(const Dataset& data, const ParamVector& beta) {
  const int K = data.family.K;
  Vector s = Vector::Zero(K);
  for (int i = 0; i < data.n(); ++i) {
    PerObsLik obs = decompose_obs(data, beta, i);
    for (int k = 0; k < K; ++k) {
      const Matrix dk = model::grad(data.family, beta, data.X[i], k).mat();
      const double quad = obs.alpha.dot(dk * obs.alpha);
      const double tr = obs.cinv.cwiseProduct(dk).sum();
      s[k] += 0.5 * (quad - tr);
    }
  }
  return s;
}

double wls_objective(const Dataset& data, const std::vector<Weight>& weights,
                     const ParamVector& beta) {
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const Matrix r = data.Y.row(i).transpose() * data.Y.row(i) -
                     model::eval(data.family, beta, data.X[i]).mat();
    total += weights[i].quadform_sym(r);
  }
  return total / data.n();
}

Vector wls_gradient(const Dataset& data, const std::vector<Weight>& weights,
                    const ParamVector& beta) {
  const int K = data.family.K;
  Vector g = Vector::Zero(K);
  for (int i = 0; i < data.n(); ++i) {
    const Matrix r = data.Y.row(i).transpose() * data.Y.row(i) -
                     model::eval(data.family, beta, data.X[i]).mat();
    const Matrix wr = weights[i].apply_sym(r);
    for (int k = 0; k < K; ++k) {
      const Matrix dk = model::grad(data.family, beta, data.X[i], k).mat();
      g[k] -= 2.0 * dk.cwiseProduct(wr).sum();
    }
  }
  return g / data.n();
}

FitResult fit_qmle(const Dataset& data, const FitOptions& opts) {
  check_fit_preconditions(data, opts);
  const double np = static_cast<double>(data.n()) * data.p();
  const model::ParamBox box = model::param_box(data.family);
  const double floor = opts.constrain_pd ? opts.constraint_floor : 0.0;

  BfgsProblem problem;
  problem.value = [&](const ParamVector& b) { return -loglik(data, b) / np; };
  problem.gradient = [&](const ParamVector& b) {
    return (-score(data, b) / np).eval();
  };
  problem.feasible = [&](const ParamVector& b) {
    return inside_box(box, b) && feasible_pd(data, b, floor);
  };
  if (opts.constrain_pd) {
    problem.active_normal =
        make_active_normal(data, 16.0 * opts.constraint_floor);
  }

  ParamVector start = auto_start(data, opts, /*need_feasible=*/true);
  if (!problem.feasible(start)) {
    start = repair_to_feasible(data, start, opts.constraint_floor);
  }
  FitResult fit = run_iterative(data, opts, problem, start, EstimatorKind::QMLE);
  fit.objective = loglik(data, fit.beta);
  fit.weight_used = WeightSpec::identity();
  return fit;
}

FitResult fit_wls(const Dataset& data, const WeightSpec& weight,
                  const FitOptions& opts) {
  std::vector<Weight> weights = condvar::build_weights(weight, data);
  return fit_wls_with_weights(data, weights, opts, weight);
}

FitResult fit_wls_with_weights(const Dataset& data,
                               const std::vector<Weight>& weights,
                               const FitOptions& opts,
                               const WeightSpec& provenance) {
  check_fit_preconditions(data, opts);
  if (weights.size() != data.X.size()) {
    throw DimensionMismatch("one weight per observation required");
  }
  const model::ParamBox box = model::param_box(data.family);
  const WeightSpec& weight = provenance;

  FitResult fit;
  fit.estimator = EstimatorKind::WLS;
  fit.weight_used = weight;

  if (data.family.kind == FamilyKind::Linear && !opts.force_iterative) {
    const LinearNormalEq eq = linear_normal_equations(data, weights);
    ParamVector beta = solve_normal_equations(eq);
    if (!opts.constrain_pd ||
        feasible_pd(data, beta, opts.constraint_floor)) {
      fit.beta = std::move(beta);
      fit.converged = true;
      fit.iters = 0;
      fit.objective = wls_objective(data, weights, fit.beta);
      fit.constrained_active = false;
      return fit;
    }
    // Unconstrained optimum violates the positive definiteness floor.
    // Start from the path truncation (identity-fit anchor toward the closed
    // form, stopped at the wall) and refine along the boundary with exact
    // Newton/tangent steps of the quadratic objective.
    ParamVector anchor = identity_anchor(data);
    if (!feasible_pd(data, anchor, opts.constraint_floor)) {
      throw NotPositiveDefinite(
          model::min_cov_eigenvalue(data.family, anchor, data.X));
    }
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      ParamVector cand = (1.0 - mid) * anchor + mid * beta;
      if (feasible_pd(data, cand, opts.constraint_floor)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    ParamVector start = (1.0 - lo) * anchor + lo * beta;

    BfgsProblem problem;
    problem.value = [&](const ParamVector& b) {
      return wls_objective(data, weights, b);
    };
    problem.gradient = [&](const ParamVector& b) {
      return wls_gradient(data, weights, b);
    };
    problem.feasible = [&](const ParamVector& b) {
      return feasible_pd(data, b, opts.constraint_floor);
    };
    problem.active_normal =
        make_active_normal(data, 16.0 * opts.constraint_floor);
    const ParamVector beta_star = beta;
    problem.newton_direction = [beta_star](const ParamVector& b) {
      return (beta_star - b).eval();
    };
    const Matrix hessian = (2.0 / data.n()) * eq.gram;
    problem.kkt_direction = [hessian](const Vector& g, const Vector& a) {
      const Eigen::Index K = g.size();
      Matrix kkt = Matrix::Zero(K + 1, K + 1);
      kkt.topLeftCorner(K, K) = hessian;
      kkt.topRightCorner(K, 1) = a;
      kkt.bottomLeftCorner(1, K) = a.transpose();
      Vector rhs = Vector::Zero(K + 1);
      rhs.head(K) = -g;
      Vector sol = kkt.fullPivLu().solve(rhs);
      return sol.head(K).eval();
    };
    FitResult it = run_iterative(data, opts, problem, start, EstimatorKind::WLS);
    it.weight_used = weight;
    return it;
  }

  BfgsProblem problem;
  const double floor = opts.constrain_pd ? opts.constraint_floor : 0.0;
  problem.value = [&](const ParamVector& b) {
    return wls_objective(data, weights, b);
  };
  problem.gradient = [&](const ParamVector& b) {
    return wls_gradient(data, weights, b);
  };
  problem.feasible = [&](const ParamVector& b) {
    if (!inside_box(box, b)) return false;
    if (data.family.kind == FamilyKind::NetworkAr || opts.constrain_pd) {
      return feasible_pd(data, b, floor);
    }
    return true;
  };
  if (opts.constrain_pd) {
    problem.active_normal =
        make_active_normal(data, 16.0 * opts.constraint_floor);
  }
  ParamVector start = auto_start(data, opts, opts.constrain_pd);
  if (!problem.feasible(start)) {
    start = repair_to_feasible(data, start, opts.constraint_floor);
  }
  FitResult it = run_iterative(data, opts, problem, start, EstimatorKind::WLS);
  it.weight_used = weight;
  return it;
}

FitResult fit_ols(const Dataset& data, const FitOptions& opts) {
  FitResult fit = fit_wls(data, WeightSpec::identity(), opts);
  fit.estimator = EstimatorKind::OLS;
  return fit;
}

FitResult fit_gls(const Dataset& data, const ParamVector& beta0,
                  const ErrorMoments& moments, const FitOptions& opts) {
  FitResult fit = fit_wls(data, WeightSpec::known_v(beta0, moments), opts);
  fit.estimator = EstimatorKind::GLS;
  return fit;
}

FitResult fit_fgls(const Dataset& data, const FitOptions& opts) {
  // The pilot feeds the plug-in weight, so its positive definiteness floor
  // is scale-aware: a pilot covariance pinned at the generic 1e-8 floor
  // would explode the pseudo-inverse weight.  The final fit still honors
  // the caller's floor.
  FitOptions pilot_opts = opts;
  const double scale =
      data.Y.array().square().sum() / (static_cast<double>(data.n()) * data.p());
  pilot_opts.constrain_pd = true;
  pilot_opts.constraint_floor =
      std::max(opts.constraint_floor, 1e-3 * std::max(scale, 1e-30));
  FitResult pilot = fit_ols(data, pilot_opts);
  // Residuals throw NotPositiveDefinite(i) when the pilot produces a
  // degenerate fitted covariance; FGLS reports that honestly instead of
  // regularizing.
  Matrix eps = inference::residuals(data, pilot.beta);
  ErrorMoments mu4 = condvar::estimate_mu4(eps);
  WeightSpec spec = WeightSpec::estimated_v();
  spec.beta_for_v = pilot.beta;
  spec.moments = mu4;
  FitResult fit = fit_wls(data, spec, opts);
  fit.estimator = EstimatorKind::FGLS;
  return fit;
}

}  // namespace estimate
}  // namespace covreg
