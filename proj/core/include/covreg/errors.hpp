#ifndef COVREG_ERRORS_HPP
#define COVREG_ERRORS_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace covreg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input shapes do not line up (vector length, matrix dimension, ...).
class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

/// A matrix required to be positive definite is not.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(double lambda_min, int observation = -1)
      : Error(message(lambda_min, observation)),
        lambda_min_(lambda_min),
        observation_(observation) {}

  double lambda_min() const { return lambda_min_; }
  /// Index of the offending observation, or -1 when not tied to one.
  int observation() const { return observation_; }

 private:
  static std::string message(double lambda_min, int observation) {
    std::string s = "matrix is not positive definite (lambda_min = " +
                    std::to_string(lambda_min) + ")";
    if (observation >= 0) s += " at observation " + std::to_string(observation);
    return s;
  }
  double lambda_min_;
  int observation_;
};

/// (I - beta1 X) is numerically singular in the network family.
class SingularResolvent : public Error {
 public:
  explicit SingularResolvent(const std::string& what) : Error(what) {}
};

/// Normal equations of a linear weighted least squares fit are too
/// ill-conditioned to solve.
class SingularNormalEquations : public Error {
 public:
  explicit SingularNormalEquations(double condition)
      : Error("normal equations are singular (condition number " +
              std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Fewer scalar observations than parameters.
class Underdetermined : public Error {
 public:
  Underdetermined(long np, int K)
      : Error("underdetermined fit: n*p = " + std::to_string(np) +
              " < K = " + std::to_string(K)) {}
};

/// Iterative optimization ran out of iterations.  Carries the last iterate
/// and the gradient norm reached so callers can diagnose or keep it.
class NotConverged : public Error {
 public:
  NotConverged(Eigen::VectorXd last_beta, double grad_norm, int iters)
      : Error("optimizer did not converge after " + std::to_string(iters) +
              " iterations (scaled gradient norm " + std::to_string(grad_norm) +
              ")"),
        last_beta_(std::move(last_beta)),
        grad_norm_(grad_norm),
        iters_(iters) {}

  const Eigen::VectorXd& last_beta() const { return last_beta_; }
  double grad_norm() const { return grad_norm_; }
  int iters() const { return iters_; }

 private:
  Eigen::VectorXd last_beta_;
  double grad_norm_;
  int iters_;
};

/// A user-supplied weight matrix failed the positive semidefinite check.
class NonPsdCustomWeight : public Error {
 public:
  explicit NonPsdCustomWeight(double lambda_min)
      : Error("custom weight matrix is not positive semidefinite "
              "(lambda_min = " + std::to_string(lambda_min) + ")") {}
};

/// A leave-one-out Gram matrix is singular; names the fold.
class SingularGram : public Error {
 public:
  explicit SingularGram(int fold = -1)
      : Error(fold < 0 ? std::string("Gram matrix is singular")
                       : "Gram matrix is singular when observation " +
                             std::to_string(fold) + " is left out"),
        fold_(fold) {}
  int fold() const { return fold_; }

 private:
  int fold_;
};

/// A cross-validation fold could not be refit.
class FoldFailed : public Error {
 public:
  FoldFailed(int fold, const std::string& cause)
      : Error("cross-validation fold " + std::to_string(fold) +
              " failed: " + cause),
        fold_(fold) {}
  int fold() const { return fold_; }

 private:
  int fold_;
};

/// Hat matrix V or M of a sandwich estimator is numerically singular.
class SingularCurvature : public Error {
 public:
  explicit SingularCurvature(const std::string& which, double condition)
      : Error(which + " matrix of asymptotic variance estimate is singular "
              "(condition number " + std::to_string(condition) + ")") {}
};

/// Invalid user input (config files, datasets, flags).  Names the field.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error("invalid value for '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A simulation study exceeded its tolerated failure rate.
class StudyQualityError : public Error {
 public:
  StudyQualityError(int failures, int reps)
      : Error("simulation study failure rate too high: " +
              std::to_string(failures) + " of " + std::to_string(reps) +
              " replications failed") {}
};

}  // namespace covreg

#endif  // COVREG_ERRORS_HPP
