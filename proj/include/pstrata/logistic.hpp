#pragma once

#include <Eigen/Dense>
#include <string>

namespace pstrata {

struct LogisticFitResult {
  Eigen::VectorXd coef;
  double log_likelihood = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LogisticOptions {
  double grad_tol = 1e-8;
  int max_iter = 100;
  double separation_bound = 1e3;  // coefficient norm beyond which we flag
};

inline double expit(double t) {
  if (t >= 0.0) {
    double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

// Weighted logistic regression of y on the rows of X (caller supplies the
// intercept column), with an optional fixed per-row offset. Newton-Raphson
// with step halving on likelihood decrease; throws on non-convergence,
// perfect separation, or a degenerate (constant-response) sample.
LogisticFitResult fit_logistic(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w,
                               const Eigen::VectorXd& offset,
                               const LogisticOptions& opt = {});

LogisticFitResult fit_logistic(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const LogisticOptions& opt = {});

}  // namespace pstrata
