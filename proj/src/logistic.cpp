#include "pstrata/logistic.hpp"

#include <cmath>
#include <stdexcept>

namespace pstrata {

namespace {

double weighted_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& offset,
                       const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = X * beta + offset;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double t = eta[i];
    // log(1+exp(t)) computed stably
    double lse = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += w[i] * (y[i] * t - lse);
  }
  return ll;
}

}  // namespace

LogisticFitResult fit_logistic(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w,
                               const Eigen::VectorXd& offset,
                               const LogisticOptions& opt) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n || w.size() != n || offset.size() != n)
    throw std::invalid_argument("fit_logistic: size mismatch");

  double wy = (w.array() * y.array()).sum();
  double wtot = w.sum();
  if (wtot <= 0.0 || wy <= 0.0 || wy >= wtot)
    throw std::runtime_error("degenerate response arm");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = weighted_loglik(X, y, w, offset, beta);
  LogisticFitResult res;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    Eigen::VectorXd eta = X * beta + offset;
    Eigen::VectorXd mu(n), v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      v[i] = w[i] * mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd grad = X.transpose() * (w.array() * (y - mu).array()).matrix();
    res.grad_norm = grad.norm();
    res.iterations = iter;
    if (res.grad_norm < opt.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd H = X.transpose() * v.asDiagonal() * X;
    // small ridge keeps the solve well posed when v collapses
    H.diagonal().array() += 1e-12;
    Eigen::VectorXd step = H.ldlt().solve(grad);
    double scale = 1.0;
    double new_ll = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd cand;
    for (int h = 0; h < 40; ++h) {
      cand = beta + scale * step;
      new_ll = weighted_loglik(X, y, w, offset, cand);
      if (new_ll >= ll - 1e-12) break;
      scale *= 0.5;
    }
    beta = cand;
    ll = new_ll;
    if (beta.norm() > opt.separation_bound)
      throw std::runtime_error("perfect separation detected");
  }
  res.coef = beta;
  res.log_likelihood = ll;
  if (!res.converged) {
    throw std::runtime_error(
        "logistic regression failed to converge (gradient norm " +
        std::to_string(res.grad_norm) + ")");
  }
  return res;
}

LogisticFitResult fit_logistic(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const LogisticOptions& opt) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(X.rows());
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(X.rows());
  return fit_logistic(X, y, w, offset, opt);
}

}  // namespace pstrata
