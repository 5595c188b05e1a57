#include "pstrata/strata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pstrata/rng.hpp"

namespace pstrata {

namespace {

Eigen::VectorXd design_row(const std::vector<double>& a,
                           const std::vector<double>& c) {
  Eigen::VectorXd phi(1 + a.size() + c.size());
  phi[0] = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) phi[1 + i] = a[i];
  for (std::size_t i = 0; i < c.size(); ++i) phi[1 + a.size() + i] = c[i];
  return phi;
}

Eigen::MatrixXd design_matrix(const Dataset& d,
                              const std::vector<int>& rows) {
  Eigen::MatrixXd X(rows.size(), 1 + d.a_dim + d.c_dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    X.row(i) = design_row(d.rows[rows[i]].a, d.rows[rows[i]].c).transpose();
  return X;
}

}  // namespace

double ResponseRateModel::rate(int z, const std::vector<double>& a,
                               const std::vector<double>& c) const {
  const Eigen::VectorXd& beta = z == 0 ? coef0 : coef1;
  Eigen::VectorXd phi = design_row(a, c);
  if (phi.size() != beta.size())
    throw std::invalid_argument("response rate model: dimension mismatch");
  double e = expit(beta.dot(phi));
  return std::clamp(e, clip_lo, clip_hi);
}

ResponseRateModel fit_response_rates(const Dataset& d) {
  require_valid(d);
  ResponseRateModel m;
  for (int z = 0; z < 2; ++z) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < d.rows.size(); ++i)
      if (d.rows[i].z == z) idx.push_back(static_cast<int>(i));
    Eigen::MatrixXd X = design_matrix(d, idx);
    Eigen::VectorXd y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = d.rows[idx[i]].s;
    LogisticFitResult fit = fit_logistic(X, y);
    (z == 0 ? m.coef0 : m.coef1) = fit.coef;
  }
  return m;
}

double pi11_closed_form(double e0, double e1, double theta) {
  if (!(e0 > 0.0 && e0 < 1.0 && e1 > 0.0 && e1 < 1.0))
    throw std::invalid_argument("pi11_closed_form: rates must be in (0,1)");
  if (!(theta > 0.0))
    throw std::invalid_argument("pi11_closed_form: theta must be positive");

  const double lo = std::max(0.0, e0 + e1 - 1.0);
  const double hi = std::min(e0, e1);
  double p;
  if (std::abs(theta - 1.0) < 1e-9) {
    p = e0 * e1;
  } else {
    const double tm1 = theta - 1.0;
    const double b = 1.0 + tm1 * (e0 + e1);
    double disc = b * b - 4.0 * theta * tm1 * e0 * e1;
    if (disc < 0.0) {
      if (disc < -1e-12)
        throw std::runtime_error("pi11_closed_form: negative discriminant");
      disc = 0.0;
    }
    p = (b - std::sqrt(disc)) / (2.0 * tm1);
  }
  return std::clamp(p, lo, hi);
}

StrataVector strata_from_margins(double e0, double e1, double theta) {
  double p11 = pi11_closed_form(e0, e1, theta);
  double p01 = e1 - p11;
  double p10 = e0 - p11;
  double p00 = 1.0 - p11 - p01 - p10;
  StrataVector v = {p00, p01, p10, p11};
  double sum = 0.0;
  for (double& x : v) {
    x = std::clamp(x, 0.0, 1.0);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

StrataVector multinomial_strata(const MultinomialStrataParams& p,
                                const std::vector<double>& a,
                                const std::vector<double>& c) {
  Eigen::VectorXd phi = design_row(a, c);
  if (phi.size() != p.iota01.size() || phi.size() != p.iota10.size())
    throw std::invalid_argument("strata model: dimension mismatch");
  double u01 = p.iota01.dot(phi);
  double u10 = p.iota10.dot(phi);
  double logits[kNumStrata] = {0.0, u01, u10, u01 + u10 + p.eta};
  double m = *std::max_element(logits, logits + kNumStrata);
  StrataVector v;
  double sum = 0.0;
  for (int g = 0; g < kNumStrata; ++g) {
    v[g] = std::exp(logits[g] - m);
    sum += v[g];
  }
  for (double& x : v) x /= sum;
  return v;
}

StrataVector StrataProbabilityModel::predict(const std::vector<double>& a,
                                             const std::vector<double>& c) const {
  if (static_cast<int>(a.size()) != a_dim ||
      static_cast<int>(c.size()) != c_dim)
    throw std::invalid_argument("predict_strata: covariate dimension mismatch");
  if (kind == Kind::Multinomial) return multinomial_strata(mn, a, c);
  double e0 = rates.rate(0, a, c);
  double e1 = rates.rate(1, a, c);
  return strata_from_margins(e0, e1, odds.theta());
}

double StrataProbabilityModel::response_rate(int z, const std::vector<double>& a,
                                             const std::vector<double>& c) const {
  if (kind == Kind::ClosedForm) return rates.rate(z, a, c);
  StrataVector v = multinomial_strata(mn, a, c);
  return z == 1 ? v[1] + v[3] : v[2] + v[3];
}

StrataProbabilityModel closed_form_fit(const Dataset& d,
                                       const OddsRatioSpec& odds) {
  StrataProbabilityModel m;
  m.kind = StrataProbabilityModel::Kind::ClosedForm;
  m.rates = fit_response_rates(d);
  m.odds = odds;
  m.a_dim = d.a_dim;
  m.c_dim = d.c_dim;
  return m;
}

double observed_loglik(const MultinomialStrataParams& p, const Dataset& d) {
  double ll = 0.0;
  for (const Observation& o : d.rows) {
    StrataVector v = multinomial_strata(p, o.a, o.c);
    double e = o.z == 1 ? v[1] + v[3] : v[2] + v[3];
    e = std::clamp(e, 1e-300, 1.0 - 1e-16);
    ll += o.s == 1 ? std::log(e) : std::log1p(-e);
  }
  return ll;
}

namespace {

// Posterior stratum weights per (Z,S) cell. Each cell admits exactly two
// feasible strata; posteriors follow from the multinomial model restricted
// to that pair. (The supplement's written labels for the S=0 cells do not
// match the feasible strata; the weights below are derived from the model.)
void posterior_weights(const MultinomialStrataParams& p, const Observation& o,
                       double w[kNumStrata]) {
  Eigen::VectorXd phi = design_row(o.a, o.c);
  double u01 = p.iota01.dot(phi);
  double u10 = p.iota10.dot(phi);
  std::fill(w, w + kNumStrata, 0.0);
  if (o.z == 1 && o.s == 1) {            // feasible {01, 11}
    double w11 = expit(u10 + p.eta);
    w[3] = w11;
    w[1] = 1.0 - w11;
  } else if (o.z == 0 && o.s == 1) {     // feasible {10, 11}
    double w11 = expit(u01 + p.eta);
    w[3] = w11;
    w[2] = 1.0 - w11;
  } else if (o.z == 1 && o.s == 0) {     // feasible {00, 10}
    double w10 = expit(u10);
    w[2] = w10;
    w[0] = 1.0 - w10;
  } else {                               // Z=0, S=0: feasible {00, 01}
    double w01 = expit(u01);
    w[1] = w01;
    w[0] = 1.0 - w01;
  }
}

// Precomputed per-row quantities shared by every EM pass.
struct EmData {
  Eigen::MatrixXd Phi;        // n x (1 + p + q) design rows
  std::vector<int> cell;      // 2*z + s
  double eta = 0.0;
};

EmData make_em_data(const Dataset& d, double eta) {
  EmData e;
  const std::size_t n = d.rows.size();
  e.Phi.resize(n, 1 + d.a_dim + d.c_dim);
  e.cell.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.Phi.row(i) = design_row(d.rows[i].a, d.rows[i].c).transpose();
    e.cell[i] = 2 * d.rows[i].z + d.rows[i].s;
  }
  e.eta = eta;
  return e;
}

// Per-row model quantities at the stacked parameter v = [iota01; iota10].
struct EmState {
  Eigen::VectorXd u01, u10;        // linear predictors
  Eigen::VectorXd t1, t0, pi3;     // pr(S1=1|X), pr(S0=1|X), pi11
  double loglik = 0.0;             // observed-data log-likelihood
};

EmState em_state(const EmData& e, const Eigen::VectorXd& v) {
  const int dd = static_cast<int>(v.size()) / 2;
  const Eigen::Index n = e.Phi.rows();
  EmState s;
  s.u01 = e.Phi * v.head(dd);
  s.u10 = e.Phi * v.tail(dd);
  s.t1.resize(n);
  s.t0.resize(n);
  s.pi3.resize(n);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = s.u01[i], b = s.u10[i], u11 = a + b + e.eta;
    double m = std::max({0.0, a, b, u11});
    double p0 = std::exp(-m), p1 = std::exp(a - m), p2 = std::exp(b - m),
           p3 = std::exp(u11 - m);
    double sum = p0 + p1 + p2 + p3;
    double t1 = (p1 + p3) / sum, t0 = (p2 + p3) / sum;
    s.t1[i] = t1;
    s.t0[i] = t0;
    s.pi3[i] = p3 / sum;
    double rate = e.cell[i] >= 2 ? t1 : t0;     // z = cell/2
    rate = std::clamp(rate, 1e-300, 1.0 - 1e-16);
    ll += (e.cell[i] & 1) ? std::log(rate) : std::log1p(-rate);
  }
  s.loglik = ll;
  return s;
}

// E-step sufficient statistics: posterior pr(S1=1) and pr(S0=1) per row.
void em_posteriors(const EmData& e, const EmState& s, Eigen::VectorXd& t1hat,
                   Eigen::VectorXd& t0hat) {
  const Eigen::Index n = e.Phi.rows();
  t1hat.resize(n);
  t0hat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (e.cell[i]) {
      case 3:  // z=1, s=1: feasible {01, 11}
        t1hat[i] = 1.0;
        t0hat[i] = expit(s.u10[i] + e.eta);
        break;
      case 1:  // z=0, s=1: feasible {10, 11}
        t1hat[i] = expit(s.u01[i] + e.eta);
        t0hat[i] = 1.0;
        break;
      case 2:  // z=1, s=0: feasible {00, 10}
        t1hat[i] = 0.0;
        t0hat[i] = expit(s.u10[i]);
        break;
      default:  // z=0, s=0: feasible {00, 01}
        t1hat[i] = expit(s.u01[i]);
        t0hat[i] = 0.0;
        break;
    }
  }
}

// Expected complete-data log-likelihood up to terms constant in v.
double q_value(const EmData& e, const EmState& s, const Eigen::VectorXd& t1hat,
               const Eigen::VectorXd& t0hat) {
  const Eigen::Index n = e.Phi.rows();
  double q = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = s.u01[i], b = s.u10[i], u11 = a + b + e.eta;
    double m = std::max({0.0, a, b, u11});
    double logS = m + std::log(std::exp(-m) + std::exp(a - m) +
                               std::exp(b - m) + std::exp(u11 - m));
    q += t1hat[i] * a + t0hat[i] * b - logS;
  }
  return q;
}

// One damped Newton ascent step on Q (generalized EM): cheaper than a full
// inner maximization and preserves the monotone-likelihood property, since
// any Q increase increases the observed-data likelihood.
Eigen::VectorXd q_ascent_step(const EmData& e, const EmState& s,
                              const Eigen::VectorXd& t1hat,
                              const Eigen::VectorXd& t0hat,
                              const Eigen::VectorXd& v) {
  const int dd = static_cast<int>(v.size()) / 2;
  Eigen::VectorXd grad(2 * dd);
  grad.head(dd) = e.Phi.transpose() * (t1hat - s.t1);
  grad.tail(dd) = e.Phi.transpose() * (t0hat - s.t0);
  Eigen::ArrayXd w11 = s.t1.array() * (1.0 - s.t1.array());
  Eigen::ArrayXd w00 = s.t0.array() * (1.0 - s.t0.array());
  Eigen::ArrayXd wx = s.pi3.array() - s.t1.array() * s.t0.array();
  Eigen::MatrixXd H(2 * dd, 2 * dd);
  H.topLeftCorner(dd, dd) =
      e.Phi.transpose() * (e.Phi.array().colwise() * w11).matrix();
  H.bottomRightCorner(dd, dd) =
      e.Phi.transpose() * (e.Phi.array().colwise() * w00).matrix();
  H.topRightCorner(dd, dd) =
      e.Phi.transpose() * (e.Phi.array().colwise() * wx).matrix();
  H.bottomLeftCorner(dd, dd) = H.topRightCorner(dd, dd).transpose();
  H.diagonal().array() += 1e-10;
  Eigen::VectorXd step = H.ldlt().solve(grad);
  double q0 = q_value(e, s, t1hat, t0hat);
  double scale = 1.0;
  for (int h = 0; h < 50; ++h) {
    Eigen::VectorXd cand = v + scale * step;
    EmState cs = em_state(e, cand);
    if (q_value(e, cs, t1hat, t0hat) >= q0 - 1e-13) return cand;
    scale *= 0.5;
  }
  return v;  // no ascent direction found: already at a Q-stationary point
}

// Full Newton maximization of Q for the deterministic initializer.
Eigen::VectorXd maximize_q(const EmData& e, const Eigen::VectorXd& t1hat,
                           const Eigen::VectorXd& t0hat, Eigen::VectorXd v) {
  for (int iter = 0; iter < 100; ++iter) {
    EmState s = em_state(e, v);
    Eigen::VectorXd next = q_ascent_step(e, s, t1hat, t0hat, v);
    if ((next - v).cwiseAbs().maxCoeff() < 1e-10) return next;
    v = next;
  }
  return v;
}

struct EmRun {
  MultinomialStrataParams params;
  std::vector<double> trace;
  double loglik = -std::numeric_limits<double>::infinity();
  bool converged = false;
};

EmRun run_em_once(const EmData& e, Eigen::VectorXd v, const EmOptions& opt) {
  const int dd = static_cast<int>(v.size()) / 2;
  EmRun run;
  Eigen::VectorXd t1hat, t0hat;
  double prev = -std::numeric_limits<double>::infinity();
  EmState s = em_state(e, v);
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    double ll = s.loglik;
    if (iter > 0 && ll - prev < -1e-10)
      throw std::runtime_error("EM log-likelihood decreased");
    run.trace.push_back(ll);
    if (iter > 0 && std::abs(ll - prev) < opt.tol * (1.0 + std::abs(prev))) {
      run.converged = true;
      break;
    }
    prev = ll;
    em_posteriors(e, s, t1hat, t0hat);
    v = q_ascent_step(e, s, t1hat, t0hat, v);
    s = em_state(e, v);
  }
  run.params.iota01 = v.head(dd);
  run.params.iota10 = v.tail(dd);
  run.params.eta = e.eta;
  run.loglik = s.loglik;
  if (run.trace.empty() || run.trace.back() != run.loglik)
    run.trace.push_back(run.loglik);
  return run;
}

}  // namespace

StrataProbabilityModel em_fit(const Dataset& d, const OddsRatioSpec& odds,
                              const EmOptions& opt, EmTrace* trace) {
  require_valid(d);
  if (opt.max_iter < 1) throw std::invalid_argument("em_fit: max_iter >= 1");
  const int dd = 1 + d.a_dim + d.c_dim;
  EmData e = make_em_data(d, odds.eta);

  // Deterministic initialization: one M-step from 0.5/0.5 cell posteriors.
  const Eigen::Index n = e.Phi.rows();
  Eigen::VectorXd t1hat(n), t0hat(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (e.cell[i]) {
      case 3: t1hat[i] = 1.0; t0hat[i] = 0.5; break;
      case 1: t1hat[i] = 0.5; t0hat[i] = 1.0; break;
      case 2: t1hat[i] = 0.0; t0hat[i] = 0.5; break;
      default: t1hat[i] = 0.5; t0hat[i] = 0.0; break;
    }
  }
  Eigen::VectorXd init =
      maximize_q(e, t1hat, t0hat, Eigen::VectorXd::Zero(2 * dd));

  EmRun best;
  int best_idx = -1;
  Rng rng(opt.seed);
  for (int r = 0; r <= opt.restarts; ++r) {
    Eigen::VectorXd start = init;
    if (r > 0)
      for (Eigen::Index k = 0; k < start.size(); ++k)
        start[k] += 0.5 * rng.normal();
    try {
      EmRun run = run_em_once(e, start, opt);
      if (run.loglik > best.loglik) {
        best = run;
        best_idx = r;
      }
    } catch (const std::exception&) {
      if (r == 0) throw;  // deterministic start failing is a real error
    }
  }
  if (best_idx < 0) throw std::runtime_error("em_fit: all starts failed");

  if (trace) {
    trace->log_likelihood = best.trace;
    trace->final_log_likelihood = best.loglik;
    trace->best_restart = best_idx;
    trace->converged = best.converged;
  }
  StrataProbabilityModel m;
  m.kind = StrataProbabilityModel::Kind::Multinomial;
  m.mn = best.params;
  m.odds = odds;
  m.a_dim = d.a_dim;
  m.c_dim = d.c_dim;
  return m;
}

}  // namespace pstrata
