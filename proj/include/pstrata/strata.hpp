#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "pstrata/logistic.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

using StrataVector = std::array<double, kNumStrata>;  // order 00,01,10,11

// Per-arm logistic response-rate models e_z(x) = pr(S=1 | Z=z, x),
// coefficients over (1, a, c); predictions clipped into (0,1).
struct ResponseRateModel {
  Eigen::VectorXd coef0;
  Eigen::VectorXd coef1;
  double clip_lo = 1e-6;
  double clip_hi = 1.0 - 1e-6;

  double rate(int z, const std::vector<double>& a,
              const std::vector<double>& c) const;
};

ResponseRateModel fit_response_rates(const Dataset& d);

// pr(G = 11 | x) from the margins (e0, e1) and the odds ratio theta.
// theta = 1 factorizes to e0*e1; otherwise the root of
//   (theta-1) p^2 - p [1 + (theta-1)(e0+e1)] + theta e0 e1 = 0
// lying in [max(0, e0+e1-1), min(e0, e1)].
double pi11_closed_form(double e0, double e1, double theta);

// Full strata vector from margins: pi01 = e1 - pi11, pi10 = e0 - pi11,
// pi00 = remainder; components clamped to [0,1] then renormalized.
StrataVector strata_from_margins(double e0, double e1, double theta);

// Multinomial-logit latent model: utilities over (1, a, c)
//   u01 = iota01 . phi(x), u10 = iota10 . phi(x),
//   logits (00, 01, 10, 11) = (0, u01, u10, u01 + u10 + eta).
// eta is a fixed known offset, never estimated.
struct MultinomialStrataParams {
  Eigen::VectorXd iota01;
  Eigen::VectorXd iota10;
  double eta = 0.0;
};

StrataVector multinomial_strata(const MultinomialStrataParams& p,
                                const std::vector<double>& a,
                                const std::vector<double>& c);

struct StrataProbabilityModel {
  enum class Kind { ClosedForm, Multinomial };
  Kind kind = Kind::ClosedForm;

  // closed-form route
  ResponseRateModel rates;
  OddsRatioSpec odds;

  // EM route
  MultinomialStrataParams mn;

  int a_dim = 0;
  int c_dim = 0;

  StrataVector predict(const std::vector<double>& a,
                       const std::vector<double>& c) const;
  // Model-implied response rates e1 = pi01+pi11, e0 = pi10+pi11.
  double response_rate(int z, const std::vector<double>& a,
                       const std::vector<double>& c) const;
};

StrataProbabilityModel closed_form_fit(const Dataset& d,
                                       const OddsRatioSpec& odds);

struct EmOptions {
  double tol = 1e-8;       // relative log-likelihood change
  int max_iter = 500;
  int restarts = 5;        // random restarts on top of the deterministic init
  std::uint64_t seed = 20240811;
};

struct EmTrace {
  std::vector<double> log_likelihood;  // one entry per EM iteration
  double final_log_likelihood = 0.0;
  int best_restart = 0;
  bool converged = false;
};

StrataProbabilityModel em_fit(const Dataset& d, const OddsRatioSpec& odds,
                              const EmOptions& opt = {},
                              EmTrace* trace = nullptr);

// Observed-data log-likelihood of S given (Z, X) under a multinomial model.
double observed_loglik(const MultinomialStrataParams& p, const Dataset& d);

}  // namespace pstrata
