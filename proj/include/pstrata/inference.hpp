#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pstrata/pipeline.hpp"
#include "pstrata/rng.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

using Estimator = std::function<double(const Dataset&)>;

struct BootstrapOptions {
  int B = 200;
  double level = 0.95;
  std::uint64_t seed = 2;
  int workers = 0;
  double max_failure_frac = 0.2;
};

struct BootstrapResult {
  double point = 0.0;
  std::vector<double> replicates;  // successful ones, in replicate order
  int failures = 0;
  double lo = 0.0, hi = 0.0;  // type-1 percentile interval endpoints
};

// Nonparametric row bootstrap; the estimator is re-run in full on each
// resample. More than max_failure_frac failed replicates is an error.
BootstrapResult bootstrap(const Dataset& d, const Estimator& estimator,
                          const BootstrapOptions& opt = {});

// Lower empirical quantile (type 1, order statistic), p in [0, 1].
double quantile_type1(std::vector<double> v, double p);

struct SweepPoint {
  double eta = 0.0;
  bool failed = false;
  std::string error;
  std::array<double, 4> estimands{};    // marginal_estimands order
  std::array<double, 4> proportions{};  // mean pi_g over rows
  double bayes_value = 0.0;             // value of the bayes-label policy
  double revenue_ratio = 0.0;
  std::array<std::size_t, kNumStrata> label_counts{};  // bayes labels
};

struct SensitivityGrid {
  std::vector<SweepPoint> points;
};

// Full pipeline per eta; per-point failures are recorded and the sweep
// continues. etas must be strictly increasing.
SensitivityGrid sensitivity_sweep(const Dataset& d,
                                  const std::vector<double>& etas,
                                  PipelineConfig base);

struct ConvergenceRow {
  std::size_t n = 0;
  double rmse = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double loglog_slope = 0.0;  // OLS slope of log rmse on log n
};

using SampleGenerator = std::function<Dataset(std::size_t, Rng&)>;

ConvergenceTable convergence_diagnostic(const SampleGenerator& gen,
                                        const std::vector<std::size_t>& ns,
                                        int replications,
                                        const Estimator& estimand,
                                        double truth, std::uint64_t seed = 3,
                                        int workers = 0);

}  // namespace pstrata
