#include "pstrata/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace pstrata {

double quantile_type1(std::vector<double> v, double p) {
  if (v.empty()) throw std::runtime_error("quantile of empty sample");
  std::sort(v.begin(), v.end());
  if (p <= 0.0) return v.front();
  std::size_t k = static_cast<std::size_t>(std::ceil(p * v.size()));
  k = std::min(std::max<std::size_t>(k, 1), v.size());
  return v[k - 1];
}

BootstrapResult bootstrap(const Dataset& d, const Estimator& estimator,
                          const BootstrapOptions& opt) {
  if (opt.B < 2) throw std::invalid_argument("bootstrap needs B >= 2");
  require_valid(d);
  BootstrapResult res;
  res.point = estimator(d);

  const std::size_t n = d.rows.size();
  std::vector<double> reps(opt.B, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> ok(opt.B, 0);
  int nw = opt.workers > 0
               ? opt.workers
               : static_cast<int>(std::thread::hardware_concurrency());
  nw = std::clamp(nw, 1, opt.B);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int b = next.fetch_add(1);
      if (b >= opt.B) break;
      Rng rng = Rng::stream(opt.seed, static_cast<std::uint64_t>(b) + 1);
      Dataset boot;
      boot.a_dim = d.a_dim;
      boot.c_dim = d.c_dim;
      boot.rows.reserve(n);
      for (std::size_t i = 0; i < n; ++i)
        boot.rows.push_back(d.rows[rng.below(n)]);
      try {
        reps[b] = estimator(boot);
        ok[b] = 1;
      } catch (const std::exception&) {
        ok[b] = 0;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nw; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (int b = 0; b < opt.B; ++b) {
    if (ok[b])
      res.replicates.push_back(reps[b]);
    else
      ++res.failures;
  }
  if (res.failures > opt.max_failure_frac * opt.B)
    throw std::runtime_error("bootstrap: too many failed replicates (" +
                             std::to_string(res.failures) + " of " +
                             std::to_string(opt.B) + ")");
  double alpha = 1.0 - opt.level;
  res.lo = quantile_type1(res.replicates, alpha / 2.0);
  res.hi = quantile_type1(res.replicates, 1.0 - alpha / 2.0);
  return res;
}

SensitivityGrid sensitivity_sweep(const Dataset& d,
                                  const std::vector<double>& etas,
                                  PipelineConfig base) {
  require_valid(d);
  for (std::size_t i = 1; i < etas.size(); ++i)
    if (etas[i] <= etas[i - 1])
      throw std::invalid_argument("eta grid must be strictly increasing");
  SensitivityGrid grid;
  for (double eta : etas) {
    SweepPoint pt;
    pt.eta = eta;
    try {
      PipelineConfig cfg = base;
      cfg.odds.eta = eta;
      FittedPipeline fp = fit_pipeline(d, cfg);
      pt.estimands = marginal_estimands(fp, d);
      for (const Observation& o : d.rows) {
        StrataVector pi = fp.strata.predict(o.a, o.c);
        for (int g = 0; g < kNumStrata; ++g) pt.proportions[g] += pi[g];
        StratumLabel lab = classify_bayes(fp.rewards, fp.strata, o.a, o.c);
        ++pt.label_counts[stratum_index(lab)];
      }
      for (double& p : pt.proportions) p /= static_cast<double>(d.rows.size());
      Policy pol = [&fp, &cfg](const std::vector<double>& a,
                               const std::vector<double>& c) {
        StratumLabel lab = classify_bayes(fp.rewards, fp.strata, a, c);
        return treatment_rule(fp.outcome, cfg.costs, lab, a, c);
      };
      PolicyEvaluation ev = value_function(pol, fp.strata, fp.outcome,
                                           cfg.costs, d);
      pt.bayes_value = ev.value;
      pt.revenue_ratio = ev.revenue_ratio;
    } catch (const std::exception& e) {
      pt.failed = true;
      pt.error = e.what();
    }
    grid.points.push_back(std::move(pt));
  }
  return grid;
}

ConvergenceTable convergence_diagnostic(const SampleGenerator& gen,
                                        const std::vector<std::size_t>& ns,
                                        int replications,
                                        const Estimator& estimand,
                                        double truth, std::uint64_t seed,
                                        int workers) {
  if (ns.empty() || replications < 1)
    throw std::invalid_argument("convergence_diagnostic: empty design");
  ConvergenceTable tab;
  const int total = static_cast<int>(ns.size()) * replications;
  std::vector<double> sq(total, 0.0);
  int nw = workers > 0 ? workers
                       : static_cast<int>(std::thread::hardware_concurrency());
  nw = std::clamp(nw, 1, total);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int t = next.fetch_add(1);
      if (t >= total) break;
      int i = t / replications, r = t % replications;
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i) * 100003ULL +
                                      static_cast<std::uint64_t>(r) + 1);
      Dataset d = gen(ns[i], rng);
      double err = estimand(d) - truth;
      sq[t] = err * err;
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nw; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < ns.size(); ++i) {
    double mse = 0.0;
    for (int r = 0; r < replications; ++r)
      mse += sq[i * replications + r];
    mse /= replications;
    tab.rows.push_back({ns[i], std::sqrt(mse)});
  }
  // OLS slope of log rmse on log n
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : tab.rows) {
    double x = std::log(static_cast<double>(row.n));
    double y = std::log(std::max(row.rmse, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double m = static_cast<double>(tab.rows.size());
  double denom = m * sxx - sx * sx;
  tab.loglog_slope = denom != 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
  return tab;
}

}  // namespace pstrata
