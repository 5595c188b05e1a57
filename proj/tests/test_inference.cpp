#include <doctest.h>

#include <cmath>
#include <numeric>

#include "pstrata/inference.hpp"
#include "pstrata/simulation.hpp"

using namespace pstrata;

namespace {

Dataset simulated(std::size_t n, std::uint64_t seed, double eta = 0.0) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.eta = eta;
  cfg.seed = seed;
  return generate(cfg).data;
}

Estimator mean_revenue_estimator() {
  return [](const Dataset& d) {
    double s = 0.0;
    for (const Observation& o : d.rows) s += o.y;
    return s / double(d.rows.size());
  };
}

}  // namespace

TEST_CASE("quantile_type1 is the lower order statistic") {
  std::vector<double> v = {5.0, 1.0, 3.0, 2.0, 4.0};
  CHECK(quantile_type1(v, 0.0) == 1.0);
  CHECK(quantile_type1(v, 1.0) == 5.0);
  CHECK(quantile_type1(v, 0.5) == 3.0);
  CHECK(quantile_type1(v, 0.2) == 1.0);   // ceil(0.2*5) = 1st order stat
  CHECK(quantile_type1(v, 0.21) == 2.0);  // ceil(1.05) = 2nd
  CHECK(quantile_type1({7.0}, 0.5) == 7.0);
}

TEST_CASE("bootstrap covers a simple mean and is deterministic") {
  Dataset d = simulated(800, 5);
  BootstrapOptions opt;
  opt.B = 150;
  BootstrapResult r = bootstrap(d, mean_revenue_estimator(), opt);
  CHECK(r.point == doctest::Approx(mean_revenue_estimator()(d)));
  CHECK(r.failures == 0);
  CHECK(int(r.replicates.size()) == opt.B);
  CHECK(r.lo < r.point);
  CHECK(r.hi > r.point);
  CHECK(r.lo == quantile_type1(r.replicates, 0.025));
  CHECK(r.hi == quantile_type1(r.replicates, 0.975));

  SUBCASE("same options reproduce identical replicates") {
    BootstrapResult r2 = bootstrap(d, mean_revenue_estimator(), opt);
    CHECK(r2.replicates == r.replicates);
  }
  SUBCASE("the interval respects the requested level") {
    BootstrapOptions wide = opt;
    wide.level = 0.5;
    BootstrapResult rw = bootstrap(d, mean_revenue_estimator(), wide);
    CHECK(rw.hi - rw.lo < r.hi - r.lo);
  }
  SUBCASE("worker count does not change the result") {
    BootstrapOptions par = opt;
    par.workers = 3;
    BootstrapResult rp = bootstrap(d, mean_revenue_estimator(), par);
    CHECK(rp.replicates == r.replicates);
  }
}

TEST_CASE("bootstrap enforces the failure budget") {
  Dataset d = simulated(300, 9);
  int calls = 0;
  Estimator flaky = [&calls](const Dataset& dd) {
    ++calls;
    if (calls % 2 == 0) throw std::runtime_error("boom");
    double s = 0.0;
    for (const Observation& o : dd.rows) s += o.y;
    return s / double(dd.rows.size());
  };
  BootstrapOptions opt;
  opt.B = 50;
  opt.workers = 1;
  CHECK_THROWS(bootstrap(d, flaky, opt));

  SUBCASE("occasional failures are tolerated and counted") {
    calls = 0;
    Estimator rare = [&calls](const Dataset& dd) {
      ++calls;
      if (calls % 20 == 0) throw std::runtime_error("boom");
      double s = 0.0;
      for (const Observation& o : dd.rows) s += o.y;
      return s / double(dd.rows.size());
    };
    BootstrapResult r = bootstrap(d, rare, opt);
    CHECK(r.failures > 0);
    CHECK(r.failures + int(r.replicates.size()) == opt.B);
  }
}

TEST_CASE("sensitivity_sweep runs the pipeline across the eta grid") {
  Dataset d = simulated(1500, 13, 0.25);
  PipelineConfig base;
  std::vector<double> etas = {0.0, 0.25, 0.5};
  SensitivityGrid grid = sensitivity_sweep(d, etas, base);
  REQUIRE(grid.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const SweepPoint& p = grid.points[i];
    CHECK(p.eta == etas[i]);
    CHECK(!p.failed);
    for (double e : p.estimands) CHECK(std::isfinite(e));
    double mass = 0.0;
    for (double q : p.proportions) mass += q;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    std::size_t labels = 0;
    for (std::size_t cnt : p.label_counts) labels += cnt;
    CHECK(labels == d.rows.size());
  }
  // pi11 mass grows with the odds-ratio parameter
  CHECK(grid.points[2].proportions[3] > grid.points[0].proportions[3]);

  SUBCASE("non-increasing grids are rejected") {
    CHECK_THROWS(sensitivity_sweep(d, {0.5, 0.25}, base));
    CHECK_THROWS(sensitivity_sweep(d, {0.25, 0.25}, base));
  }
}

TEST_CASE("convergence_diagnostic shows the root-n decay of a mean") {
  SampleGenerator gen = [](std::size_t n, Rng& rng) {
    Dataset d;
    d.a_dim = d.c_dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
      Observation o;
      o.z = int(rng.below(2));
      o.s = 1;
      o.y = 2.0 + rng.normal();
      o.a = {rng.normal()};
      o.c = {rng.normal()};
      d.rows.push_back(o);
    }
    return d;
  };
  Estimator mean_y = mean_revenue_estimator();
  ConvergenceTable t = convergence_diagnostic(
      gen, {200, 800, 3200, 12800}, 40, mean_y, 2.0, 3);
  REQUIRE(t.rows.size() == 4);
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    CHECK(t.rows[i].rmse < t.rows[i - 1].rmse);
  CHECK(std::abs(t.loglog_slope + 0.5) < 0.12);
}
