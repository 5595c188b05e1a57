#include <doctest.h>

#include <cmath>

#include "pstrata/decision.hpp"
#include "pstrata/rng.hpp"
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

StrataProbabilityModel true_strata(double eta) {
  StrataProbabilityModel m;
  m.kind = StrataProbabilityModel::Kind::Multinomial;
  m.mn = dgp_strata_params(eta);
  m.a_dim = 1;
  m.c_dim = 1;
  return m;
}

OutcomeModel true_outcome_model() {
  OutcomeModel m;
  m.family = OutcomeFamily::AdditiveExponential;
  m.a_dim = m.c_dim = 1;
  m.beta_1_11 = Eigen::Vector3d(1.0, 1.0, 0.5);
  m.beta_1_01 = Eigen::Vector3d(1.0, 1.5, 1.15);
  m.beta_0_11 = Eigen::Vector3d(1.5, 1.0, 1.2);
  m.beta_0_10 = Eigen::Vector3d(1.5, 0.5, -1.1);
  return m;
}

// Dense deterministic covariate grid with true strata and outcomes attached.
PopulationTruth grid_truth(double eta, int side = 25, double span = 2.5) {
  PopulationTruth t;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      double a = -span + 2.0 * span * i / (side - 1);
      double c = -span + 2.0 * span * j / (side - 1);
      t.a_points.push_back({a});
      t.c_points.push_back({c});
      // N(-0.25, 1) x N(0.25, 1) density weights
      t.weights.push_back(std::exp(-0.5 * (a + 0.25) * (a + 0.25)) *
                          std::exp(-0.5 * (c - 0.25) * (c - 0.25)));
    }
  t.pi = [eta](const std::vector<double>& a, const std::vector<double>& c) {
    return true_pi(eta, a, c);
  };
  t.outcome = [](int z, StratumLabel g, const std::vector<double>& a,
                 const std::vector<double>& c) {
    return true_outcome(OutcomeFamily::AdditiveExponential, z, g, a, c);
  };
  return t;
}

}  // namespace

TEST_CASE("treatment_rule covers every stratum case") {
  OutcomeModel om = true_outcome_model();
  CostSpec zero;
  std::vector<double> a = {0.0}, c = {0.0};

  // 00: pure cost comparison, tie resolves to treat
  CHECK(treatment_rule(om, zero, StratumLabel::NeverBuyer, a, c) == 1);
  // 01: positive revenue under treatment vs zero
  CHECK(treatment_rule(om, zero, StratumLabel::Persuadable, a, c) == 1);
  // 10: revenue only under control
  CHECK(treatment_rule(om, zero, StratumLabel::Discouraged, a, c) == 0);
  // 11: compare the two fitted means (control wins at the origin)
  CHECK(treatment_rule(om, zero, StratumLabel::AlwaysBuyer, a, c) == 0);

  SUBCASE("costs flip the comparisons") {
    CostSpec costly;
    costly.c1.intercept = 100.0;  // prohibitive treatment cost
    for (StratumLabel g : label_policy_order())
      CHECK(treatment_rule(om, costly, g, a, c) == 0);
    CostSpec cheap_treat;
    cheap_treat.c0.intercept = 100.0;  // prohibitive control cost
    for (StratumLabel g : label_policy_order())
      CHECK(treatment_rule(om, cheap_treat, g, a, c) == 1);
  }
}

TEST_CASE("reward_matrix structure under zero costs") {
  Dataset d = simulated(4000, 8);
  StrataProbabilityModel strata = true_strata(0.0);
  OutcomeModel om = true_outcome_model();
  CostSpec zero;
  RewardMatrix rm = reward_matrix(d, strata, om, zero);
  CHECK(rm.all_defined());

  SUBCASE("labels 00 and 01 induce the same all-treat policy, so tie") {
    for (int s = 0; s < kNumStrata; ++s)
      CHECK(rm.entries[0][s] == rm.entries[1][s]);
  }
  SUBCASE("true-stratum 00 yields zero revenue everywhere") {
    for (int st = 0; st < kNumStrata; ++st) CHECK(rm.entries[st][0] == 0.0);
  }
  SUBCASE("positive homogeneity: doubling outcome scale doubles entries") {
    OutcomeModel om2 = om;
    // exp family: adding log(2) to both intercepts doubles the mean
    for (Eigen::VectorXd* b :
         {&om2.beta_1_11, &om2.beta_1_01, &om2.beta_0_11, &om2.beta_0_10}) {
      (*b)[0] += std::log(2.0);
      (*b)[1] += std::log(2.0);
    }
    RewardMatrix rm2 = reward_matrix(d, strata, om2, zero);
    for (int st = 0; st < kNumStrata; ++st)
      for (int s = 0; s < kNumStrata; ++s)
        CHECK(rm2.entries[st][s] ==
              doctest::Approx(2.0 * rm.entries[st][s]).epsilon(1e-9));
  }
}

TEST_CASE("near-empty strata leave reward columns undefined") {
  Dataset d = simulated(500, 12);
  StrataProbabilityModel strata = true_strata(0.0);
  // force pi to concentrate: huge utilities give 11 everything
  strata.mn.iota01 = Eigen::Vector3d(40.0, 0.0, 0.0);
  strata.mn.iota10 = Eigen::Vector3d(40.0, 0.0, 0.0);
  RewardMatrix rm =
      reward_matrix(d, strata, true_outcome_model(), CostSpec{});
  CHECK(!rm.all_defined());
  CHECK(rm.column_defined[3]);   // 11 holds all the mass
  CHECK(!rm.column_defined[0]);  // 00 starved
  // classification through an undefined column must error loudly
  CHECK_THROWS(classify_bayes(rm, strata, {0.0}, {0.0}));
}

TEST_CASE("bayes_scores is the reward-weighted posterior mixture") {
  StrataProbabilityModel strata = true_strata(0.0);
  RewardMatrix rm;
  Rng rng(3);
  for (int st = 0; st < kNumStrata; ++st)
    for (int s = 0; s < kNumStrata; ++s)
      rm.entries[st][s] = rng.uniform();
  std::vector<double> a = {0.4}, c = {-0.3};
  StrataVector pi = strata.predict(a, c);
  auto h = bayes_scores(rm, strata, a, c);
  for (int st = 0; st < kNumStrata; ++st) {
    double want = 0.0;
    for (int s = 0; s < kNumStrata; ++s) want += rm.entries[st][s] * pi[s];
    CHECK(h[st] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("classify_bayes with identity rewards equals posterior mode") {
  StrataProbabilityModel strata = true_strata(0.25);
  RewardMatrix identity;
  for (int i = 0; i < kNumStrata; ++i) identity.entries[i][i] = 1.0;
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a = {rng.normal()}, c = {rng.normal()};
    CHECK(classify_bayes(identity, strata, a, c) ==
          classify_posterior_mode(strata, a, c));
  }
}

TEST_CASE("classify_bayes with rank-one rewards is constant") {
  StrataProbabilityModel strata = true_strata(0.0);
  RewardMatrix rm;
  double r[4] = {0.5, 2.0, 1.0, 1.5};
  for (int st = 0; st < kNumStrata; ++st)
    for (int s = 0; s < kNumStrata; ++s) rm.entries[st][s] = r[st];
  Rng rng(15);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> a = {rng.normal()}, c = {rng.normal()};
    CHECK(classify_bayes(rm, strata, a, c) == StratumLabel::Persuadable);
  }
}

TEST_CASE("exact reward ties are refined by posterior probability") {
  StrataProbabilityModel strata = true_strata(0.0);
  RewardMatrix rm;
  // rows 00 and 01 identical and dominant: the classifier must pick
  // whichever of the two is more probable at x, not blanket-default to 00
  for (int s = 0; s < kNumStrata; ++s) {
    rm.entries[0][s] = 5.0;
    rm.entries[1][s] = 5.0;
    rm.entries[2][s] = 1.0;
    rm.entries[3][s] = 1.0;
  }
  Rng rng(33);
  bool saw00 = false, saw01 = false;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a = {rng.normal()}, c = {rng.normal()};
    StrataVector pi = strata.predict(a, c);
    StratumLabel want = pi[0] >= pi[1] ? StratumLabel::NeverBuyer
                                       : StratumLabel::Persuadable;
    StratumLabel got = classify_bayes(rm, strata, a, c);
    CHECK(got == want);
    saw00 = saw00 || got == StratumLabel::NeverBuyer;
    saw01 = saw01 || got == StratumLabel::Persuadable;
  }
  CHECK(saw00);
  CHECK(saw01);
}

TEST_CASE("posterior mode obeys the documented tie-break") {
  StrataProbabilityModel strata = true_strata(0.0);
  // uniform pi via zeroed utilities at eta = 0
  strata.mn.iota01 = Eigen::Vector3d::Zero();
  strata.mn.iota10 = Eigen::Vector3d::Zero();
  CHECK(classify_posterior_mode(strata, {0.3}, {0.4}) ==
        StratumLabel::NeverBuyer);
}

TEST_CASE("value_function linear structure") {
  Dataset d = simulated(2000, 21);
  StrataProbabilityModel strata = true_strata(0.0);
  OutcomeModel om = true_outcome_model();
  CostSpec zero;
  Policy all0 = [](const std::vector<double>&, const std::vector<double>&) {
    return 0;
  };
  Policy all1 = [](const std::vector<double>&, const std::vector<double>&) {
    return 1;
  };
  PolicyEvaluation v0 = value_function(all0, strata, om, zero, d);
  PolicyEvaluation v1 = value_function(all1, strata, om, zero, d);

  SUBCASE("d == 0 averages the control-arm mixture means") {
    double want = 0.0;
    for (const Observation& o : d.rows) {
      StrataVector pi = strata.predict(o.a, o.c);
      for (int s = 0; s < kNumStrata; ++s)
        want += pi[s] *
                om.evaluate(0, stratum_from_index(s), o.a, o.c) /
                double(d.rows.size());
    }
    CHECK(v0.value == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("per-stratum decomposition sums to the value") {
    double sum = 0.0;
    for (double p : v1.per_stratum) sum += p;
    CHECK(sum == doctest::Approx(v1.value).epsilon(1e-9));
  }
  SUBCASE("constant cost shifts the value by that constant") {
    CostSpec costs;
    costs.c1.intercept = 0.7;
    PolicyEvaluation v1c = value_function(all1, strata, om, costs, d);
    CHECK(v1c.value == doctest::Approx(v1.value - 0.7).epsilon(1e-9));
  }
}

TEST_CASE("direct_policy_search dominates in-class reference policies") {
  Dataset d = simulated(1500, 27);
  StrataProbabilityModel strata = true_strata(0.0);
  OutcomeModel om = true_outcome_model();
  CostSpec zero;
  GridSpec grid;
  grid.angle_step_deg = 15.0;
  grid.intercept_step = 0.25;
  DirectPolicyResult res = direct_policy_search(strata, om, zero, d, grid);
  CHECK(res.beta.size() == 3);
  // the returned evaluation is the value of the returned policy
  Eigen::VectorXd b = res.beta;
  Policy returned = [b](const std::vector<double>& a,
                        const std::vector<double>& c) {
    return b[0] + b[1] * a[0] + b[2] * c[0] > 0.0 ? 1 : 0;
  };
  CHECK(res.eval.value ==
        doctest::Approx(value_function(returned, strata, om, zero, d).value)
            .epsilon(1e-9));
  // axis-aligned, zero-intercept candidates are in the scanned grid
  Policy a_pos = [](const std::vector<double>& a, const std::vector<double>&) {
    return a[0] > 0.0 ? 1 : 0;
  };
  Policy c_pos = [](const std::vector<double>&, const std::vector<double>& c) {
    return c[0] > 0.0 ? 1 : 0;
  };
  CHECK(res.eval.value >=
        value_function(a_pos, strata, om, zero, d).value - 1e-9);
  CHECK(res.eval.value >=
        value_function(c_pos, strata, om, zero, d).value - 1e-9);

  SUBCASE("single-candidate grid returns that candidate") {
    GridSpec tiny;
    tiny.intercept_lo = tiny.intercept_hi = 1.0;
    tiny.intercept_step = 1.0;
    tiny.angle_step_deg = 360.0;
    DirectPolicyResult one = direct_policy_search(strata, om, zero, d, tiny);
    CHECK(one.beta[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("direct_policy_search recovers a constructed optimal sign") {
  // force G = 11 everywhere and make the treatment gain equal to A, so the
  // optimal linear rule is I{A > 0}
  StrataProbabilityModel strata = true_strata(0.0);
  strata.mn.iota01 = Eigen::Vector3d(20.0, 0.0, 0.0);
  strata.mn.iota10 = Eigen::Vector3d(20.0, 0.0, 0.0);
  OutcomeModel om;
  om.family = OutcomeFamily::AdditiveLinear;
  om.a_dim = om.c_dim = 1;
  om.beta_1_11 = Eigen::Vector4d(0.0, 0.0, 1.0, 0.0);  // mean = A
  om.beta_1_01 = Eigen::Vector4d::Zero();
  om.beta_0_11 = Eigen::Vector4d::Zero();
  om.beta_0_10 = Eigen::Vector4d::Zero();
  Dataset d = simulated(1200, 29);
  GridSpec grid;
  grid.angle_step_deg = 15.0;
  grid.intercept_step = 0.5;
  DirectPolicyResult res =
      direct_policy_search(strata, om, CostSpec{}, d, grid);
  CHECK(res.beta[1] > 0.0);  // treat where A is large
  CHECK(std::abs(res.beta[0]) <= 0.5 + 1e-9);
}

TEST_CASE("principal_effect matches its ratio definition") {
  Dataset d = simulated(2500, 31);
  StrataProbabilityModel strata = true_strata(0.0);
  OutcomeModel om = true_outcome_model();
  auto v = principal_effect(strata, om, d, 1, StratumLabel::AlwaysBuyer);
  REQUIRE(v.has_value());
  double num = 0.0, den = 0.0;
  for (const Observation& o : d.rows) {
    StrataVector pi = strata.predict(o.a, o.c);
    num += om.evaluate(1, StratumLabel::AlwaysBuyer, o.a, o.c) * pi[3];
    den += pi[3];
  }
  CHECK(*v == doctest::Approx(num / den).epsilon(1e-9));

  SUBCASE("constant outcome model returns the constant") {
    OutcomeModel flat = om;
    // linear family with only an intercept-equivalent: beta = (k, 0, 0, 0)
    flat.family = OutcomeFamily::AdditiveLinear;
    flat.beta_1_11 = Eigen::Vector4d(3.5, 0.0, 0.0, 0.0);
    auto k = principal_effect(strata, flat, d, 1, StratumLabel::AlwaysBuyer);
    REQUIRE(k.has_value());
    CHECK(*k == doctest::Approx(3.5).epsilon(1e-12));
  }
}

TEST_CASE("population reward matrix: diagonal column maximality") {
  PopulationTruth truth = grid_truth(0.0);
  RewardMatrix rm = population_reward_matrix(truth, CostSpec{});
  for (int s = 1; s < kNumStrata; ++s) {  // column 00 is identically zero
    double diag = rm.entries[s][s];
    for (int st = 0; st < kNumStrata; ++st)
      CHECK(diag >= rm.entries[st][s] - 1e-9);
  }
}

TEST_CASE("bayes rule maximizes the partition reward (Theorem 1 shape)") {
  PopulationTruth truth = grid_truth(0.25);
  CostSpec zero;
  RewardMatrix rm = population_reward_matrix(truth, zero);
  StrataProbabilityModel strata = true_strata(0.25);
  DecisionRule bayes = make_bayes_rule(rm, strata);
  double vstar = evaluate_partition_reward(bayes, truth, zero);
  // fixed labels are particular partitions, so they cannot beat the bayes rule
  for (StratumLabel g : label_policy_order()) {
    double v = evaluate_partition_reward(make_fixed_rule(g), truth, zero);
    CHECK(vstar >= v - 1e-9);
  }
  double vpost = evaluate_partition_reward(make_posterior_rule(strata), truth,
                                           zero);
  CHECK(vstar >= vpost - 1e-9);
}

TEST_CASE("misclassification_probability rows form a distribution") {
  SimulationConfig cfg;
  cfg.n = 3000;
  cfg.seed = 91;
  LabeledDataset ld = generate(cfg);
  std::vector<std::vector<double>> a_rows, c_rows;
  for (const Observation& o : ld.data.rows) {
    a_rows.push_back(o.a);
    c_rows.push_back(o.c);
  }
  StrataProbabilityModel strata = true_strata(0.0);
  DecisionRule rule = make_posterior_rule(strata);
  for (StratumLabel s : label_policy_order()) {
    double row = 0.0;
    for (StratumLabel st : label_policy_order()) {
      auto p = misclassification_probability(rule, a_rows, c_rows, ld.g, s, st);
      REQUIRE(p.has_value());
      row += *p;
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("constant rule concentrates its row") {
    DecisionRule fixed = make_fixed_rule(StratumLabel::Persuadable);
    auto hit = misclassification_probability(fixed, a_rows, c_rows, ld.g,
                                             StratumLabel::AlwaysBuyer,
                                             StratumLabel::Persuadable);
    REQUIRE(hit.has_value());
    CHECK(*hit == doctest::Approx(1.0));
  }
  SUBCASE("absent stratum yields nullopt") {
    std::vector<StratumLabel> all00(ld.g.size(), StratumLabel::NeverBuyer);
    CHECK(!misclassification_probability(rule, a_rows, c_rows, all00,
                                         StratumLabel::AlwaysBuyer,
                                         StratumLabel::AlwaysBuyer)
               .has_value());
  }
}
