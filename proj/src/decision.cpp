#include "pstrata/decision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pstrata/rng.hpp"

namespace pstrata {

int treatment_rule(const OutcomeModel& om, const CostSpec& costs,
                   StratumLabel g, const std::vector<double>& a,
                   const std::vector<double>& c) {
  double net1 = om.evaluate(1, g, a, c) - costs.c1(a, c);
  double net0 = om.evaluate(0, g, a, c) - costs.c0(a, c);
  return net1 >= net0 ? 1 : 0;
}

RewardMatrix reward_matrix(const Dataset& d,
                           const StrataProbabilityModel& strata,
                           const OutcomeModel& om, const CostSpec& costs) {
  require_valid(d);
  const double n = static_cast<double>(d.rows.size());
  std::array<double, kNumStrata> denom{};
  std::array<std::array<double, kNumStrata>, kNumStrata> numer{};
  for (const Observation& o : d.rows) {
    StrataVector pi = strata.predict(o.a, o.c);
    double c1 = costs.c1(o.a, o.c), c0 = costs.c0(o.a, o.c);
    std::array<double, kNumStrata> net1, net0;
    std::array<int, kNumStrata> rho;
    for (int g = 0; g < kNumStrata; ++g) {
      StratumLabel lab = stratum_from_index(g);
      net1[g] = om.evaluate(1, lab, o.a, o.c) - c1;
      net0[g] = om.evaluate(0, lab, o.a, o.c) - c0;
      rho[g] = net1[g] >= net0[g] ? 1 : 0;
    }
    for (int s = 0; s < kNumStrata; ++s) {
      denom[s] += pi[s];
      for (int st = 0; st < kNumStrata; ++st)
        numer[st][s] += pi[s] * (rho[st] ? net1[s] : net0[s]);
    }
  }
  RewardMatrix rm;
  for (int s = 0; s < kNumStrata; ++s) {
    if (denom[s] / n < 1e-10) {
      rm.column_defined[s] = false;
      for (int st = 0; st < kNumStrata; ++st)
        rm.entries[st][s] = std::numeric_limits<double>::quiet_NaN();
    } else {
      for (int st = 0; st < kNumStrata; ++st)
        rm.entries[st][s] = numer[st][s] / denom[s];
    }
  }
  return rm;
}

std::array<double, kNumStrata> bayes_scores(const RewardMatrix& rm,
                                            const StrataProbabilityModel& strata,
                                            const std::vector<double>& a,
                                            const std::vector<double>& c) {
  StrataVector pi = strata.predict(a, c);
  for (int s = 0; s < kNumStrata; ++s)
    if (!rm.column_defined[s] && pi[s] > 0.0)
      throw std::runtime_error(
          "undefined reward entry reachable (near-empty stratum " +
          std::string(stratum_name(stratum_from_index(s))) + ")");
  std::array<double, kNumStrata> h{};
  for (int st = 0; st < kNumStrata; ++st)
    for (int s = 0; s < kNumStrata; ++s)
      if (pi[s] > 0.0) h[st] += rm.entries[st][s] * pi[s];
  return h;
}

namespace {

template <typename Arr>
StratumLabel argmax_label(const Arr& v) {
  int best = 0;
  for (int g = 1; g < kNumStrata; ++g)
    if (v[g] > v[best]) best = g;
  return stratum_from_index(best);
}

}  // namespace

StratumLabel classify_bayes(const RewardMatrix& rm,
                            const StrataProbabilityModel& strata,
                            const std::vector<double>& a,
                            const std::vector<double>& c) {
  std::array<double, kNumStrata> h = bayes_scores(rm, strata, a, c);
  // Reward-identical labels (e.g. 00 vs 01 under zero costs, whose policies
  // both treat everyone) tie in h exactly.  The tie is revenue-neutral, so it
  // is refined by posterior probability before falling back to label order.
  double hmax = *std::max_element(h.begin(), h.end());
  double tol = 1e-9 * std::max(1.0, std::abs(hmax));
  StrataVector pi = strata.predict(a, c);
  int best = -1;
  for (int g = 0; g < kNumStrata; ++g) {
    if (h[g] < hmax - tol) continue;
    if (best < 0 || pi[g] > pi[best]) best = g;
  }
  return stratum_from_index(best);
}

StratumLabel classify_posterior_mode(const StrataProbabilityModel& strata,
                                     const std::vector<double>& a,
                                     const std::vector<double>& c) {
  return argmax_label(strata.predict(a, c));
}

DecisionRule make_bayes_rule(const RewardMatrix& rm,
                             const StrataProbabilityModel& strata) {
  DecisionRule r;
  r.source = DecisionRule::Source::Bayes;
  r.classify = [rm, strata](const std::vector<double>& a,
                            const std::vector<double>& c) {
    return classify_bayes(rm, strata, a, c);
  };
  return r;
}

DecisionRule make_posterior_rule(const StrataProbabilityModel& strata) {
  DecisionRule r;
  r.source = DecisionRule::Source::PosteriorMode;
  r.classify = [strata](const std::vector<double>& a,
                        const std::vector<double>& c) {
    return classify_posterior_mode(strata, a, c);
  };
  return r;
}

DecisionRule make_fixed_rule(StratumLabel g) {
  DecisionRule r;
  r.source = DecisionRule::Source::Fixed;
  r.classify = [g](const std::vector<double>&, const std::vector<double>&) {
    return g;
  };
  return r;
}

PolicyEvaluation value_function(const Policy& d_policy,
                                const StrataProbabilityModel& strata,
                                const OutcomeModel& om, const CostSpec& costs,
                                const Dataset& d) {
  if (d.rows.empty()) throw std::runtime_error("empty dataset");
  PolicyEvaluation ev;
  double ysum = 0.0;
  for (const Observation& o : d.rows) {
    StrataVector pi = strata.predict(o.a, o.c);
    int treat = d_policy(o.a, o.c) ? 1 : 0;
    double c1 = costs.c1(o.a, o.c), c0 = costs.c0(o.a, o.c);
    for (int s = 0; s < kNumStrata; ++s) {
      StratumLabel lab = stratum_from_index(s);
      double net = treat ? om.evaluate(1, lab, o.a, o.c) - c1
                         : om.evaluate(0, lab, o.a, o.c) - c0;
      ev.per_stratum[s] += pi[s] * net;
    }
    ysum += o.y;
  }
  const double n = static_cast<double>(d.rows.size());
  for (double& v : ev.per_stratum) v /= n;
  for (double v : ev.per_stratum) ev.value += v;
  double ybar = ysum / n;
  ev.revenue_ratio = std::abs(ybar) > 1e-10
                         ? ev.value / ybar
                         : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

DirectPolicyResult direct_policy_search(const StrataProbabilityModel& strata,
                                        const OutcomeModel& om,
                                        const CostSpec& costs, const Dataset& d,
                                        const GridSpec& grid) {
  if (d.rows.empty()) throw std::runtime_error("empty dataset");
  const int p = d.x_dim();
  if (p < 1) throw std::runtime_error("direct_policy_search needs covariates");

  // per-row control value and treatment gain make each candidate O(n)
  const std::size_t n = d.rows.size();
  std::vector<double> base(n, 0.0), gain(n, 0.0);
  Eigen::MatrixXd X(n, p);
  double ysum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = d.rows[i];
    StrataVector pi = strata.predict(o.a, o.c);
    double c1 = costs.c1(o.a, o.c), c0 = costs.c0(o.a, o.c);
    for (int s = 0; s < kNumStrata; ++s) {
      StratumLabel lab = stratum_from_index(s);
      double net0 = om.evaluate(0, lab, o.a, o.c) - c0;
      double net1 = om.evaluate(1, lab, o.a, o.c) - c1;
      base[i] += pi[s] * net0;
      gain[i] += pi[s] * (net1 - net0);
    }
    for (int j = 0; j < d.a_dim; ++j) X(i, j) = o.a[j];
    for (int j = 0; j < d.c_dim; ++j) X(i, d.a_dim + j) = o.c[j];
    ysum += o.y;
  }

  std::vector<Eigen::VectorXd> directions;
  if (p == 1) {
    directions.push_back(Eigen::VectorXd::Constant(1, 1.0));
    directions.push_back(Eigen::VectorXd::Constant(1, -1.0));
  } else if (p == 2) {
    for (double deg = 0.0; deg < 360.0 - 1e-9; deg += grid.angle_step_deg) {
      double th = deg * M_PI / 180.0;
      Eigen::VectorXd u(2);
      u << std::cos(th), std::sin(th);
      directions.push_back(u);
    }
  } else {
    Rng rng(grid.seed);
    for (int k = 0; k < grid.random_directions; ++k) {
      Eigen::VectorXd u(p);
      double nrm = 0.0;
      do {
        for (int j = 0; j < p; ++j) u[j] = rng.normal();
        nrm = u.norm();
      } while (nrm < 1e-12);
      directions.push_back(u / nrm);
    }
  }
  if (directions.empty()) throw std::runtime_error("empty policy grid");

  std::vector<double> intercepts;
  for (double b0 = grid.intercept_lo; b0 <= grid.intercept_hi + 1e-9;
       b0 += grid.intercept_step)
    intercepts.push_back(b0);
  if (intercepts.empty()) throw std::runtime_error("empty policy grid");

  double base_total = 0.0;
  for (double v : base) base_total += v;

  double best_val = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_beta;
  Eigen::VectorXd proj(n);
  for (const Eigen::VectorXd& u : directions) {
    proj = X * u;
    for (double b0 : intercepts) {
      double total = base_total;
      for (std::size_t i = 0; i < n; ++i)
        if (b0 + proj[i] > 0.0) total += gain[i];
      if (total > best_val) {
        best_val = total;
        best_beta.resize(p + 1);
        best_beta[0] = b0;
        best_beta.tail(p) = u;
      }
    }
  }

  DirectPolicyResult out;
  out.beta = best_beta;
  Policy pol = [&best_beta, a_dim = d.a_dim](const std::vector<double>& a,
                                             const std::vector<double>& c) {
    double t = best_beta[0];
    for (std::size_t j = 0; j < a.size(); ++j) t += best_beta[1 + j] * a[j];
    for (std::size_t j = 0; j < c.size(); ++j)
      t += best_beta[1 + a_dim + j] * c[j];
    return t > 0.0 ? 1 : 0;
  };
  out.eval = value_function(pol, strata, om, costs, d);
  return out;
}

std::optional<double> principal_effect(const StrataProbabilityModel& strata,
                                       const OutcomeModel& om, const Dataset& d,
                                       int z, StratumLabel g) {
  bool ok = (z == 1 && g == StratumLabel::AlwaysBuyer) ||
            (z == 1 && g == StratumLabel::Persuadable) ||
            (z == 0 && g == StratumLabel::AlwaysBuyer) ||
            (z == 0 && g == StratumLabel::Discouraged);
  if (!ok)
    throw std::invalid_argument("principal_effect: infeasible (arm, stratum)");
  double num = 0.0, den = 0.0;
  for (const Observation& o : d.rows) {
    double pg = strata.predict(o.a, o.c)[stratum_index(g)];
    num += om.evaluate(z, g, o.a, o.c) * pg;
    den += pg;
  }
  const double n = static_cast<double>(d.rows.size());
  if (den / n < 1e-10) return std::nullopt;
  return num / den;
}

double evaluate_partition_reward(const DecisionRule& rule,
                                 const PopulationTruth& truth,
                                 const CostSpec& costs) {
  double total = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < truth.weights.size(); ++i) {
    const auto& a = truth.a_points[i];
    const auto& c = truth.c_points[i];
    double w = truth.weights[i];
    StratumLabel lab = rule.classify(a, c);
    double c1 = costs.c1(a, c), c0 = costs.c0(a, c);
    int treat = truth.outcome(1, lab, a, c) - c1 >= truth.outcome(0, lab, a, c) - c0;
    StrataVector pi = truth.pi(a, c);
    double v = 0.0;
    for (int s = 0; s < kNumStrata; ++s) {
      StratumLabel sl = stratum_from_index(s);
      v += pi[s] * (treat ? truth.outcome(1, sl, a, c) - c1
                          : truth.outcome(0, sl, a, c) - c0);
    }
    total += w * v;
    wsum += w;
  }
  if (wsum <= 0.0) throw std::runtime_error("empty population grid");
  return total / wsum;
}

RewardMatrix population_reward_matrix(const PopulationTruth& truth,
                                      const CostSpec& costs) {
  std::array<double, kNumStrata> denom{};
  std::array<std::array<double, kNumStrata>, kNumStrata> numer{};
  double wsum = 0.0;
  for (std::size_t i = 0; i < truth.weights.size(); ++i) {
    const auto& a = truth.a_points[i];
    const auto& c = truth.c_points[i];
    double w = truth.weights[i];
    wsum += w;
    StrataVector pi = truth.pi(a, c);
    double c1 = costs.c1(a, c), c0 = costs.c0(a, c);
    std::array<double, kNumStrata> net1, net0;
    std::array<int, kNumStrata> rho;
    for (int g = 0; g < kNumStrata; ++g) {
      StratumLabel lab = stratum_from_index(g);
      net1[g] = truth.outcome(1, lab, a, c) - c1;
      net0[g] = truth.outcome(0, lab, a, c) - c0;
      rho[g] = net1[g] >= net0[g] ? 1 : 0;
    }
    for (int s = 0; s < kNumStrata; ++s) {
      denom[s] += w * pi[s];
      for (int st = 0; st < kNumStrata; ++st)
        numer[st][s] += w * pi[s] * (rho[st] ? net1[s] : net0[s]);
    }
  }
  RewardMatrix rm;
  for (int s = 0; s < kNumStrata; ++s) {
    if (wsum <= 0.0 || denom[s] / wsum < 1e-10) {
      rm.column_defined[s] = false;
      for (int st = 0; st < kNumStrata; ++st)
        rm.entries[st][s] = std::numeric_limits<double>::quiet_NaN();
    } else {
      for (int st = 0; st < kNumStrata; ++st)
        rm.entries[st][s] = numer[st][s] / denom[s];
    }
  }
  return rm;
}

std::optional<double> misclassification_probability(
    const DecisionRule& rule, const std::vector<std::vector<double>>& a_rows,
    const std::vector<std::vector<double>>& c_rows,
    const std::vector<StratumLabel>& truth, StratumLabel s,
    StratumLabel s_tilde) {
  std::size_t in_stratum = 0, hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != s) continue;
    ++in_stratum;
    if (rule.classify(a_rows[i], c_rows[i]) == s_tilde) ++hits;
  }
  if (in_stratum == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(in_stratum);
}

}  // namespace pstrata
