#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pstrata/outcome.hpp"
#include "pstrata/strata.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

using Policy =
    std::function<int(const std::vector<double>&, const std::vector<double>&)>;
using Classifier = std::function<StratumLabel(const std::vector<double>&,
                                              const std::vector<double>&)>;

// Stratum-specific optimal treatment: treat iff net profit under treatment
// weakly dominates control, with the structural zeros substituted. For 00
// this reduces to the pure cost comparison; ties resolve to treat.
int treatment_rule(const OutcomeModel& om, const CostSpec& costs,
                   StratumLabel g, const std::vector<double>& a,
                   const std::vector<double>& c);

// Plug-in misclassification rewards: entry (pseudo, truth) is
//   Pn[(L1 - c1) pi_truth rho_pseudo + (L0 - c0) pi_truth (1 - rho_pseudo)]
//     / Pn[pi_truth].
// Near-empty strata (denominator < 1e-10) leave the column undefined.
RewardMatrix reward_matrix(const Dataset& d,
                           const StrataProbabilityModel& strata,
                           const OutcomeModel& om, const CostSpec& costs);

// h_{s~}(x) = sum_s R(s~|s) pi_s(x), one score per candidate label.
std::array<double, kNumStrata> bayes_scores(const RewardMatrix& rm,
                                            const StrataProbabilityModel& strata,
                                            const std::vector<double>& a,
                                            const std::vector<double>& c);

StratumLabel classify_bayes(const RewardMatrix& rm,
                            const StrataProbabilityModel& strata,
                            const std::vector<double>& a,
                            const std::vector<double>& c);

StratumLabel classify_posterior_mode(const StrataProbabilityModel& strata,
                                     const std::vector<double>& a,
                                     const std::vector<double>& c);

struct DecisionRule {
  enum class Source { Bayes, PosteriorMode, Fixed };
  Source source = Source::Fixed;
  Classifier classify;
};

DecisionRule make_bayes_rule(const RewardMatrix& rm,
                             const StrataProbabilityModel& strata);
DecisionRule make_posterior_rule(const StrataProbabilityModel& strata);
DecisionRule make_fixed_rule(StratumLabel g);

struct PolicyEvaluation {
  double value = 0.0;
  double revenue_ratio = 0.0;  // value / mean observed Y; NaN if Y-mean ~ 0
  std::array<double, kNumStrata> per_stratum{};
};

// Sample analogue of the value function: average over rows of
//   sum_s pi_s(X) [ d(X)(L_{1,s} - c1) + (1 - d(X))(L_{0,s} - c0) ].
PolicyEvaluation value_function(const Policy& d_policy,
                                const StrataProbabilityModel& strata,
                                const OutcomeModel& om, const CostSpec& costs,
                                const Dataset& d);

struct GridSpec {
  double intercept_lo = -2.0;
  double intercept_hi = 2.0;
  double intercept_step = 0.1;
  double angle_step_deg = 5.0;     // 2-D direction resolution
  int random_directions = 256;     // used when x-dim > 2
  std::uint64_t seed = 17;
};

struct DirectPolicyResult {
  Eigen::VectorXd beta;  // (intercept, coefficients over x = (a, c))
  PolicyEvaluation eval;
};

// Grid search over indicator policies I{beta0 + beta . x > 0}: directions on
// the unit sphere crossed with an intercept grid; ties keep scan order.
DirectPolicyResult direct_policy_search(const StrataProbabilityModel& strata,
                                        const OutcomeModel& om,
                                        const CostSpec& costs, const Dataset& d,
                                        const GridSpec& grid = {});

// Ratio of sample means Pn{L_{z,g} pi_g} / Pn{pi_g} for the four feasible
// (arm, stratum) pairs; nullopt when the stratum is near-empty.
std::optional<double> principal_effect(const StrataProbabilityModel& strata,
                                       const OutcomeModel& om, const Dataset& d,
                                       int z, StratumLabel g);

// Population-truth description used by the simulation-only evaluators:
// weighted covariate points with exact strata probabilities and outcome
// means attached.
struct PopulationTruth {
  std::vector<std::vector<double>> a_points;
  std::vector<std::vector<double>> c_points;
  std::vector<double> weights;  // need not be normalized
  std::function<StrataVector(const std::vector<double>&,
                             const std::vector<double>&)>
      pi;
  std::function<double(int, StratumLabel, const std::vector<double>&,
                       const std::vector<double>&)>
      outcome;  // already zero on infeasible pairs
};

// V(G~) of Eq-style form: expected reward when each point is treated by the
// policy tailored to its assigned label, averaged over true strata.
double evaluate_partition_reward(const DecisionRule& rule,
                                 const PopulationTruth& truth,
                                 const CostSpec& costs);

// Truth-level reward matrix on the same population (used for the diagonal
// maximality and Theorem 1 checks).
RewardMatrix population_reward_matrix(const PopulationTruth& truth,
                                      const CostSpec& costs);

// pr(label = s~ | G = s) under the rule, from rows with attached truth;
// nullopt when stratum s never occurs.
std::optional<double> misclassification_probability(
    const DecisionRule& rule, const std::vector<std::vector<double>>& a_rows,
    const std::vector<std::vector<double>>& c_rows,
    const std::vector<StratumLabel>& truth, StratumLabel s,
    StratumLabel s_tilde);

}  // namespace pstrata
