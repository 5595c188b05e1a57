#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pstrata/decision.hpp"
#include "pstrata/pipeline.hpp"
#include "pstrata/rng.hpp"
#include "pstrata/strata.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

struct SimulationConfig {
  std::size_t n = 1000;
  double delta = 0.0;  // treatment-assignment coefficient
  double eta = 0.0;
  OutcomeFamily family = OutcomeFamily::AdditiveExponential;
  std::uint64_t seed = 1;
};

// Dataset plus the ground truth attached per row.
struct LabeledDataset {
  Dataset data;
  std::vector<StratumLabel> g;
  std::vector<double> y0, y1;
};

// Latent multinomial utilities shared by both outcome families.
MultinomialStrataParams dgp_strata_params(double eta);

// Exact strata probabilities at a covariate point.
StrataVector true_pi(double eta, const std::vector<double>& a,
                     const std::vector<double>& c);

// Noiseless conditional mean revenue, zero on infeasible (z, stratum) pairs.
double true_outcome(OutcomeFamily family, int z, StratumLabel g,
                    const std::vector<double>& a,
                    const std::vector<double>& c);

LabeledDataset generate(const SimulationConfig& cfg);
LabeledDataset generate(const SimulationConfig& cfg, Rng& rng);

double classification_accuracy(const DecisionRule& rule,
                               const LabeledDataset& ld);

// Ratio of mean potential revenue under the policy (net of costs) to mean
// observed revenue; NaN when the observed mean is ~0.
double policy_revenue(const Policy& policy, const LabeledDataset& ld,
                      const CostSpec& costs);

// Population marginals E[L_{z,g}(X) pi_g(X)] / E[pi_g(X)] for the four
// feasible pairs, Monte Carlo with a fixed internal seed.
std::array<double, 4> true_marginal_estimands(const SimulationConfig& cfg,
                                              std::size_t draws = 400000);

struct RepRecord {
  int rep = 0;
  bool failed = false;
  std::string error;
  std::array<double, 4> estimands{};               // pipeline marginals
  std::array<double, 4> sample_truth{};            // same-sample true marginals
  std::map<std::string, double> accuracy;          // per method
  std::map<std::string, double> revenue_ratio;     // per method
};

struct ExperimentResult {
  SimulationConfig cfg;
  std::vector<std::string> methods;
  std::array<double, 4> true_estimands{};
  std::vector<RepRecord> reps;
  int failures = 0;
  // Per-replicate errors are taken against the same-sample truth (the true
  // marginals evaluated on that replicate's realized covariates), so bias
  // and SE measure estimation error only, not covariate sampling noise.
  std::array<double, 4> bias_x100{};  // over successful reps
  std::array<double, 4> se_x100{};
  std::map<std::string, double> median_accuracy;
  std::map<std::string, double> median_revenue_ratio;
};

// Replicated fit/classify/evaluate harness. methods drawn from
// {"proposed", "posterior", "direct"}; per-replicate RNG streams keyed by
// (cfg.seed, rep index), replicates run on `workers` threads.
ExperimentResult run_experiment(const SimulationConfig& cfg, int replications,
                                const std::vector<std::string>& methods,
                                const PipelineConfig& pipe, int workers = 0);

double median_of(std::vector<double> v);

}  // namespace pstrata
