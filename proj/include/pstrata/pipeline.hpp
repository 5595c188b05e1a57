#pragma once

#include "pstrata/decision.hpp"
#include "pstrata/outcome.hpp"
#include "pstrata/strata.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

// One estimation pass: strata probabilities, outcome means, rewards.
struct PipelineConfig {
  OddsRatioSpec odds;
  OutcomeFamily family = OutcomeFamily::AdditiveExponential;
  enum class StrataMethod { ClosedForm, Em };
  StrataMethod strata_method = StrataMethod::Em;
  EmOptions em;
  GmmOptions gmm;
  CostSpec costs;
};

struct FittedPipeline {
  StrataProbabilityModel strata;
  OutcomeModel outcome;
  RewardMatrix rewards;
  GmmDiagnostics gmm_diag;
  EmTrace em_trace;  // empty for the closed-form route
};

FittedPipeline fit_pipeline(const Dataset& d, const PipelineConfig& cfg);

// The four feasible marginal estimands, in the fixed order
// (1,11), (1,01), (0,11), (0,10); NaN when a stratum is near-empty.
std::array<double, 4> marginal_estimands(const FittedPipeline& fp,
                                         const Dataset& d);

inline constexpr const char* kEstimandNames[4] = {"L_1_11", "L_1_01", "L_0_11",
                                                  "L_0_10"};

}  // namespace pstrata
