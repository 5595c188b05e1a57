#include "pstrata/pipeline.hpp"

#include <limits>

namespace pstrata {

FittedPipeline fit_pipeline(const Dataset& d, const PipelineConfig& cfg) {
  require_valid(d);
  FittedPipeline fp;
  if (cfg.strata_method == PipelineConfig::StrataMethod::ClosedForm) {
    fp.strata = closed_form_fit(d, cfg.odds);
  } else {
    fp.strata = em_fit(d, cfg.odds, cfg.em, &fp.em_trace);
  }
  fp.outcome = fit_outcome_models(d, fp.strata, cfg.family, cfg.gmm,
                                  &fp.gmm_diag);
  fp.rewards = reward_matrix(d, fp.strata, fp.outcome, cfg.costs);
  return fp;
}

std::array<double, 4> marginal_estimands(const FittedPipeline& fp,
                                         const Dataset& d) {
  const std::array<std::pair<int, StratumLabel>, 4> pairs = {
      std::make_pair(1, StratumLabel::AlwaysBuyer),
      std::make_pair(1, StratumLabel::Persuadable),
      std::make_pair(0, StratumLabel::AlwaysBuyer),
      std::make_pair(0, StratumLabel::Discouraged)};
  std::array<double, 4> out{};
  for (int k = 0; k < 4; ++k) {
    auto v = principal_effect(fp.strata, fp.outcome, d, pairs[k].first,
                              pairs[k].second);
    out[k] = v ? *v : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace pstrata
