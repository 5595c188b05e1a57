#pragma once

#include <iosfwd>
#include <string>

#include "pstrata/outcome.hpp"
#include "pstrata/strata.hpp"

namespace pstrata {

// Plain key/value text, full double precision, round-trip exact.
void save_strata_model(std::ostream& os, const StrataProbabilityModel& m);
void save_strata_model(const std::string& path,
                       const StrataProbabilityModel& m);
StrataProbabilityModel load_strata_model(std::istream& is);
StrataProbabilityModel load_strata_model(const std::string& path);

void save_outcome_model(std::ostream& os, const OutcomeModel& m);
void save_outcome_model(const std::string& path, const OutcomeModel& m);
OutcomeModel load_outcome_model(std::istream& is);
OutcomeModel load_outcome_model(const std::string& path);

}  // namespace pstrata
