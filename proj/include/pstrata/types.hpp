#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pstrata {

// Latent buyer type, encoded as the pair (s0, s1) of potential responses
// under control and treatment. Index = 2*s0 + s1, which fixes the
// tie-break order 00 < 01 < 10 < 11 used everywhere.
enum class StratumLabel : int {
  NeverBuyer = 0,       // 00
  Persuadable = 1,      // 01
  Discouraged = 2,      // 10
  AlwaysBuyer = 3,      // 11
};

inline constexpr int kNumStrata = 4;

inline int stratum_index(StratumLabel g) { return static_cast<int>(g); }
inline StratumLabel stratum_from_index(int i) {
  if (i < 0 || i >= kNumStrata) throw std::out_of_range("stratum index");
  return static_cast<StratumLabel>(i);
}
inline int stratum_s0(StratumLabel g) { return stratum_index(g) >> 1; }
inline int stratum_s1(StratumLabel g) { return stratum_index(g) & 1; }
inline StratumLabel stratum_from_pair(int s0, int s1) {
  return stratum_from_index(2 * s0 + s1);
}
inline const char* stratum_name(StratumLabel g) {
  static const char* names[kNumStrata] = {"00", "01", "10", "11"};
  return names[stratum_index(g)];
}
StratumLabel stratum_from_name(const std::string& s);

// Deterministic enumeration order, also the tie-break order.
inline std::array<StratumLabel, kNumStrata> label_policy_order() {
  return {StratumLabel::NeverBuyer, StratumLabel::Persuadable,
          StratumLabel::Discouraged, StratumLabel::AlwaysBuyer};
}

// One user record: treatment z, response s, revenue y, covariates x=(a,c).
struct Observation {
  int z = 0;
  int s = 0;
  double y = 0.0;
  std::vector<double> a;
  std::vector<double> c;
};

struct Dataset {
  std::vector<Observation> rows;
  int a_dim = 0;
  int c_dim = 0;

  std::size_t size() const { return rows.size(); }
  int x_dim() const { return a_dim + c_dim; }
};

struct ValidationIssue {
  bool fatal = false;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool clean() const { return issues.empty(); }
  bool fatal() const {
    for (const auto& i : issues)
      if (i.fatal) return true;
    return false;
  }
};

// Checks the structural invariants every estimation routine relies on:
// nonempty, both arms present, responders in each arm, y == 0 whenever
// s == 0, consistent covariate dimensions, finite nonnegative revenue.
ValidationReport validate_dataset(const Dataset& d);

// Throws std::runtime_error with the first fatal message if any.
void require_valid(const Dataset& d);

// Known odds ratio linking the two potential responses: theta(x) = exp(eta).
// eta = 0 encodes conditional independence of S0 and S1 given X.
struct OddsRatioSpec {
  double eta = 0.0;
  double theta() const;
};

// Affine treatment/control costs c_z(x) = intercept + wa.a + wc.c.
// Defaults to identically zero, matching every experiment in scope.
struct AffineCost {
  double intercept = 0.0;
  std::vector<double> wa;
  std::vector<double> wc;
  double operator()(const std::vector<double>& a,
                    const std::vector<double>& c) const;
};

struct CostSpec {
  AffineCost c1;
  AffineCost c0;
};

// Estimated conditional misclassification rewards, indexed
// entries[pseudo-label][true-label]. Entries for near-empty strata are
// marked undefined rather than silently zeroed.
struct RewardMatrix {
  std::array<std::array<double, kNumStrata>, kNumStrata> entries{};
  std::array<bool, kNumStrata> column_defined{true, true, true, true};

  double operator()(StratumLabel pseudo, StratumLabel truth) const {
    return entries[stratum_index(pseudo)][stratum_index(truth)];
  }
  bool all_defined() const {
    for (bool b : column_defined)
      if (!b) return false;
    return true;
  }
};

}  // namespace pstrata
