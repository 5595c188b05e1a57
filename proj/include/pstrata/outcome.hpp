#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>

#include "pstrata/strata.hpp"
#include "pstrata/types.hpp"

namespace pstrata {

// Stratum- and arm-specific conditional revenue means under additive
// separability in (A, C). Structural zeros are hard-coded: non-responding
// (z, stratum) pairs have mean revenue exactly zero.
enum class OutcomeFamily {
  AdditiveExponential,  // exp(b0 + a) + exp(b1 + b2 . c), scalar a
  AdditiveLinear,       // beta . (1, c, a, c^2)
};

const char* family_name(OutcomeFamily f);
OutcomeFamily family_from_name(const std::string& s);

int outcome_param_count(OutcomeFamily f, int a_dim, int c_dim);

// Mean revenue for one (arm, stratum) component; grad/hess are with respect
// to the component's own parameter block.
double outcome_value(OutcomeFamily f, const Eigen::VectorXd& beta,
                     const std::vector<double>& a,
                     const std::vector<double>& c);
void outcome_value_grad_hess(OutcomeFamily f, const Eigen::VectorXd& beta,
                             const std::vector<double>& a,
                             const std::vector<double>& c, double& value,
                             Eigen::VectorXd& grad, Eigen::MatrixXd& hess);

struct OutcomeModel {
  OutcomeFamily family = OutcomeFamily::AdditiveExponential;
  int a_dim = 0;
  int c_dim = 0;
  Eigen::VectorXd beta_1_11;
  Eigen::VectorXd beta_1_01;
  Eigen::VectorXd beta_0_11;
  Eigen::VectorXd beta_0_10;

  // 0 for the structurally zero pairs, the fitted additive mean otherwise.
  double evaluate(int z, StratumLabel g, const std::vector<double>& a,
                  const std::vector<double>& c) const;
};

struct IdentificationReport {
  // Set 1: {pi11, pi01, q(A) pi11, q(A) pi01}; set 2 uses pi10 in place
  // of pi01. q(A) = A.
  double eigen_min[2] = {0.0, 0.0};
  double eigen_max[2] = {0.0, 0.0};
  double condition_number[2] = {0.0, 0.0};
  bool flagged[2] = {false, false};
};

IdentificationReport check_identification(const StrataProbabilityModel& strata,
                                          const Dataset& d);

struct GmmArmDiagnostics {
  double criterion = 0.0;      // || sample mean moment ||^2
  double gradient_norm = 0.0;  // of the criterion at the solution
  int iterations = 0;
  bool converged = false;
};

struct GmmDiagnostics {
  GmmArmDiagnostics arm[2];
  std::array<double, kNumStrata> effective_sample_size{};
  IdentificationReport identification;
};

struct GmmOptions {
  double criterion_tol = 1e-10;
  int max_iter = 200;
  int restarts = 3;
  std::uint64_t seed = 7;
};

// Residual-based moment fit: for each arm, targets the moment system
// En[B(X; beta) {Y - omega L_top - (1-omega) L_bot}] = 0 on responders of
// that arm, where omega = clip(pi11 / e_z, 0, 1) and the instruments are
// the parameter gradient of the mixture mean (just-identified). The sample
// system is nearly flat (and can have several roots) along the direction
// trading the two components' C-terms, so the estimate is produced by a
// known-weight mixture quasi-likelihood EM with multiple starts; the moment
// criterion at the estimate is reported as a diagnostic.
OutcomeModel fit_outcome_models(const Dataset& d,
                                const StrataProbabilityModel& strata,
                                OutcomeFamily family,
                                const GmmOptions& opt = {},
                                GmmDiagnostics* diag = nullptr);

// Criterion and its analytic gradient for one arm's stacked parameters
// [beta_top; beta_bot] on a fixed dataset; exposed so the finite-difference
// check can probe arbitrary points.
struct ArmMomentSystem {
  OutcomeFamily family;
  int a_dim = 0, c_dim = 0;
  std::vector<std::vector<double>> a_rows, c_rows;
  std::vector<double> y;
  std::vector<double> omega;

  static ArmMomentSystem build(const Dataset& d,
                               const StrataProbabilityModel& strata, int z,
                               OutcomeFamily family);
  int param_count() const { return outcome_param_count(family, a_dim, c_dim); }
  int moment_count() const { return 2 * param_count(); }
  Eigen::VectorXd mean_moment(const Eigen::VectorXd& beta_stacked) const;
  // exact d mean_moment / d beta, including the instrument derivative
  Eigen::MatrixXd moment_jacobian(const Eigen::VectorXd& beta_stacked) const;
  double criterion(const Eigen::VectorXd& beta_stacked) const;
  Eigen::VectorXd criterion_gradient(const Eigen::VectorXd& beta_stacked) const;
};

}  // namespace pstrata
