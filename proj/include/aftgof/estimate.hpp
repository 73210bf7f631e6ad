#pragma once

#include "aftgof/data.hpp"
#include "aftgof/residual.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aftgof {

/// mns: non-smooth Gehan rank estimator; mis: induced-smoothed Gehan;
/// mls: least-squares with Kaplan-Meier imputation.
enum class Estimator { mns, mis, mls };

std::string to_string(Estimator e);
/// Throws DataError on an unknown name.
Estimator parse_estimator(const std::string& name);

/// Positive multipliers phi_i, one draw per subject, Exp(1) distributed.
struct PerturbationWeights {
  std::vector<double> phi;
  std::uint64_t seed = 0;
  int path_index = -1;

  /// Deterministic in (seed, path_index) only.
  static PerturbationWeights draw(int n, std::uint64_t seed, int path_index);
  /// phi = 1 for every subject.
  static PerturbationWeights ones(int n);
};

/// e_i(beta) = log X_i + Z_i' beta.
Eigen::VectorXd log_residuals(const SurvivalDataset& data, const Eigen::VectorXd& beta);

/// S_n(beta) = n^-1 sum_i sum_j w_i Delta_i (Z_i - Z_j) I(e_j >= e_i).
/// Empty weights mean w = 1. O(n log n).
Eigen::VectorXd gehan_score(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                            std::span<const double> weights = {});

/// G(beta) = n^-1 sum_i sum_j w_i Delta_i max(e_j - e_i, 0). Convex and
/// piecewise linear with gradient -gehan_score. O(n log n).
double gehan_loss(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                  std::span<const double> weights = {});

/// Induced-smoothed score: indicator replaced by Phi((e_j - e_i) / r_ij) with
/// r_ij^2 = |Z_i - Z_j|^2 / n. `radius_scale` multiplies every r_ij.
Eigen::VectorXd smoothed_score(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                               std::span<const double> weights = {}, double radius_scale = 1.0);

/// Analytic Jacobian of smoothed_score with respect to beta.
Eigen::MatrixXd smoothed_jacobian(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                                  std::span<const double> weights = {},
                                  double radius_scale = 1.0);

/// Imputed log failure times: log X_i for events, otherwise the Kaplan-Meier
/// tail mean of the residuals beyond e_i minus Z_i' beta. Mass the KM leaves
/// after the last event is placed at the largest residual.
Eigen::VectorXd conditional_expectation(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                                        std::span<const double> weights = {});

/// One least-squares update L(b), optionally phi-weighted in both the
/// Kaplan-Meier imputation and the normal equations.
Eigen::VectorXd least_squares_update(const SurvivalDataset& data, const Eigen::VectorXd& b,
                                     std::span<const double> weights = {});

/// n^-1 sum_i (phi_i - 1) int (S0 Z_i - S1) dM_i evaluated at the frame's beta:
/// the multiplier-perturbed Gehan score built from martingale residuals.
Eigen::VectorXd martingale_score_target(const SurvivalDataset& data, const ResidualFrame& frame,
                                        std::span<const double> phi);

struct FittedModel {
  Estimator estimator = Estimator::mis;
  Eigen::VectorXd beta;
  /// mis: |score|; mns: |Gehan score|; mls: last fixed-point step (sup norm),
  /// 0 when the iteration closed a cycle.
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct FitOptions {
  double score_tolerance = 1e-8;
  double simplex_tolerance = 1e-8;
  double ls_tolerance = 1e-6;
  int max_newton_iterations = 100;
  int max_ls_iterations = 500;
};

/// Minus the OLS slope of log X on Z, censoring ignored.
Eigen::VectorXd ols_initial_value(const SurvivalDataset& data);

/// Throws NonIdentifiableError when the centered covariates are rank deficient.
void check_identifiable(const SurvivalDataset& data);

FittedModel fit(const SurvivalDataset& data, Estimator estimator,
                const std::optional<Eigen::VectorXd>& init = std::nullopt,
                const FitOptions& options = {});

/// How a multiplier draw enters the perturbed estimating equation.
///
/// martingale_target: beta* solves S(b) = n^-1 sum (phi_i - 1) int ... dM_i
/// (the martingale-residual perturbation), and beta_hat - beta* mimics
/// beta_hat - beta_0.
/// weighted_score: beta* solves the phi-weighted equation S^phi(b) = 0, and
/// beta* - beta_hat mimics beta_hat - beta_0.
enum class PerturbationScheme { martingale_target, weighted_score };

std::string to_string(PerturbationScheme s);
PerturbationScheme parse_scheme(const std::string& name);
/// martingale_target for the rank estimators, weighted_score for mls.
PerturbationScheme default_scheme(Estimator e);

/// Solves the perturbed equation for `estimator`, started at anchor.beta.
/// `frame`, when given, must be built at anchor.beta (saves a rebuild).
FittedModel fit_perturbed(const SurvivalDataset& data, Estimator estimator,
                          const PerturbationWeights& phi, const FittedModel& anchor,
                          PerturbationScheme scheme, const ResidualFrame* frame = nullptr,
                          const FitOptions& options = {});

inline FittedModel fit_perturbed(const SurvivalDataset& data, Estimator estimator,
                                 const PerturbationWeights& phi, const FittedModel& anchor) {
  return fit_perturbed(data, estimator, phi, anchor, default_scheme(estimator));
}

}  // namespace aftgof
