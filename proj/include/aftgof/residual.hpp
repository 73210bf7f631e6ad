#pragma once

#include "aftgof/data.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace aftgof {

/// Right-continuous step function: 0 before x.front(), y[k] on [x[k], x[k+1]).
struct StepFunction {
  std::vector<double> x;
  std::vector<double> y;

  [[nodiscard]] double operator()(double t) const;
};

/// Residuals of an AFT fit on the exp scale, R_i = X_i exp(Z_i' beta), with
/// the counting-process quantities needed by the cumulative-sum processes.
///
/// Subjects with equal log residuals share one "level". Every tied subject is
/// at risk at the tied value and tied events enter the Nelson-Aalen jump
/// jointly, so the k-th jump is events[k] / at_risk[k]. All ranking happens on
/// the log scale; exp-scale values are reported for evaluation grids.
class ResidualFrame {
 public:
  ResidualFrame(const SurvivalDataset& data, const Eigen::VectorXd& beta);

  [[nodiscard]] int n() const { return static_cast<int>(log_r_.size()); }
  [[nodiscard]] const Eigen::VectorXd& beta() const { return beta_; }

  /// e_i(beta) = log X_i + Z_i' beta, in subject order.
  [[nodiscard]] const std::vector<double>& log_residuals() const { return log_r_; }
  /// R_i = exp(e_i), in subject order.
  [[nodiscard]] const std::vector<double>& residuals() const { return r_; }
  [[nodiscard]] const std::vector<int>& status() const { return status_; }

  /// Subjects sorted by ascending residual (stable on subject index).
  [[nodiscard]] const std::vector<int>& order() const { return order_; }
  /// status()[order()[k]].
  [[nodiscard]] const std::vector<int>& ordered_status() const { return ordered_status_; }

  [[nodiscard]] int level_count() const { return static_cast<int>(level_log_.size()); }
  /// Level of each subject.
  [[nodiscard]] const std::vector<int>& level_of() const { return level_of_; }
  /// order()[level_begin()[k] .. level_begin()[k+1]) are the subjects at level k.
  [[nodiscard]] const std::vector<int>& level_begin() const { return level_begin_; }
  [[nodiscard]] const std::vector<double>& level_log_value() const { return level_log_; }
  [[nodiscard]] const std::vector<double>& level_value() const { return level_value_; }
  [[nodiscard]] const std::vector<int>& level_events() const { return level_events_; }
  /// Risk-set size S0 at each level (subjects with residual >= level value).
  [[nodiscard]] const std::vector<int>& level_at_risk() const { return level_at_risk_; }
  /// Nelson-Aalen jump dN./S0 at each level (0 at event-free levels).
  [[nodiscard]] const std::vector<double>& na_increments() const { return na_increment_; }
  /// Nelson-Aalen estimate evaluated at each level.
  [[nodiscard]] const std::vector<double>& cumulative_hazard() const { return cum_hazard_; }
  /// Levels carrying at least one event, ascending.
  [[nodiscard]] const std::vector<int>& event_levels() const { return event_levels_; }

  /// Nelson-Aalen estimate at an exp-scale point t (t may be +inf).
  [[nodiscard]] double cumulative_hazard_at(double t) const;
  /// Same, with the point given on the log scale.
  [[nodiscard]] double cumulative_hazard_at_log(double log_t) const;

  /// M_i(inf) = Delta_i - Lambda(R_i), in subject order.
  [[nodiscard]] const std::vector<double>& martingale_residuals() const { return mhat_; }
  /// M_i(t) = Delta_i I(R_i <= t) - Lambda(min(t, R_i)).
  [[nodiscard]] double martingale_residual(int subject, double t) const;

 private:
  Eigen::VectorXd beta_;
  std::vector<double> log_r_;
  std::vector<double> r_;
  std::vector<int> status_;
  std::vector<int> order_;
  std::vector<int> ordered_status_;
  std::vector<int> level_of_;
  std::vector<int> level_begin_;
  std::vector<double> level_log_;
  std::vector<double> level_value_;
  std::vector<int> level_events_;
  std::vector<int> level_at_risk_;
  std::vector<double> na_increment_;
  std::vector<double> cum_hazard_;
  std::vector<int> event_levels_;
  std::vector<double> mhat_;
};

/// Kaplan-Meier estimate of the residual CDF, jumping at event levels.
/// Optional positive per-subject weights multiply both event and risk counts.
/// The x coordinates are exp-scale residuals.
StepFunction km_residual_cdf(const ResidualFrame& frame, std::span<const double> weights = {});

/// Kaplan-Meier jump sizes per level (0 at event-free levels).
std::vector<double> km_level_jumps(const ResidualFrame& frame, std::span<const double> weights = {});

/// Gaussian kernel density estimate with normalized point weights.
struct KernelDensity {
  std::vector<double> points;
  std::vector<double> weights;
  double bandwidth = 0.0;
  /// Points are log residuals; operator() still returns the density of
  /// exp(e) through the change of variables h(log t) / t.
  bool log_scale = false;

  [[nodiscard]] double operator()(double t) const;
};

/// Rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) m^(-1/5), with m the
/// effective sample size (sum w)^2 / sum w^2. Weights need not be normalized.
double silverman_bandwidth(std::span<const double> points, std::span<const double> weights);

/// Densities of the exp residuals, smoothed on the log scale: g0 from all residuals, f0 from
/// event residuals weighted by their Kaplan-Meier jump (censoring adjusted).
struct BaselineDensities {
  KernelDensity f0;
  KernelDensity g0;
};

/// Throws DataError when fewer than two events are available.
BaselineDensities estimate_baseline_densities(const ResidualFrame& frame);

}  // namespace aftgof
