#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace aftgof {

/// Right-censored survival sample: observed time X = min(T, C), event
/// indicator, and time-invariant covariates (one row per subject).
///
/// Instances are validated on construction and immutable afterwards.
class SurvivalDataset {
 public:
  /// Throws DataError when any invariant fails: nonpositive or non-finite
  /// time, status outside {0,1}, no events, non-finite covariates,
  /// n < p + 2, or mismatched sizes.
  SurvivalDataset(std::vector<double> time, std::vector<int> status,
                  Eigen::MatrixXd covariates, std::vector<std::string> names = {});

  [[nodiscard]] int n() const { return static_cast<int>(time_.size()); }
  [[nodiscard]] int p() const { return static_cast<int>(covariates_.cols()); }

  [[nodiscard]] const std::vector<double>& time() const { return time_; }
  [[nodiscard]] const std::vector<int>& status() const { return status_; }
  [[nodiscard]] const Eigen::MatrixXd& covariates() const { return covariates_; }
  [[nodiscard]] Eigen::VectorXd covariate_means() const { return covariates_.colwise().mean().transpose(); }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  [[nodiscard]] int event_count() const;
  [[nodiscard]] double censoring_fraction() const;

  /// Index of the covariate called `name`; throws DataError if absent.
  [[nodiscard]] int covariate_index(const std::string& name) const;

  /// Columns taking exactly two distinct values.
  [[nodiscard]] std::vector<int> binary_columns() const;

  /// Same subjects with a new covariate matrix (names kept when the width matches).
  [[nodiscard]] SurvivalDataset with_covariates(Eigen::MatrixXd covariates,
                                                std::vector<std::string> names = {}) const;

  /// Same subjects and covariates, times multiplied by `factor` (> 0).
  [[nodiscard]] SurvivalDataset rescaled_time(double factor) const;

  /// Subjects reordered so that row i of the result is row perm[i] of this.
  [[nodiscard]] SurvivalDataset permuted(const std::vector<int>& perm) const;

  /// n, p, event count, censoring fraction, covariate names, binary columns.
  [[nodiscard]] nlohmann::json summary_json() const;

 private:
  std::vector<double> time_;
  std::vector<int> status_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> names_;
};

/// Reads a comma-separated file with a header row. Errors name the
/// offending 1-based data row (the header is row 0).
SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& time_col,
                         const std::string& status_col,
                         const std::vector<std::string>& covariate_cols);

/// Writes `time,status,<covariates...>` with round-trip precision.
void save_csv(const SurvivalDataset& data, const std::filesystem::path& path,
              const std::string& time_col = "time", const std::string& status_col = "status");

/// Per-covariate centering and scaling. Exempted columns carry mean 0 and sd 1.
struct StandardizationRecord {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::vector<bool> exempt;

  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
  [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd& standardized) const;

  /// Coefficients on the standardized scale mapped to the raw covariate scale.
  /// Since e = log X + Z'beta, centering only shifts the intercept-free
  /// residual, so beta_raw[q] = beta_std[q] / sd[q].
  [[nodiscard]] Eigen::VectorXd coefficients_to_raw(const Eigen::VectorXd& beta_std) const;
};

struct StandardizeOptions {
  bool exempt_binary = false;
};

/// Centers each covariate to sample mean 0 and scales to sample sd 1
/// (n - 1 denominator). Throws DataError on a zero-variance column.
std::pair<SurvivalDataset, StandardizationRecord> standardize(const SurvivalDataset& data,
                                                              StandardizeOptions options = {});

}  // namespace aftgof
