#pragma once

#include "aftgof/data.hpp"
#include "aftgof/estimate.hpp"
#include "aftgof/perturb.hpp"
#include "aftgof/process.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace aftgof {

/// omni, link, or form:<covariate name>.
struct TestSpec {
  TestKind kind = TestKind::omnibus;
  std::string covariate;

  static TestSpec parse(const std::string& text);
  [[nodiscard]] std::string label() const;
};

struct GofOptions {
  bool standardized = true;
  int K = 500;
  std::uint64_t seed = 1;
  int grid_cap = 200;
  int plot_paths = 50;
  std::optional<PerturbationScheme> scheme;
  FitOptions fit;
  HazardTerm hazard_term = HazardTerm::linearized;
  /// See BundleOptions::sd_quantile.
  std::optional<double> sd_quantile;

  [[nodiscard]] EnsembleOptions ensemble() const;
  [[nodiscard]] BundleOptions bundle() const;
};

/// Observed path and the first null paths along the display direction.
/// Omnibus: t direction (rank of log residual) at the z column where the
/// observed statistic peaks. Link and form: z direction at t = +inf.
struct PlotPayload {
  std::string axis;
  std::vector<double> observed;
  std::vector<std::vector<double>> paths;
};

struct GofReport {
  std::string test;
  TestKind kind = TestKind::omnibus;
  Estimator estimator = Estimator::mis;
  PerturbationScheme scheme = PerturbationScheme::martingale_target;
  bool standardized = true;
  double observed_sup = 0.0;
  std::vector<double> path_sups;
  int exceedances = 0;
  double p_value = 1.0;
  int K = 0;
  int K_effective = 0;
  FittedModel fit;
  PlotPayload plot;
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// #(sups >= observed) / sups.size(); throws when sups is empty.
double empirical_p_value(double observed, const std::vector<double>& sups, int* count = nullptr);

/// Grid for a test on the ensemble's data and anchor frame.
std::shared_ptr<const EvalGrid> build_grid(const PathEnsemble& ensemble, const TestSpec& spec,
                                           int grid_cap = 200);

/// Report from a generated bundle (both statistics share the bundle).
GofReport make_report(const PathEnsemble& ensemble, const PathBundle& bundle, bool standardized,
                      int plot_paths = 50);

/// Fits the model, throwing NumericalError when it does not converge.
FittedModel fit_checked(const SurvivalDataset& data, Estimator estimator, const FitOptions& fit = {});

GofReport run_test(const SurvivalDataset& data, Estimator estimator, const TestSpec& spec,
                   const GofOptions& options = {});

/// One form report per covariate from one fit and one set of multiplier draws.
std::vector<GofReport> run_all_forms(const SurvivalDataset& data, Estimator estimator,
                                     const GofOptions& options = {});

/// Tidy CSV: path_id (obs or 1..), axis, rank, value.
void write_plot_csv(const GofReport& report, const std::filesystem::path& path);
/// Static overlay figure: observed path over the null paths.
void write_plot_svg(const GofReport& report, const std::filesystem::path& path);

}  // namespace aftgof
