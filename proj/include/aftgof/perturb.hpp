#pragma once

#include "aftgof/data.hpp"
#include "aftgof/estimate.hpp"
#include "aftgof/process.hpp"
#include "aftgof/residual.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aftgof {

/// How Term 3 (the change in the Nelson-Aalen estimate between beta_hat and
/// beta*) enters W-hat. `exact` sums S_pi against the difference of the two
/// step functions read at the anchor levels. `linearized` replaces that
/// difference by its first-order expansion built from the same kernel terms:
/// term3 = n^1/2 int_0^t E_pi d(f_1 + int g_1 dLambda)' d, with f_1, g_1 the
/// density terms at z = +inf. Only `linearized` keeps W-hat(t, +inf) = 0.
enum class HazardTerm { linearized, exact };

std::string to_string(HazardTerm h);
HazardTerm parse_hazard_term(const std::string& name);

/// Everything one multiplier draw contributes to W-hat, independent of the grid.
struct PathDraw {
  PerturbationWeights phi;
  FittedModel fit;                  // beta*
  bool ok = false;                  // perturbed fit converged
  std::vector<double> w;            // phi_i - 1
  Eigen::VectorXd deviation;        // b_plus - b_minus
  std::vector<double> hazard_gap;   // dLambda_plus - dLambda_minus per anchor level
  std::vector<double> event_w;      // sum of w over events at each anchor level
  std::vector<double> risk_w;       // sum of w over the risk set at each anchor level
};

/// Assembles a draw from a solved perturbed fit. Under martingale_target the
/// pair (b_plus, b_minus) is (beta_hat, beta*); under weighted_score it is
/// (beta*, beta_hat). Both Nelson-Aalen curves are read at the anchor levels.
PathDraw build_draw(const SurvivalDataset& data, const ResidualFrame& anchor_frame,
                    const PerturbationWeights& phi, const FittedModel& perturbed,
                    PerturbationScheme scheme);

/// Term-by-term W-hat on a grid, each already scaled:
/// term1 = n^-1/2 sum_i w_i int (pi_i - E_pi) dM_i,
/// term2 = -n^1/2 (f_pi(t) + int_0^t g_pi dLambda)' d,
/// term3 = -n^-1/2 sum_{u_k <= t} S_pi(u_k) hazard_gap_k (exact) or its
/// linearization (see HazardTerm).
struct PathTerms {
  Eigen::MatrixXd term1;
  Eigen::MatrixXd term2;
  Eigen::MatrixXd term3;
};

PathTerms path_terms(const SurvivalDataset& data, const ResidualFrame& frame,
                     const BaselineDensities& dens, const PathDraw& draw, const EvalGrid& grid,
                     HazardTerm hazard = HazardTerm::linearized);

struct PerturbedPath {
  ProcessSurface surface;
  FittedModel fit;
  bool converged = false;
};

/// Fits the perturbed problem for `phi` and evaluates W-hat on `grid`.
PerturbedPath perturbed_path(const SurvivalDataset& data, const FittedModel& anchor,
                             const ResidualFrame& frame, const BaselineDensities& dens,
                             std::shared_ptr<const EvalGrid> grid, const PerturbationWeights& phi,
                             PerturbationScheme scheme,
                             HazardTerm hazard = HazardTerm::linearized);

struct EnsembleOptions {
  /// Defaults to default_scheme(anchor.estimator).
  std::optional<PerturbationScheme> scheme;
  FitOptions fit;
  /// Abort when more than this fraction of perturbed fits fail.
  double max_failure_fraction = 0.10;
  HazardTerm hazard_term = HazardTerm::linearized;
};

/// K perturbed fits for one (data, anchor) pair, shared by every grid.
class PathEnsemble {
 public:
  /// Draws phi for path indices 0..K-1 from `seed` and solves each perturbed
  /// problem in parallel. Throws NumericalError when too many fits fail.
  PathEnsemble(SurvivalDataset data, FittedModel anchor, int K, std::uint64_t seed,
               const EnsembleOptions& options);
  /// Uses precomputed draws (built at the same anchor).
  PathEnsemble(SurvivalDataset data, FittedModel anchor, std::vector<PathDraw> draws,
               const EnsembleOptions& options = {});

  [[nodiscard]] const SurvivalDataset& data() const { return data_; }
  [[nodiscard]] const FittedModel& anchor() const { return anchor_; }
  [[nodiscard]] const ResidualFrame& frame() const { return *frame_; }
  [[nodiscard]] const BaselineDensities& densities() const { return dens_; }
  [[nodiscard]] const std::vector<PathDraw>& draws() const { return draws_; }
  [[nodiscard]] PerturbationScheme scheme() const { return scheme_; }
  [[nodiscard]] const EnsembleOptions& options() const { return options_; }
  [[nodiscard]] int requested() const { return static_cast<int>(draws_.size()); }
  [[nodiscard]] int effective() const;
  [[nodiscard]] int failed() const { return requested() - effective(); }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  [[nodiscard]] ProcessSurface observed(std::shared_ptr<const EvalGrid> grid) const;
  /// W-hat for draw `k` (any draw, including failed ones).
  [[nodiscard]] ProcessSurface surface(int k, std::shared_ptr<const EvalGrid> grid) const;

 private:
  void check_failures() const;

  SurvivalDataset data_;
  FittedModel anchor_;
  std::unique_ptr<ResidualFrame> frame_;
  BaselineDensities dens_;
  std::vector<PathDraw> draws_;
  EnsembleOptions options_;
  PerturbationScheme scheme_ = PerturbationScheme::martingale_target;
  std::uint64_t seed_ = 0;
};

/// Observed surface, null paths and pointwise sd on one grid.
struct PathBundle {
  std::shared_ptr<const EvalGrid> grid;
  int K = 0;
  int effective = 0;
  std::vector<int> path_index;            // effective draws, ascending
  std::vector<std::uint64_t> seeds;
  Eigen::MatrixXd pointwise_sd;           // floor-clamped
  ProcessSurface observed;
  std::vector<ProcessSurface> surfaces;   // first kept effective paths
  std::vector<double> sup_unstandardized;
  std::vector<double> sup_standardized;
  double observed_sup_unstandardized = 0.0;
  double observed_sup_standardized = 0.0;
};

struct BundleOptions {
  /// Number of effective path surfaces to keep (-1 keeps all).
  int keep_surfaces = -1;
  double sd_floor = 1e-10;
  /// Lower clamp for the pointwise sd: entries below this quantile of all
  /// cell sds are raised to it. Unset uses default_sd_quantile(grid kind);
  /// 0 turns the clamp off.
  std::optional<double> sd_quantile;
  /// Replaces the ensemble sd (same shape as the grid) when non-empty.
  Eigen::MatrixXd sd_override;

  static BundleOptions keep(int surfaces) {
    BundleOptions o;
    o.keep_surfaces = surfaces;
    return o;
  }
};

/// Quantile level of the sd clamp for `kind` when BundleOptions leaves it unset:
/// 0.1 for the omnibus surface, 0 (floor only) for the link and form processes.
double default_sd_quantile(TestKind kind);

/// Type-5 sample quantile (linear between midpoints of the sorted values).
double sample_quantile(std::vector<double> values, double prob);

PathBundle generate_bundle(const PathEnsemble& ensemble, std::shared_ptr<const EvalGrid> grid,
                           const BundleOptions& options = {});

}  // namespace aftgof
