#pragma once

#include "aftgof/data.hpp"
#include "aftgof/residual.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace aftgof {

enum class TestKind { omnibus, link, form };

/// Lattice on which a process is evaluated. Thresholds equal to +inf always
/// pass the indicator.
struct EvalGrid {
  TestKind kind = TestKind::omnibus;
  int form_index = -1;
  std::string label;
  /// Exp-scale residual thresholds, ascending; may hold +inf.
  std::vector<double> t_grid;
  std::vector<Eigen::VectorXd> z_grid;

  /// t = distinct event residuals of `frame`; z = observed covariate rows,
  /// replaced by `cap` covariate-wise quantile representatives when n > cap
  /// (cap <= 0 keeps every row).
  static EvalGrid omnibus(const SurvivalDataset& data, const ResidualFrame& frame, int cap = 200);
  /// t = +inf; z = distinct observed covariate rows in lexicographic order.
  static EvalGrid link(const SurvivalDataset& data);
  /// t = +inf; z varies in coordinate q over its distinct observed values,
  /// every other coordinate is +inf.
  static EvalGrid form(const SurvivalDataset& data, int q);
};

/// Values of one path on a grid: values(a, b) at (t_grid[a], z_grid[b]).
struct ProcessSurface {
  std::shared_ptr<const EvalGrid> grid;
  Eigen::MatrixXd values;
  double sup_abs = 0.0;

  void update_sup();
};

/// prod_q I(Z_iq <= z_q).
int indicator_weight(const Eigen::Ref<const Eigen::VectorXd>& zi,
                     const Eigen::Ref<const Eigen::VectorXd>& z);

/// pi_i(z) for every subject.
std::vector<int> indicator_weights(const SurvivalDataset& data, const Eigen::VectorXd& z);

/// Index of the last frame level whose value is <= t, or -1.
int level_index_at(const ResidualFrame& frame, double t);

/// W(t, z) = n^-1/2 sum_i pi_i(z) M_i(t).
ProcessSurface observed_process(const SurvivalDataset& data, const ResidualFrame& frame,
                                std::shared_ptr<const EvalGrid> grid);

/// S_pi(t, z) = sum_i pi_i(z) Y_i(t) and E_pi = S_pi / S0, one value per level.
struct PiRiskAverages {
  std::vector<double> s_pi;
  std::vector<double> e_pi;
};

PiRiskAverages pi_risk_averages(const SurvivalDataset& data, const ResidualFrame& frame,
                                const Eigen::VectorXd& z);

/// f_pi(t, z) = f0(t) t cf(z), g_pi(t, z) = g0(t) t cg(z), with
/// cf = n^-1 sum Delta_i pi_i (Z_i - Zbar) and cg = n^-1 sum pi_i (Z_i - Zbar).
struct PiDensityTerms {
  Eigen::VectorXd cf;
  Eigen::VectorXd cg;
  const BaselineDensities* densities = nullptr;

  [[nodiscard]] Eigen::VectorXd f(double t) const;
  [[nodiscard]] Eigen::VectorXd g(double t) const;
};

PiDensityTerms pi_density_terms(const SurvivalDataset& data, const BaselineDensities& dens,
                                const Eigen::VectorXd& z);
/// Coefficients only, from precomputed indicators.
PiDensityTerms pi_density_terms(const SurvivalDataset& data, const std::vector<int>& pi);

/// f0(t) t, taken as 0 at t = +inf.
double scaled_density(const KernelDensity& k, double t);

}  // namespace aftgof
