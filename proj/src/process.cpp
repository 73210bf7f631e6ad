#include "aftgof/process.hpp"

#include "aftgof/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aftgof {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index q = 0; q < a.size(); ++q) {
    if (a(q) < b(q)) return true;
    if (b(q) < a(q)) return false;
  }
  return false;
}

std::vector<Eigen::VectorXd> unique_rows(const Eigen::MatrixXd& z) {
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) rows.emplace_back(z.row(i).transpose());
  std::sort(rows.begin(), rows.end(), lex_less);
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const auto& a, const auto& b) { return a == b; }),
             rows.end());
  return rows;
}

}  // namespace

EvalGrid EvalGrid::omnibus(const SurvivalDataset& data, const ResidualFrame& frame, int cap) {
  EvalGrid g;
  g.kind = TestKind::omnibus;
  g.label = "omni";
  for (int k : frame.event_levels()) g.t_grid.push_back(frame.level_value()[k]);
  const int n = data.n();
  const int p = data.p();
  if (cap <= 0 || n <= cap) {
    g.z_grid = unique_rows(data.covariates());
    return g;
  }
  std::vector<std::vector<double>> sorted(p);
  for (int q = 0; q < p; ++q) {
    const auto col = data.covariates().col(q);
    sorted[q].assign(col.data(), col.data() + n);
    std::sort(sorted[q].begin(), sorted[q].end());
  }
  for (int b = 0; b < cap; ++b) {
    const auto pos = static_cast<int>((b + 0.5) * n / cap);
    Eigen::VectorXd z(p);
    for (int q = 0; q < p; ++q) z(q) = sorted[q][std::min(pos, n - 1)];
    g.z_grid.push_back(std::move(z));
  }
  std::sort(g.z_grid.begin(), g.z_grid.end(), lex_less);
  g.z_grid.erase(std::unique(g.z_grid.begin(), g.z_grid.end(),
                             [](const auto& a, const auto& b) { return a == b; }),
                 g.z_grid.end());
  return g;
}

EvalGrid EvalGrid::link(const SurvivalDataset& data) {
  EvalGrid g;
  g.kind = TestKind::link;
  g.label = "link";
  g.t_grid = {kInf};
  g.z_grid = unique_rows(data.covariates());
  return g;
}

EvalGrid EvalGrid::form(const SurvivalDataset& data, int q) {
  if (q < 0 || q >= data.p()) throw DataError("form test covariate index out of range");
  EvalGrid g;
  g.kind = TestKind::form;
  g.form_index = q;
  g.label = "form:" + data.names()[q];
  g.t_grid = {kInf};
  const auto col = data.covariates().col(q);
  std::vector<double> values(col.data(), col.data() + data.n());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  for (double v : values) {
    Eigen::VectorXd z = Eigen::VectorXd::Constant(data.p(), kInf);
    z(q) = v;
    g.z_grid.push_back(std::move(z));
  }
  return g;
}

void ProcessSurface::update_sup() {
  sup_abs = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
}

int indicator_weight(const Eigen::Ref<const Eigen::VectorXd>& zi,
                     const Eigen::Ref<const Eigen::VectorXd>& z) {
  for (Eigen::Index q = 0; q < zi.size(); ++q) {
    if (!(zi(q) <= z(q))) return 0;
  }
  return 1;
}

std::vector<int> indicator_weights(const SurvivalDataset& data, const Eigen::VectorXd& z) {
  const auto& cov = data.covariates();
  std::vector<int> pi(data.n(), 1);
  for (int q = 0; q < data.p(); ++q) {
    if (z(q) == kInf) continue;
    for (int i = 0; i < data.n(); ++i) {
      if (!(cov(i, q) <= z(q))) pi[i] = 0;
    }
  }
  return pi;
}

int level_index_at(const ResidualFrame& frame, double t) {
  const auto& v = frame.level_value();
  return static_cast<int>(std::upper_bound(v.begin(), v.end(), t) - v.begin()) - 1;
}

ProcessSurface observed_process(const SurvivalDataset& data, const ResidualFrame& frame,
                                std::shared_ptr<const EvalGrid> grid) {
  const int levels = frame.level_count();
  const auto& order = frame.order();
  const auto& begin = frame.level_begin();
  const double scale = 1.0 / std::sqrt(static_cast<double>(frame.n()));
  std::vector<int> t_level;
  for (double t : grid->t_grid) t_level.push_back(level_index_at(frame, t));

  ProcessSurface out;
  out.values.resize(static_cast<Eigen::Index>(grid->t_grid.size()),
                    static_cast<Eigen::Index>(grid->z_grid.size()));
  std::vector<double> cum(levels);
  for (std::size_t b = 0; b < grid->z_grid.size(); ++b) {
    const auto pi = indicator_weights(data, grid->z_grid[b]);
    // Increment at level k: sum over events of pi - dLambda_k * S_pi(k).
    double s_pi = 0.0;
    std::vector<double> inc(levels, 0.0);
    for (int k = levels - 1; k >= 0; --k) {
      double ev = 0.0;
      for (int pos = begin[k]; pos < begin[k + 1]; ++pos) {
        const int i = order[pos];
        s_pi += pi[i];
        if (frame.status()[i] == 1) ev += pi[i];
      }
      inc[k] = ev - frame.na_increments()[k] * s_pi;
    }
    double run = 0.0;
    for (int k = 0; k < levels; ++k) cum[k] = (run += inc[k]);
    for (std::size_t a = 0; a < t_level.size(); ++a) {
      out.values(a, b) = t_level[a] < 0 ? 0.0 : scale * cum[t_level[a]];
    }
  }
  out.grid = std::move(grid);
  out.update_sup();
  return out;
}

PiRiskAverages pi_risk_averages(const SurvivalDataset& data, const ResidualFrame& frame,
                                const Eigen::VectorXd& z) {
  const auto pi = indicator_weights(data, z);
  const int levels = frame.level_count();
  PiRiskAverages out;
  out.s_pi.assign(levels, 0.0);
  out.e_pi.assign(levels, 0.0);
  double s = 0.0;
  for (int k = levels - 1; k >= 0; --k) {
    for (int pos = frame.level_begin()[k]; pos < frame.level_begin()[k + 1]; ++pos) {
      s += pi[frame.order()[pos]];
    }
    out.s_pi[k] = s;
    out.e_pi[k] = s / frame.level_at_risk()[k];
  }
  return out;
}

double scaled_density(const KernelDensity& k, double t) {
  if (!std::isfinite(t)) return 0.0;
  return k(t) * t;
}

Eigen::VectorXd PiDensityTerms::f(double t) const {
  return scaled_density(densities->f0, t) * cf;
}

Eigen::VectorXd PiDensityTerms::g(double t) const {
  return scaled_density(densities->g0, t) * cg;
}

PiDensityTerms pi_density_terms(const SurvivalDataset& data, const std::vector<int>& pi) {
  const Eigen::VectorXd mean = data.covariate_means();
  PiDensityTerms out;
  out.cf = Eigen::VectorXd::Zero(data.p());
  out.cg = Eigen::VectorXd::Zero(data.p());
  for (int i = 0; i < data.n(); ++i) {
    if (!pi[i]) continue;
    const Eigen::VectorXd zc = data.covariates().row(i).transpose() - mean;
    out.cg += zc;
    if (data.status()[i] == 1) out.cf += zc;
  }
  out.cf /= data.n();
  out.cg /= data.n();
  return out;
}

PiDensityTerms pi_density_terms(const SurvivalDataset& data, const BaselineDensities& dens,
                                const Eigen::VectorXd& z) {
  auto out = pi_density_terms(data, indicator_weights(data, z));
  out.densities = &dens;
  return out;
}

}  // namespace aftgof
