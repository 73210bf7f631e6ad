#include "aftgof/perturb.hpp"

#include "aftgof/error.hpp"
#include "aftgof/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace aftgof {

std::string to_string(HazardTerm h) {
  return h == HazardTerm::exact ? "exact" : "linearized";
}

HazardTerm parse_hazard_term(const std::string& name) {
  if (name == "linearized") return HazardTerm::linearized;
  if (name == "exact") return HazardTerm::exact;
  throw DataError("unknown hazard term '" + name + "' (expected linearized or exact)");
}

namespace {

// Nelson-Aalen increments of `frame` between consecutive anchor levels,
// with the anchor levels moved by `offset` on the log scale.
std::vector<double> hazard_steps_at(const ResidualFrame& frame, const ResidualFrame& anchor,
                                    double offset = 0.0) {
  const auto& u = anchor.level_log_value();
  std::vector<double> out(u.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double cur = frame.cumulative_hazard_at_log(u[k] + offset);
    out[k] = cur - prev;
    prev = cur;
  }
  return out;
}

struct GridShared {
  std::vector<int> t_level;
  std::vector<bool> t_infinite;
  std::vector<double> a_t;     // f0(t) t
  std::vector<double> g_t;     // sum_{u_k <= t} g0(u_k) u_k dLambda_k
  std::vector<double> a_lvl;   // f0(u_k) u_k
  std::vector<double> g_cum;   // g_t at each level
  Eigen::VectorXd cf_all;      // cf and cg with every indicator 1
  Eigen::VectorXd cg_all;
};

GridShared prepare_grid(const SurvivalDataset& data, const ResidualFrame& frame,
                        const BaselineDensities& dens, const EvalGrid& grid) {
  GridShared s;
  const int levels = frame.level_count();
  s.g_cum.resize(levels);
  s.a_lvl.resize(levels);
  double run = 0.0;
  for (int k = 0; k < levels; ++k) {
    const double dl = frame.na_increments()[k];
    if (dl > 0.0) run += scaled_density(dens.g0, frame.level_value()[k]) * dl;
    s.g_cum[k] = run;
    s.a_lvl[k] = scaled_density(dens.f0, frame.level_value()[k]);
  }
  for (double t : grid.t_grid) {
    const int lvl = level_index_at(frame, t);
    s.t_level.push_back(lvl);
    s.t_infinite.push_back(std::isinf(t));
    s.a_t.push_back(scaled_density(dens.f0, t));
    s.g_t.push_back(lvl < 0 ? 0.0 : s.g_cum[lvl]);
  }
  const auto all = pi_density_terms(data, std::vector<int>(data.n(), 1));
  s.cf_all = all.cf;
  s.cg_all = all.cg;
  return s;
}

struct ColumnShared {
  std::vector<int> pi;
  std::vector<double> s_pi;
  std::vector<double> e_pi;
  Eigen::VectorXd cf;
  Eigen::VectorXd cg;
};

ColumnShared prepare_column(const SurvivalDataset& data, const ResidualFrame& frame,
                            const Eigen::VectorXd& z) {
  ColumnShared c;
  c.pi = indicator_weights(data, z);
  const int levels = frame.level_count();
  c.s_pi.assign(levels, 0.0);
  double s = 0.0;
  for (int k = levels - 1; k >= 0; --k) {
    for (int pos = frame.level_begin()[k]; pos < frame.level_begin()[k + 1]; ++pos) {
      s += c.pi[frame.order()[pos]];
    }
    c.s_pi[k] = s;
  }
  c.e_pi.resize(levels);
  for (int k = 0; k < levels; ++k) c.e_pi[k] = c.s_pi[k] / frame.level_at_risk()[k];
  const auto terms = pi_density_terms(data, c.pi);
  c.cf = terms.cf;
  c.cg = terms.cg;
  return c;
}

// Writes the three terms of one draw for one z column; each output has one
// entry per t grid point. Scratch holds per-level buffers.
void column_terms(const ResidualFrame& frame, const GridShared& g, const ColumnShared& c,
                  const PathDraw& draw, HazardTerm hazard, std::vector<double>& scratch1,
                  std::vector<double>& scratch3, double* t1, double* t2, double* t3) {
  const int n = frame.n();
  const int levels = frame.level_count();
  const auto& order = frame.order();
  const auto& begin = frame.level_begin();
  const auto& status = frame.status();
  scratch1.resize(levels);
  scratch3.resize(levels);

  double c_pi = 0.0;  // sum of w pi over the risk set
  for (int k = levels - 1; k >= 0; --k) {
    double a_pi = 0.0;
    for (int pos = begin[k]; pos < begin[k + 1]; ++pos) {
      const int i = order[pos];
      if (!c.pi[i]) continue;
      const double w = draw.w[i];
      c_pi += w;
      if (status[i] == 1) a_pi += w;
    }
    if (frame.level_events()[k] == 0) {
      scratch1[k] = 0.0;
      continue;
    }
    const double e_pi = c.e_pi[k];
    scratch1[k] = a_pi - e_pi * draw.event_w[k] -
                  frame.na_increments()[k] * (c_pi - e_pi * draw.risk_w[k]);
  }
  const double rn = std::sqrt(static_cast<double>(n));
  const double fd = c.cf.dot(draw.deviation);
  const double gd = c.cg.dot(draw.deviation);
  const double fd_all = g.cf_all.dot(draw.deviation);
  const double gd_all = g.cg_all.dot(draw.deviation);
  const bool exact = hazard == HazardTerm::exact;
  double run1 = 0.0, run3 = 0.0, prev = 0.0;
  for (int k = 0; k < levels; ++k) {
    run1 += scratch1[k];
    if (exact) {
      run3 -= c.s_pi[k] * draw.hazard_gap[k] / n;
    } else {
      const double cur = g.a_lvl[k] * fd_all + g.g_cum[k] * gd_all;
      run3 += c.e_pi[k] * (cur - prev);
      prev = cur;
    }
    scratch1[k] = run1;
    scratch3[k] = run3;
  }
  for (std::size_t a = 0; a < g.t_level.size(); ++a) {
    const int lvl = g.t_level[a];
    t1[a] = lvl < 0 ? 0.0 : scratch1[lvl] / rn;
    t2[a] = -rn * (g.a_t[a] * fd + g.g_t[a] * gd);
    t3[a] = lvl < 0 ? 0.0 : rn * scratch3[lvl];
    if (!exact && lvl >= 0 && g.t_infinite[a]) {
      // f0(t) t vanishes at infinity: the last step runs to that limit.
      const double last = g.a_lvl[lvl] * fd_all + g.g_cum[lvl] * gd_all;
      t3[a] += rn * c.e_pi[lvl] * (g.g_t[a] * gd_all - last);
    }
  }
}

}  // namespace

PathDraw build_draw(const SurvivalDataset& data, const ResidualFrame& anchor_frame,
                    const PerturbationWeights& phi, const FittedModel& perturbed,
                    PerturbationScheme scheme) {
  const int n = data.n();
  if (static_cast<int>(phi.phi.size()) != n) throw DataError("perturbation weights have wrong length");
  PathDraw d;
  d.phi = phi;
  d.fit = perturbed;
  d.ok = perturbed.converged && perturbed.beta.allFinite();
  d.w.resize(n);
  for (int i = 0; i < n; ++i) d.w[i] = phi.phi[i] - 1.0;

  const ResidualFrame star(data, perturbed.beta);
  const auto anchor_steps = hazard_steps_at(anchor_frame, anchor_frame);
  // Both frames on centered covariates: the star frame is read at the anchor
  // levels shifted by the change in the mean linear predictor.
  const double offset = data.covariate_means().dot(perturbed.beta - anchor_frame.beta());
  const auto star_steps = hazard_steps_at(star, anchor_frame, offset);
  const int levels = anchor_frame.level_count();
  d.hazard_gap.resize(levels);
  const bool mart = scheme == PerturbationScheme::martingale_target;
  for (int k = 0; k < levels; ++k) {
    d.hazard_gap[k] = mart ? anchor_steps[k] - star_steps[k] : star_steps[k] - anchor_steps[k];
  }
  d.deviation = mart ? Eigen::VectorXd(anchor_frame.beta() - perturbed.beta)
                     : Eigen::VectorXd(perturbed.beta - anchor_frame.beta());

  d.event_w.assign(levels, 0.0);
  d.risk_w.assign(levels, 0.0);
  double risk = 0.0;
  for (int k = levels - 1; k >= 0; --k) {
    for (int pos = anchor_frame.level_begin()[k]; pos < anchor_frame.level_begin()[k + 1]; ++pos) {
      const int i = anchor_frame.order()[pos];
      risk += d.w[i];
      if (data.status()[i] == 1) d.event_w[k] += d.w[i];
    }
    d.risk_w[k] = risk;
  }
  return d;
}

PathTerms path_terms(const SurvivalDataset& data, const ResidualFrame& frame,
                     const BaselineDensities& dens, const PathDraw& draw, const EvalGrid& grid,
                     HazardTerm hazard) {
  const auto g = prepare_grid(data, frame, dens, grid);
  const auto T = static_cast<Eigen::Index>(grid.t_grid.size());
  const auto Z = static_cast<Eigen::Index>(grid.z_grid.size());
  PathTerms out{Eigen::MatrixXd(T, Z), Eigen::MatrixXd(T, Z), Eigen::MatrixXd(T, Z)};
  std::vector<double> s1, s3;
  for (Eigen::Index b = 0; b < Z; ++b) {
    const auto c = prepare_column(data, frame, grid.z_grid[b]);
    column_terms(frame, g, c, draw, hazard, s1, s3, out.term1.col(b).data(), out.term2.col(b).data(),
                 out.term3.col(b).data());
  }
  return out;
}

PerturbedPath perturbed_path(const SurvivalDataset& data, const FittedModel& anchor,
                             const ResidualFrame& frame, const BaselineDensities& dens,
                             std::shared_ptr<const EvalGrid> grid, const PerturbationWeights& phi,
                             PerturbationScheme scheme, HazardTerm hazard) {
  PerturbedPath out;
  out.fit = fit_perturbed(data, anchor.estimator, phi, anchor, scheme, &frame);
  out.converged = out.fit.converged;
  const auto draw = build_draw(data, frame, phi, out.fit, scheme);
  const auto terms = path_terms(data, frame, dens, draw, *grid, hazard);
  out.surface.values = terms.term1 + terms.term2 + terms.term3;
  out.surface.grid = std::move(grid);
  out.surface.update_sup();
  return out;
}

PathEnsemble::PathEnsemble(SurvivalDataset data, FittedModel anchor, int K, std::uint64_t seed,
                           const EnsembleOptions& options)
    : data_(std::move(data)), anchor_(std::move(anchor)), options_(options), seed_(seed) {
  if (K < 1) throw DataError("number of paths must be at least 1");
  scheme_ = options.scheme.value_or(default_scheme(anchor_.estimator));
  frame_ = std::make_unique<ResidualFrame>(data_, anchor_.beta);
  dens_ = estimate_baseline_densities(*frame_);
  draws_.resize(K);
  parallel_for(K, [&](int k) {
    const auto phi = PerturbationWeights::draw(data_.n(), seed_, k);
    FittedModel fit;
    try {
      fit = fit_perturbed(data_, anchor_.estimator, phi, anchor_, scheme_, frame_.get(), options_.fit);
    } catch (const NumericalError&) {
      fit = anchor_;
      fit.converged = false;
    }
    draws_[k] = build_draw(data_, *frame_, phi, fit, scheme_);
  });
  check_failures();
}

PathEnsemble::PathEnsemble(SurvivalDataset data, FittedModel anchor, std::vector<PathDraw> draws,
                           const EnsembleOptions& options)
    : data_(std::move(data)),
      anchor_(std::move(anchor)),
      draws_(std::move(draws)),
      options_(options) {
  scheme_ = options.scheme.value_or(default_scheme(anchor_.estimator));
  frame_ = std::make_unique<ResidualFrame>(data_, anchor_.beta);
  dens_ = estimate_baseline_densities(*frame_);
  if (!draws_.empty()) seed_ = draws_.front().phi.seed;
  check_failures();
}

int PathEnsemble::effective() const {
  return static_cast<int>(std::count_if(draws_.begin(), draws_.end(), [](const auto& d) { return d.ok; }));
}

void PathEnsemble::check_failures() const {
  const int bad = failed();
  if (draws_.empty() || effective() == 0) {
    throw NumericalError("all perturbed fits failed to converge");
  }
  if (bad > options_.max_failure_fraction * requested()) {
    throw NumericalError(std::to_string(bad) + " of " + std::to_string(requested()) +
                         " perturbed fits failed to converge");
  }
}

ProcessSurface PathEnsemble::observed(std::shared_ptr<const EvalGrid> grid) const {
  return observed_process(data_, *frame_, std::move(grid));
}

ProcessSurface PathEnsemble::surface(int k, std::shared_ptr<const EvalGrid> grid) const {
  const auto terms = path_terms(data_, *frame_, dens_, draws_.at(k), *grid, options_.hazard_term);
  ProcessSurface out;
  out.values = terms.term1 + terms.term2 + terms.term3;
  out.grid = std::move(grid);
  out.update_sup();
  return out;
}

double default_sd_quantile(TestKind kind) { return kind == TestKind::omnibus ? 0.1 : 0.0; }

double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DataError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size()) * prob - 0.5;
  if (h <= 0.0) return values.front();
  if (h >= static_cast<double>(values.size() - 1)) return values.back();
  const auto lo = static_cast<std::size_t>(h);
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

PathBundle generate_bundle(const PathEnsemble& ensemble, std::shared_ptr<const EvalGrid> grid,
                           const BundleOptions& options) {
  const auto& frame = ensemble.frame();
  const auto& data = ensemble.data();
  const auto T = static_cast<Eigen::Index>(grid->t_grid.size());
  const auto Z = static_cast<Eigen::Index>(grid->z_grid.size());

  PathBundle out;
  out.grid = grid;
  out.K = ensemble.requested();
  for (int k = 0; k < ensemble.requested(); ++k) {
    if (!ensemble.draws()[k].ok) continue;
    out.path_index.push_back(k);
    out.seeds.push_back(ensemble.draws()[k].phi.seed);
  }
  const int K = static_cast<int>(out.path_index.size());
  out.effective = K;
  out.observed = ensemble.observed(grid);
  const bool override_sd = options.sd_override.size() > 0;
  if (override_sd && (options.sd_override.rows() != T || options.sd_override.cols() != Z)) {
    throw DataError("sd override does not match the grid shape");
  }
  out.pointwise_sd.resize(T, Z);

  const int keep = options.keep_surfaces < 0 ? K : std::min(K, options.keep_surfaces);
  out.surfaces.resize(keep);
  for (auto& s : out.surfaces) {
    s.grid = grid;
    s.values.resize(T, Z);
  }

  const auto g = prepare_grid(data, frame, ensemble.densities(), *grid);
  const auto hazard = ensemble.options().hazard_term;
  // Path values per column (T x K); the sd clamp needs every column first.
  std::vector<Eigen::MatrixXd> values(Z);
  Eigen::MatrixXd col_unstd(K, Z), col_std(K, Z);
  parallel_for(static_cast<int>(Z), [&](int b) {
    const auto c = prepare_column(data, frame, grid->z_grid[b]);
    auto& v = values[b];
    v.resize(T, K);
    std::vector<double> s1, s3, t1(T), t2(T), t3(T);
    for (int k = 0; k < K; ++k) {
      column_terms(frame, g, c, ensemble.draws()[out.path_index[k]], hazard, s1, s3, t1.data(),
                   t2.data(), t3.data());
      for (Eigen::Index a = 0; a < T; ++a) v(a, k) = t1[a] + t2[a] + t3[a];
    }
    for (Eigen::Index a = 0; a < T; ++a) {
      double sd = 0.0;
      if (override_sd) {
        sd = options.sd_override(a, b);
      } else if (K > 1) {
        const double mean = v.row(a).mean();
        sd = std::sqrt((v.row(a).array() - mean).square().sum() / (K - 1));
      }
      out.pointwise_sd(a, b) = sd;
    }
    for (int k = 0; k < K; ++k) {
      col_unstd(k, b) = v.col(k).cwiseAbs().maxCoeff();
      if (k < keep) out.surfaces[k].values.col(b) = v.col(k);
    }
  });

  double lower = options.sd_floor;
  const double q = options.sd_quantile.value_or(
      default_sd_quantile(grid->kind));
  if (!override_sd && q > 0.0 && out.pointwise_sd.size() > 0) {
    const auto& sd = out.pointwise_sd;
    lower = std::max(lower, sample_quantile({sd.data(), sd.data() + sd.size()}, q));
  }
  out.pointwise_sd = out.pointwise_sd.cwiseMax(lower);

  Eigen::VectorXd obs_unstd(Z), obs_std(Z);
  parallel_for(static_cast<int>(Z), [&](int b) {
    const auto sd_col = out.pointwise_sd.col(b).array();
    for (int k = 0; k < K; ++k) col_std(k, b) = (values[b].col(k).array().abs() / sd_col).maxCoeff();
    values[b].resize(0, 0);
    const auto obs = out.observed.values.col(b).array();
    obs_unstd(b) = obs.abs().maxCoeff();
    obs_std(b) = (obs.abs() / sd_col).maxCoeff();
  });

  out.sup_unstandardized.resize(K);
  out.sup_standardized.resize(K);
  for (int k = 0; k < K; ++k) {
    out.sup_unstandardized[k] = Z ? col_unstd.row(k).maxCoeff() : 0.0;
    out.sup_standardized[k] = Z ? col_std.row(k).maxCoeff() : 0.0;
  }
  for (auto& s : out.surfaces) s.update_sup();
  out.observed_sup_unstandardized = Z ? obs_unstd.maxCoeff() : 0.0;
  out.observed_sup_standardized = Z ? obs_std.maxCoeff() : 0.0;
  return out;
}

}  // namespace aftgof
