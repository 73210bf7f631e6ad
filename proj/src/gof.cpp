#include "aftgof/gof.hpp"

#include "aftgof/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace aftgof {

TestSpec TestSpec::parse(const std::string& text) {
  TestSpec s;
  if (text == "omni" || text == "omnibus") {
    s.kind = TestKind::omnibus;
  } else if (text == "link") {
    s.kind = TestKind::link;
  } else if (text.rfind("form:", 0) == 0 && text.size() > 5) {
    s.kind = TestKind::form;
    s.covariate = text.substr(5);
  } else {
    throw DataError("unknown test '" + text + "' (expected omni, link or form:<name>)");
  }
  return s;
}

std::string TestSpec::label() const {
  switch (kind) {
    case TestKind::omnibus: return "omni";
    case TestKind::link: return "link";
    case TestKind::form: return "form:" + covariate;
  }
  return "?";
}

double empirical_p_value(double observed, const std::vector<double>& sups, int* count) {
  if (sups.empty()) throw NumericalError("no null paths available for the p-value");
  const auto l0 = std::count_if(sups.begin(), sups.end(), [&](double s) { return s >= observed; });
  if (count) *count = static_cast<int>(l0);
  return static_cast<double>(l0) / static_cast<double>(sups.size());
}

std::shared_ptr<const EvalGrid> build_grid(const PathEnsemble& ensemble, const TestSpec& spec,
                                           int grid_cap) {
  const auto& data = ensemble.data();
  switch (spec.kind) {
    case TestKind::omnibus:
      return std::make_shared<EvalGrid>(EvalGrid::omnibus(data, ensemble.frame(), grid_cap));
    case TestKind::link:
      return std::make_shared<EvalGrid>(EvalGrid::link(data));
    case TestKind::form:
      return std::make_shared<EvalGrid>(EvalGrid::form(data, data.covariate_index(spec.covariate)));
  }
  throw DataError("unknown test kind");
}

GofReport make_report(const PathEnsemble& ensemble, const PathBundle& bundle, bool standardized,
                      int plot_paths) {
  GofReport r;
  r.test = bundle.grid->label;
  r.kind = bundle.grid->kind;
  r.estimator = ensemble.anchor().estimator;
  r.scheme = ensemble.scheme();
  r.standardized = standardized;
  r.fit = ensemble.anchor();
  r.K = bundle.K;
  r.K_effective = bundle.effective;
  r.path_sups = standardized ? bundle.sup_standardized : bundle.sup_unstandardized;
  r.observed_sup =
      standardized ? bundle.observed_sup_standardized : bundle.observed_sup_unstandardized;
  r.p_value = empirical_p_value(r.observed_sup, r.path_sups, &r.exceedances);
  if (bundle.K < 50) r.warnings.push_back("fewer than 50 paths; p-value resolution is coarse");
  if (bundle.effective < bundle.K) {
    r.warnings.push_back(std::to_string(bundle.K - bundle.effective) +
                         " perturbed fits did not converge and were excluded");
  }

  const Eigen::MatrixXd scale = standardized
                                    ? Eigen::MatrixXd(bundle.pointwise_sd)
                                    : Eigen::MatrixXd::Ones(bundle.pointwise_sd.rows(),
                                                            bundle.pointwise_sd.cols());
  const Eigen::MatrixXd obs = bundle.observed.values.cwiseQuotient(scale);
  const int shown = std::min<int>(plot_paths, static_cast<int>(bundle.surfaces.size()));
  if (r.kind == TestKind::omnibus) {
    Eigen::Index a = 0, b = 0;
    obs.cwiseAbs().maxCoeff(&a, &b);
    r.plot.axis = "rank_of_log_residual";
    r.plot.observed.assign(obs.col(b).data(), obs.col(b).data() + obs.rows());
    for (int k = 0; k < shown; ++k) {
      const Eigen::VectorXd v = bundle.surfaces[k].values.col(b).cwiseQuotient(scale.col(b));
      r.plot.paths.emplace_back(v.data(), v.data() + v.size());
    }
  } else {
    r.plot.axis = "z_rank";
    const Eigen::VectorXd o = obs.row(0).transpose();
    r.plot.observed.assign(o.data(), o.data() + o.size());
    for (int k = 0; k < shown; ++k) {
      const Eigen::VectorXd v =
          bundle.surfaces[k].values.row(0).cwiseQuotient(scale.row(0)).transpose();
      r.plot.paths.emplace_back(v.data(), v.data() + v.size());
    }
  }
  return r;
}

nlohmann::json GofReport::to_json() const {
  return {{"test", test},
          {"estimator", to_string(estimator)},
          {"scheme", to_string(scheme)},
          {"standardized", standardized},
          {"observed_sup", observed_sup},
          {"path_sups", path_sups},
          {"exceedances", exceedances},
          {"p_value", p_value},
          {"K", K},
          {"K_effective", K_effective},
          {"fit", fit.to_json()},
          {"warnings", warnings}};
}

EnsembleOptions GofOptions::ensemble() const {
  EnsembleOptions e;
  e.scheme = scheme;
  e.fit = fit;
  e.hazard_term = hazard_term;
  return e;
}

BundleOptions GofOptions::bundle() const {
  auto b = BundleOptions::keep(plot_paths);
  b.sd_quantile = sd_quantile;
  return b;
}

FittedModel fit_checked(const SurvivalDataset& data, Estimator estimator, const FitOptions& fit_opts) {
  auto model = fit(data, estimator, std::nullopt, fit_opts);
  if (!model.converged) {
    throw NumericalError(to_string(estimator) + " estimator did not converge (score norm " +
                         std::to_string(model.score_norm) + ")");
  }
  return model;
}

GofReport run_test(const SurvivalDataset& data, Estimator estimator, const TestSpec& spec,
                   const GofOptions& options) {
  const auto model = fit_checked(data, estimator, options.fit);
  const PathEnsemble ensemble(data, model, options.K, options.seed,
                              options.ensemble());
  const auto grid = build_grid(ensemble, spec, options.grid_cap);
  const auto bundle = generate_bundle(ensemble, grid, options.bundle());
  return make_report(ensemble, bundle, options.standardized, options.plot_paths);
}

std::vector<GofReport> run_all_forms(const SurvivalDataset& data, Estimator estimator,
                                     const GofOptions& options) {
  const auto model = fit_checked(data, estimator, options.fit);
  const PathEnsemble ensemble(data, model, options.K, options.seed,
                              options.ensemble());
  std::vector<GofReport> out;
  for (int q = 0; q < data.p(); ++q) {
    const auto grid = std::make_shared<EvalGrid>(EvalGrid::form(data, q));
    const auto bundle = generate_bundle(ensemble, grid, options.bundle());
    out.push_back(make_report(ensemble, bundle, options.standardized, options.plot_paths));
  }
  return out;
}

void write_plot_csv(const GofReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "path_id," << report.plot.axis << ",value\n";
  for (std::size_t a = 0; a < report.plot.observed.size(); ++a) {
    out << "obs," << a + 1 << ',' << report.plot.observed[a] << '\n';
  }
  for (std::size_t k = 0; k < report.plot.paths.size(); ++k) {
    for (std::size_t a = 0; a < report.plot.paths[k].size(); ++a) {
      out << k + 1 << ',' << a + 1 << ',' << report.plot.paths[k][a] << '\n';
    }
  }
}

void write_plot_svg(const GofReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const double W = 640, H = 400, M = 40;
  const auto m = report.plot.observed.size();
  double lo = 0.0, hi = 0.0;
  auto widen = [&](const std::vector<double>& v) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  };
  widen(report.plot.observed);
  for (const auto& p : report.plot.paths) widen(p);
  if (hi - lo <= 0.0) hi = lo + 1.0;
  auto px = [&](std::size_t a) { return M + (m > 1 ? (W - 2 * M) * a / (m - 1.0) : 0.0); };
  auto py = [&](double v) { return H - M - (H - 2 * M) * (v - lo) / (hi - lo); };
  auto polyline = [&](const std::vector<double>& v, const char* color, double width) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
        << "\" points=\"";
    for (std::size_t a = 0; a < v.size(); ++a) out << px(a) << ',' << py(v[a]) << ' ';
    out << "\"/>\n";
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << py(0.0) << "\" x2=\"" << W - M << "\" y2=\"" << py(0.0)
      << "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
  for (const auto& p : report.plot.paths) polyline(p, "#bbbbbb", 0.7);
  polyline(report.plot.observed, "#d62728", 1.6);
  out << "<text x=\"" << M << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << report.test
      << " (" << to_string(report.estimator) << ", "
      << (report.standardized ? "standardized" : "unstandardized") << ") p = " << report.p_value
      << "</text>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << report.plot.axis
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace aftgof
