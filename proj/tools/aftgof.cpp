#include "aftgof/data.hpp"
#include "aftgof/error.hpp"
#include "aftgof/estimate.hpp"
#include "aftgof/gof.hpp"
#include "aftgof/parallel.hpp"
#include "aftgof/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace aftgof;

constexpr const char* kVersion = "0.1.0";

struct InputArgs {
  std::string path;
  std::string time_col = "time";
  std::string status_col = "status";
  std::vector<std::string> covariates;
  bool exempt_binary = false;
  bool raw = false;
};

struct Loaded {
  SurvivalDataset data;
  SurvivalDataset raw;
  StandardizationRecord record;
  bool standardized = false;
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << v;
  return ss.str();
}

std::vector<std::string> header_columns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  std::vector<std::string> cols;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r\"");
    const auto b = cell.find_last_not_of(" \t\r\"");
    cols.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return cols;
}

Loaded load_input(const InputArgs& in) {
  auto covs = in.covariates;
  if (covs.empty()) {
    for (const auto& c : header_columns(in.path)) {
      if (c != in.time_col && c != in.status_col) covs.push_back(c);
    }
  }
  auto raw = load_csv(in.path, in.time_col, in.status_col, covs);
  if (in.raw) return {raw, raw, {}, false};
  auto [std_data, record] = standardize(raw, StandardizeOptions{in.exempt_binary});
  return {std::move(std_data), std::move(raw), std::move(record), true};
}

json manifest(const std::string& subcommand, const std::vector<std::string>& args,
              const std::string& input_path) {
  json m{{"tool", "aftgof"},
         {"version", kVersion},
         {"subcommand", subcommand},
         {"args", args},
         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                       "." + std::to_string(EIGEN_MINOR_VERSION)}};
  if (!input_path.empty()) {
    m["input"] = {{"path", input_path}, {"fnv1a64", hex(fnv1a(read_file(input_path)))}};
  }
  return m;
}

void emit(const json& doc, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(output);
  if (!out) throw DataError("cannot write " + output);
  out << doc.dump(2) << '\n';
}

json standardization_json(const Loaded& l) {
  if (!l.standardized) return nullptr;
  std::vector<double> mean(l.record.mean.data(), l.record.mean.data() + l.record.mean.size());
  std::vector<double> sd(l.record.sd.data(), l.record.sd.data() + l.record.sd.size());
  std::vector<bool> exempt = l.record.exempt;
  return {{"mean", mean}, {"sd", sd}, {"exempt", exempt}};
}

json fit_json(const Loaded& l, const FittedModel& model) {
  json j = model.to_json();
  const auto& names = l.data.names();
  const Eigen::VectorXd raw_beta = l.standardized ? l.record.coefficients_to_raw(model.beta) : model.beta;
  json coef = json::array();
  for (int q = 0; q < l.data.p(); ++q) {
    coef.push_back({{"name", q < static_cast<int>(names.size()) ? names[q] : "z" + std::to_string(q + 1)},
                    {"standardized", l.standardized ? json(model.beta(q)) : json(nullptr)},
                    {"raw", raw_beta(q)}});
  }
  j["coefficients"] = coef;
  return j;
}

void add_input_options(CLI::App* app, InputArgs& in) {
  app->add_option("--input,-i", in.path, "CSV with a header row")->required()->check(CLI::ExistingFile);
  app->add_option("--time-col", in.time_col, "Observed time column");
  app->add_option("--status-col", in.status_col, "Event indicator column (1 event, 0 censored)");
  app->add_option("--covariates", in.covariates, "Covariate columns (default: all other columns)")
      ->delimiter(',');
  app->add_flag("--exempt-binary", in.exempt_binary, "Leave two-valued covariates unscaled");
  app->add_flag("--no-standardize", in.raw, "Fit on the raw covariate scale");
}

std::vector<TestSpec> expand_tests(const std::vector<std::string>& tests, const SurvivalDataset& data,
                                   bool& all_forms) {
  std::vector<TestSpec> out;
  all_forms = false;
  for (const auto& t : tests) {
    if (t == "all-forms") {
      all_forms = true;
      continue;
    }
    auto spec = TestSpec::parse(t);
    if (spec.kind == TestKind::form) (void)data.covariate_index(spec.covariate);
    out.push_back(spec);
  }
  return out;
}

std::string plot_name(const std::string& base, const std::string& label, bool many,
                      const std::string& ext) {
  if (!many) return base;
  auto stem = base;
  if (stem.size() > ext.size() && stem.compare(stem.size() - ext.size(), ext.size(), ext) == 0) {
    stem.erase(stem.size() - ext.size());
  }
  std::string tag = label;
  for (auto& c : tag)
    if (c == ':') c = '_';
  return stem + "_" + tag + ext;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goodness-of-fit tests for semiparametric accelerated failure time models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  int threads = 0;
  if (const char* env = std::getenv("AFTGOF_THREADS")) threads = std::atoi(env);
  app.add_option("--threads", threads, "Worker threads (default AFTGOF_THREADS, else all cores)")
      ->check(CLI::NonNegativeNumber);

  InputArgs in;
  std::string estimator = "mis";
  std::string output;
  std::uint64_t seed = 1;

  auto* fit_cmd = app.add_subcommand("fit", "Fit the AFT model and print coefficients as JSON");
  add_input_options(fit_cmd, in);
  fit_cmd->add_option("--estimator,-e", estimator, "mns, mis or mls");
  fit_cmd->add_option("--output,-o", output, "JSON destination (default stdout)");

  std::vector<std::string> tests{"omni"};
  bool unstd = false;
  int K = 500;
  int grid_cap = 200;
  std::string svg;
  std::string plot_csv;
  std::string scheme;
  std::string hazard = "linearized";
  double sd_quantile = -1.0;
  auto add_gof_options = [&](CLI::App* cmd) {
    add_input_options(cmd, in);
    cmd->add_option("--estimator,-e", estimator, "mns, mis or mls");
    cmd->add_option("--test,-t", tests, "omni, link, form:<name> or all-forms")->delimiter(',');
    auto* s = cmd->add_flag("--std", "Standardized statistic (default)");
    cmd->add_flag("--unstd", unstd, "Unstandardized statistic")->excludes(s);
    cmd->add_option("--paths,-K", K, "Number of perturbed paths")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Multiplier seed");
    cmd->add_option("--grid-cap", grid_cap, "Omnibus z grid size above which representatives are used (0: full grid)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--svg", svg, "Overlay figure destination");
    cmd->add_option("--scheme", scheme, "martingale_target or weighted_score");
    cmd->add_option("--hazard-term", hazard, "linearized or exact");
    cmd->add_option("--sd-quantile", sd_quantile, "Quantile for the sd lower clamp (0 disables)");
  };

  auto* gof_cmd = app.add_subcommand("gof", "Run goodness-of-fit tests and print a JSON report");
  add_gof_options(gof_cmd);
  gof_cmd->add_option("--output,-o", output, "JSON destination (default stdout)");
  gof_cmd->add_option("--plot-csv", plot_csv, "Tidy CSV of the observed and first null paths");

  auto* plot_cmd = app.add_subcommand("plotdata", "Write the observed path and null paths as tidy CSV");
  add_gof_options(plot_cmd);
  plot_cmd->add_option("--output,-o", output, "CSV destination")->required();

  std::string config_path;
  std::string summary_path;
  std::vector<std::string> scenarios{"S1"};
  std::vector<int> ns{100};
  std::vector<double> gammas{0.0};
  std::vector<double> cens{0.2};
  std::vector<std::string> estimators{"mns", "mis"};
  std::vector<std::string> sim_tests{"omni", "link", "form"};
  int reps = 200;
  double alpha = 0.05;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo rejection rates on simulated scenarios");
  sim_cmd->add_option("--config,-c", config_path, "Key-value harness config (overrides the flags below)")
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--scenario", scenarios, "S1 and/or S2")->delimiter(',');
  sim_cmd->add_option("--n", ns, "Sample sizes")->delimiter(',');
  sim_cmd->add_option("--gamma", gammas, "Misspecification strengths")->delimiter(',');
  sim_cmd->add_option("--censoring", cens, "Target censoring fractions")->delimiter(',');
  sim_cmd->add_option("--estimators", estimators, "Estimators")->delimiter(',');
  sim_cmd->add_option("--tests", sim_tests, "omni, link, form")->delimiter(',');
  sim_cmd->add_option("--reps", reps, "Replicates per cell")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--paths,-K", K, "Perturbed paths per replicate")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", seed, "Master seed");
  sim_cmd->add_option("--alpha", alpha, "Significance level");
  sim_cmd->add_option("--grid-cap", grid_cap, "Omnibus z grid cap")->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--output,-o", output, "Table CSV destination")->required();
  sim_cmd->add_option("--summary", summary_path, "Summary JSON destination (default <output>.json)");
  sim_cmd->add_flag("--progress", "Print progress to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (threads > 0) set_worker_count(threads);

    if (*fit_cmd) {
      const auto est = parse_estimator(estimator);
      const auto l = load_input(in);
      const auto model = fit_checked(l.data, est);
      json doc{{"manifest", manifest("fit", args, in.path)},
               {"data", l.raw.summary_json()},
               {"standardization", standardization_json(l)},
               {"fit", fit_json(l, model)}};
      doc["manifest"]["estimator"] = to_string(est);
      emit(doc, output);
      return 0;
    }

    if (*gof_cmd || *plot_cmd) {
      const auto est = parse_estimator(estimator);
      const auto l = load_input(in);
      GofOptions opt;
      opt.standardized = !unstd;
      opt.K = K;
      opt.seed = seed;
      opt.grid_cap = grid_cap;
      if (!scheme.empty()) opt.scheme = parse_scheme(scheme);
      opt.hazard_term = parse_hazard_term(hazard);
      if (sd_quantile >= 0.0) opt.sd_quantile = sd_quantile;

      bool all_forms = false;
      const auto specs = expand_tests(tests, l.data, all_forms);
      std::vector<GofReport> reports;
      for (const auto& s : specs) reports.push_back(run_test(l.data, est, s, opt));
      if (all_forms) {
        auto forms = run_all_forms(l.data, est, opt);
        reports.insert(reports.end(), forms.begin(), forms.end());
      }
      const bool many = reports.size() > 1;

      if (*plot_cmd) {
        for (const auto& r : reports) write_plot_csv(r, plot_name(output, r.test, many, ".csv"));
      } else {
        json reps_json = json::array();
        for (const auto& r : reports) {
          auto j = r.to_json();
          j["fit"] = fit_json(l, r.fit);
          reps_json.push_back(std::move(j));
        }
        json doc{{"manifest", manifest("gof", args, in.path)},
                 {"data", l.raw.summary_json()},
                 {"standardization", standardization_json(l)},
                 {"reports", reps_json}};
        doc["manifest"]["estimator"] = to_string(est);
        doc["manifest"]["seed"] = seed;
        doc["manifest"]["K"] = K;
        doc["manifest"]["hazard_term"] = to_string(opt.hazard_term);
        emit(doc, output);
        if (!plot_csv.empty()) {
          for (const auto& r : reports) write_plot_csv(r, plot_name(plot_csv, r.test, many, ".csv"));
        }
      }
      if (!svg.empty()) {
        for (const auto& r : reports) write_plot_svg(r, plot_name(svg, r.test, many, ".svg"));
      }
      return 0;
    }

    if (*sim_cmd) {
      HarnessConfig cfg;
      if (!config_path.empty()) {
        cfg = HarnessConfig::load(config_path);
      } else {
        std::ostringstream text;
        auto join = [](const auto& v) {
          std::ostringstream s;
          for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
          return s.str();
        };
        text << "scenario = " << join(scenarios) << "\nn = " << join(ns) << "\ngamma = " << join(gammas)
             << "\ncensoring = " << join(cens) << "\nreps = " << reps << "\nK = " << K
             << "\nseed = " << seed << "\nestimators = " << join(estimators)
             << "\ntests = " << join(sim_tests) << "\nalpha = " << alpha
             << "\ngrid_cap = " << grid_cap << '\n';
        cfg = HarnessConfig::parse(text.str());
      }
      const bool show = sim_cmd->count("--progress") > 0;
      const auto result = run_harness(cfg, [&](int done, int total) {
        if (show) std::cerr << "\r" << done << "/" << total << std::flush;
      });
      if (show) std::cerr << '\n';
      result.write_csv(output);
      json summary = result.summary_json();
      summary["manifest"] = manifest("simulate", args, config_path);
      summary["manifest"]["seed"] = cfg.seed;
      summary["manifest"]["K"] = cfg.K;
      emit(summary, summary_path.empty() ? output + ".json" : summary_path);
      for (const auto& row : result.rows) {
        if (row.completed == 0) {
          std::cerr << "error: cell " << row.cell_index << " (" << row.test << ", "
                    << to_string(row.estimator) << ") has no completed replicates\n";
          return 3;
        }
      }
      return 0;
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
