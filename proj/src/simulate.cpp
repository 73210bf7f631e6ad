#include "aftgof/simulate.hpp"

#include "aftgof/error.hpp"
#include "aftgof/gof.hpp"
#include "aftgof/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

namespace aftgof {

namespace {

constexpr std::uint64_t kDataDomain = 0x64617461ULL;
constexpr std::uint64_t kCalibrationDomain = 0x63616c69ULL;
constexpr std::uint64_t kPathDomain = 0x70617468ULL;

struct Subject {
  double z1 = 0.0;
  double z2 = 0.0;
  double log_t = 0.0;
  double c_noise = 0.0;
};

// Fixed draw order per subject so that tau only moves the censoring times.
Subject draw_subject(Scenario scenario, double gamma, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Subject s;
  if (scenario == Scenario::S1) {
    s.z2 = 2.0 + normal(gen);
    s.log_t = 4.0 - s.z2 - gamma * s.z2 * s.z2;
  } else {
    s.z1 = coin(gen) ? 1.0 : 0.0;
    s.z2 = 2.0 + normal(gen);
    s.log_t = 4.0 - s.z1 - s.z2 - gamma * s.z2 * s.z2;
  }
  s.log_t += normal(gen);
  s.c_noise = normal(gen);
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t\r");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("harness config: '" + key + "' expects a number, got '" + v + "'");
  }
}

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::S1 ? "S1" : "S2"; }

Scenario parse_scenario(const std::string& name) {
  if (name == "S1" || name == "s1" || name == "1") return Scenario::S1;
  if (name == "S2" || name == "s2" || name == "2") return Scenario::S2;
  throw DataError("unknown scenario '" + name + "'");
}

SurvivalDataset generate(const ScenarioConfig& c) {
  if (c.gamma < 0.0) throw DataError("gamma must be nonnegative");
  if (c.n < 4) throw DataError("scenario sample size must be at least 4");
  auto gen = keyed_stream(c.seed, kDataDomain, static_cast<std::uint64_t>(c.replicate));
  const int p = c.scenario == Scenario::S1 ? 1 : 2;
  std::vector<double> time(c.n);
  std::vector<int> status(c.n);
  Eigen::MatrixXd z(c.n, p);
  for (int i = 0; i < c.n; ++i) {
    const auto s = draw_subject(c.scenario, c.gamma, gen);
    const double log_c = c.tau + s.c_noise;
    if (std::isfinite(c.tau) && log_c < s.log_t) {
      time[i] = std::exp(log_c);
      status[i] = 0;
    } else {
      time[i] = std::exp(s.log_t);
      status[i] = 1;
    }
    if (p == 1) {
      z(i, 0) = s.z2;
    } else {
      z(i, 0) = s.z1;
      z(i, 1) = s.z2;
    }
  }
  std::vector<std::string> names = p == 1 ? std::vector<std::string>{"z"}
                                          : std::vector<std::string>{"z1", "z2"};
  return {std::move(time), std::move(status), std::move(z), std::move(names)};
}

namespace {

// Subject i is censored at tau iff tau < log T_i - noise_i.
std::vector<double> censoring_thresholds(Scenario scenario, double gamma, std::uint64_t seed,
                                         int draws) {
  auto gen = keyed_stream(seed, kCalibrationDomain, 0);
  std::vector<double> d(draws);
  for (auto& v : d) {
    const auto s = draw_subject(scenario, gamma, gen);
    v = s.log_t - s.c_noise;
  }
  std::sort(d.begin(), d.end());
  return d;
}

double rate_from(const std::vector<double>& sorted, double tau) {
  const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), tau);
  return static_cast<double>(above) / static_cast<double>(sorted.size());
}

}  // namespace

double censoring_rate(Scenario scenario, double gamma, double tau, std::uint64_t seed, int draws) {
  if (!std::isfinite(tau) && tau > 0) return 0.0;
  return rate_from(censoring_thresholds(scenario, gamma, seed, draws), tau);
}

double calibrate_tau(Scenario scenario, double gamma, double target, std::uint64_t seed, int draws) {
  if (target == 0.0) return std::numeric_limits<double>::infinity();
  if (!(target > 0.0 && target < 1.0)) throw DataError("target censoring must lie in [0, 1)");
  const auto d = censoring_thresholds(scenario, gamma, seed, draws);
  double lo = -50.0, hi = 50.0;  // rate(lo) near 1, rate(hi) near 0
  if (!(rate_from(d, lo) > target && rate_from(d, hi) < target)) {
    throw NumericalError("censoring calibration bracket failed");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate_from(d, mid);
    if (std::abs(r - target) < 0.005) return mid;
    if (r > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw NumericalError("censoring calibration did not reach the target");
}

HarnessConfig HarnessConfig::parse(const std::string& text) {
  HarnessConfig c;
  std::vector<Scenario> scenarios{Scenario::S1};
  std::vector<int> ns{100, 300};
  std::vector<double> gammas{0.0};
  std::vector<double> cens{0.2};
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw DataError("harness config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = split_list(line.substr(0, eq));
    const auto values = split_list(line.substr(eq + 1));
    if (key.size() != 1 || values.empty()) {
      throw DataError("harness config line " + std::to_string(lineno) + ": malformed entry");
    }
    const auto& k = key[0];
    if (k == "scenario") {
      scenarios.clear();
      for (const auto& v : values) scenarios.push_back(parse_scenario(v));
    } else if (k == "n") {
      ns.clear();
      for (const auto& v : values) ns.push_back(static_cast<int>(parse_number(k, v)));
    } else if (k == "gamma") {
      gammas.clear();
      for (const auto& v : values) gammas.push_back(parse_number(k, v));
    } else if (k == "censoring") {
      cens.clear();
      for (const auto& v : values) cens.push_back(parse_number(k, v));
    } else if (k == "reps") {
      c.reps = static_cast<int>(parse_number(k, values[0]));
    } else if (k == "K") {
      c.K = static_cast<int>(parse_number(k, values[0]));
    } else if (k == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_number(k, values[0]));
    } else if (k == "alpha") {
      c.alpha = parse_number(k, values[0]);
    } else if (k == "grid_cap") {
      c.grid_cap = static_cast<int>(parse_number(k, values[0]));
    } else if (k == "scheme") {
      c.scheme = parse_scheme(values[0]);
    } else if (k == "hazard_term") {
      c.hazard_term = parse_hazard_term(values[0]);
    } else if (k == "sd_quantile") {
      c.sd_quantile = parse_number(k, values[0]);
    } else if (k == "estimators") {
      c.estimators.clear();
      for (const auto& v : values) c.estimators.push_back(parse_estimator(v));
    } else if (k == "tests") {
      c.omnibus = c.link = c.form = false;
      for (const auto& v : values) {
        if (v == "omni") {
          c.omnibus = true;
        } else if (v == "link") {
          c.link = true;
        } else if (v == "form") {
          c.form = true;
        } else {
          throw DataError("harness config: unknown test '" + v + "'");
        }
      }
    } else {
      throw DataError("harness config: unknown key '" + k + "'");
    }
  }
  for (auto s : scenarios)
    for (int n : ns)
      for (double cr : cens)
        for (double g : gammas) c.cells.push_back({s, n, g, cr});
  if (c.reps < 1 || c.K < 1) throw DataError("harness config: reps and K must be positive");
  return c;
}

HarnessConfig HarnessConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

struct TaskOutcome {
  std::vector<ReplicateRecord> records;
  std::vector<Estimator> failed;
};

std::vector<std::string> harness_tests(const HarnessConfig& c, const SurvivalDataset& data) {
  std::vector<std::string> tests;
  if (c.omnibus) tests.push_back("omni");
  if (c.link) tests.push_back("link");
  if (c.form) {
    for (const auto& name : data.names()) tests.push_back("form:" + name);
  }
  return tests;
}

}  // namespace

HarnessResult run_harness(const HarnessConfig& config, const std::function<void(int, int)>& progress) {
  if (config.cells.empty()) throw DataError("harness has no cells");
  const int cells = static_cast<int>(config.cells.size());
  std::vector<double> taus(cells);
  for (int c = 0; c < cells; ++c) {
    const auto& cell = config.cells[c];
    taus[c] = calibrate_tau(cell.scenario, cell.gamma, cell.censoring);
  }

  const int total = cells * config.reps;
  std::vector<TaskOutcome> outcomes(total);
  std::mutex mu;
  int done = 0;
  parallel_for(total, [&](int task) {
    const int c = task / config.reps;
    const int r = task % config.reps;
    const auto& cell = config.cells[c];
    ScenarioConfig sc{cell.scenario, cell.n, cell.gamma, cell.censoring, taus[c],
                      splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(c) + 1)), r};
    const auto data = generate(sc);
    auto& out = outcomes[task];
    for (auto est : config.estimators) {
      try {
        const auto model = fit_checked(data, est);
        const std::uint64_t path_seed = splitmix64(
            sc.seed ^ splitmix64(kPathDomain + static_cast<std::uint64_t>(r) * 8 +
                                 static_cast<std::uint64_t>(est)));
        EnsembleOptions eo;
        eo.scheme = config.scheme;
        eo.hazard_term = config.hazard_term;
        const PathEnsemble ensemble(data, model, config.K, path_seed, eo);
        auto bo = BundleOptions::keep(0);
        bo.sd_quantile = config.sd_quantile;
        for (const auto& t : harness_tests(config, data)) {
          const auto grid = build_grid(ensemble, TestSpec::parse(t), config.grid_cap);
          const auto bundle = generate_bundle(ensemble, grid, bo);
          for (bool std_flag : {true, false}) {
            const auto rep = make_report(ensemble, bundle, std_flag, 0);
            out.records.push_back({c, r, t, est, std_flag, rep.observed_sup, rep.p_value});
          }
        }
      } catch (const std::runtime_error&) {
        out.failed.push_back(est);
      }
    }
    if (progress) {
      std::lock_guard lock(mu);
      progress(++done, total);
    }
  });

  HarnessResult res;
  res.reps = config.reps;
  res.K = config.K;
  std::map<std::tuple<int, std::string, int, bool>, HarnessRow> rows;
  for (int c = 0; c < cells; ++c) {
    const auto& cell = config.cells[c];
    ScenarioConfig probe{cell.scenario, std::max(cell.n, 4), 0.0, 0.0};
    const auto names = generate(probe).names();
    std::vector<std::string> tests;
    if (config.omnibus) tests.push_back("omni");
    if (config.link) tests.push_back("link");
    if (config.form) for (const auto& nm : names) tests.push_back("form:" + nm);
    for (auto est : config.estimators)
      for (const auto& t : tests)
        for (bool s : {true, false}) {
          HarnessRow row;
          row.cell_index = c;
          row.cell = cell;
          row.tau = taus[c];
          row.test = t;
          row.estimator = est;
          row.standardized = s;
          rows[{c, t, static_cast<int>(est), s}] = row;
        }
  }
  for (int task = 0; task < total; ++task) {
    const int c = task / config.reps;
    for (const auto& rec : outcomes[task].records) {
      auto& row = rows.at({rec.cell, rec.test, static_cast<int>(rec.estimator), rec.standardized});
      row.completed += 1;
      if (rec.p_value <= config.alpha) row.rejections += 1;
      res.records.push_back(rec);
    }
    for (auto est : outcomes[task].failed) {
      for (auto& [key, row] : rows) {
        if (std::get<0>(key) == c && std::get<2>(key) == static_cast<int>(est)) row.failures += 1;
      }
    }
  }
  for (int c = 0; c < cells; ++c) {
    for (auto& [key, row] : rows) {
      if (std::get<0>(key) != c) continue;
      if (row.completed > 0) {
        row.rate = static_cast<double>(row.rejections) / row.completed;
        row.se = std::sqrt(row.rate * (1.0 - row.rate) / row.completed);
      }
      res.rows.push_back(row);
    }
  }
  return res;
}

const HarnessRow& HarnessResult::row(int cell, const std::string& test, Estimator estimator,
                                     bool standardized) const {
  for (const auto& r : rows) {
    if (r.cell_index == cell && r.test == test && r.estimator == estimator &&
        r.standardized == standardized) {
      return r;
    }
  }
  throw DataError("no harness row for " + test);
}

nlohmann::json HarnessResult::summary_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"scenario", to_string(r.cell.scenario)},
                         {"n", r.cell.n},
                         {"gamma", r.cell.gamma},
                         {"censoring", r.cell.censoring},
                         {"tau", std::isfinite(r.tau) ? nlohmann::json(r.tau) : nlohmann::json("inf")},
                         {"test", r.test},
                         {"estimator", to_string(r.estimator)},
                         {"standardized", r.standardized},
                         {"rejections", r.rejections},
                         {"completed", r.completed},
                         {"failures", r.failures},
                         {"rate", r.rate},
                         {"mc_se", r.se}});
  }
  return {{"reps", reps}, {"K", K}, {"rows", rows_json}};
}

void HarnessResult::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "scenario,n,gamma,censoring,tau,test,estimator,standardized,rejections,completed,"
         "failures,rate,mc_se\n";
  for (const auto& r : rows) {
    out << to_string(r.cell.scenario) << ',' << r.cell.n << ',' << r.cell.gamma << ','
        << r.cell.censoring << ',' << r.tau << ',' << r.test << ',' << to_string(r.estimator)
        << ',' << (r.standardized ? "std" : "unstd") << ',' << r.rejections << ',' << r.completed
        << ',' << r.failures << ',' << r.rate << ',' << r.se << '\n';
  }
}

}  // namespace aftgof
