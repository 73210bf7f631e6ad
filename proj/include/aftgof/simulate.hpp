#pragma once

#include "aftgof/data.hpp"
#include "aftgof/estimate.hpp"
#include "aftgof/perturb.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace aftgof {

/// S1: log T = 4 - Z - gamma Z^2 + eps, Z ~ N(2, 1).
/// S2: log T = 4 - Z1 - Z2 - gamma Z2^2 + eps, Z1 ~ Bernoulli(0.5), Z2 ~ N(2, 1).
/// eps ~ N(0, 1); log C ~ N(tau, 1).
enum class Scenario { S1, S2 };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  int n = 100;
  double gamma = 0.0;
  double target_censoring = 0.2;
  /// +inf means no censoring.
  double tau = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  int replicate = 0;
};

/// Deterministic in (seed, replicate).
SurvivalDataset generate(const ScenarioConfig& config);

/// Fraction censored at `tau` over `draws` simulated subjects.
double censoring_rate(Scenario scenario, double gamma, double tau, std::uint64_t seed = 7,
                      int draws = 100000);

/// Bisection on tau with common random numbers until the censoring rate is
/// within 0.005 of the target. Target 0 returns +inf.
double calibrate_tau(Scenario scenario, double gamma, double target, std::uint64_t seed = 7,
                     int draws = 100000);

struct HarnessCell {
  Scenario scenario = Scenario::S1;
  int n = 100;
  double gamma = 0.0;
  double censoring = 0.2;
};

struct HarnessConfig {
  std::vector<HarnessCell> cells;
  int reps = 200;
  int K = 200;
  std::uint64_t seed = 1;
  std::vector<Estimator> estimators{Estimator::mns, Estimator::mis};
  bool omnibus = true;
  bool link = true;
  bool form = true;
  double alpha = 0.05;
  int grid_cap = 200;
  std::optional<PerturbationScheme> scheme;
  HazardTerm hazard_term = HazardTerm::linearized;
  std::optional<double> sd_quantile;

  /// Key-value text: scenario, n, gamma, censoring (comma lists form a grid),
  /// reps, K, seed, estimators, tests, alpha, grid_cap, scheme, hazard_term,
  /// sd_quantile.
  static HarnessConfig parse(const std::string& text);
  static HarnessConfig load(const std::filesystem::path& path);
};

/// One test outcome on one replicate.
struct ReplicateRecord {
  int cell = 0;
  int replicate = 0;
  std::string test;
  Estimator estimator = Estimator::mis;
  bool standardized = true;
  double observed_sup = 0.0;
  double p_value = 1.0;
};

struct HarnessRow {
  int cell_index = 0;
  HarnessCell cell;
  double tau = 0.0;
  std::string test;
  Estimator estimator = Estimator::mis;
  bool standardized = true;
  int rejections = 0;
  int completed = 0;
  int failures = 0;
  double rate = 0.0;
  double se = 0.0;
};

struct HarnessResult {
  std::vector<HarnessRow> rows;
  std::vector<ReplicateRecord> records;
  int reps = 0;
  int K = 0;

  [[nodiscard]] nlohmann::json summary_json() const;
  void write_csv(const std::filesystem::path& path) const;
  /// Row lookup; throws DataError when absent.
  [[nodiscard]] const HarnessRow& row(int cell, const std::string& test, Estimator estimator,
                                      bool standardized) const;
};

/// Runs every cell; replicates run in parallel and each depends only on
/// (seed, cell index, replicate index). `progress`, when set, is called after
/// each finished replicate with (done, total).
HarnessResult run_harness(const HarnessConfig& config,
                          const std::function<void(int, int)>& progress = {});

}  // namespace aftgof
