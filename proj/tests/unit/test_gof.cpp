#include "aftgof/error.hpp"
#include "aftgof/gof.hpp"
#include "aftgof/simulate.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace aftgof;

namespace {

SurvivalDataset scenario(Scenario s, int n, std::uint64_t seed, double gamma = 0.0) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.n = n;
  cfg.gamma = gamma;
  cfg.seed = seed;
  cfg.tau = calibrate_tau(s, gamma, 0.2);
  return generate(cfg);
}

GofOptions small(int K = 40) {
  GofOptions o;
  o.K = K;
  o.seed = 3;
  o.plot_paths = 5;
  return o;
}

}  // namespace

TEST_CASE("p-value arithmetic") {
  std::vector<double> sups(500);
  for (int k = 0; k < 500; ++k) sups[k] = k < 50 ? 2.0 : 0.5;
  int l0 = 0;
  CHECK(empirical_p_value(1.0, sups, &l0) == 0.1);
  CHECK(l0 == 50);
  for (int k = 0; k < 500; ++k) sups[k] = k < 325 ? 2.0 : 0.5;
  CHECK(empirical_p_value(1.0, sups) == 0.65);
  CHECK(empirical_p_value(2.0, sups) == 0.65);
  CHECK_THROWS(empirical_p_value(1.0, {}));

  std::mt19937_64 rng(1);
  auto shuffled = sups;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(empirical_p_value(1.0, shuffled) == empirical_p_value(1.0, sups));
}

TEST_CASE("test spec parsing") {
  CHECK(TestSpec::parse("omni").kind == TestKind::omnibus);
  CHECK(TestSpec::parse("link").kind == TestKind::link);
  const auto f = TestSpec::parse("form:age");
  CHECK(f.kind == TestKind::form);
  CHECK(f.covariate == "age");
  CHECK(f.label() == "form:age");
  CHECK_THROWS_AS(TestSpec::parse("bogus"), DataError);
}

TEST_CASE("link and form coincide for one covariate") {
  const auto d = scenario(Scenario::S1, 60, 5, 0.3);
  const auto l = run_test(d, Estimator::mis, TestSpec::parse("link"), small());
  const auto f = run_test(d, Estimator::mis, TestSpec::parse("form:z"), small());
  CHECK(l.observed_sup == f.observed_sup);
  CHECK(l.p_value == f.p_value);
  CHECK(l.path_sups == f.path_sups);
  CHECK(l.p_value == static_cast<double>(l.exceedances) / l.K_effective);
}

TEST_CASE("statistics are invariant to the time unit and subject order") {
  const auto d = scenario(Scenario::S2, 60, 8, 0.5);
  for (const char* t : {"omni", "link", "form:z2"}) {
    const auto a = run_test(d, Estimator::mis, TestSpec::parse(t), small());
    const auto b = run_test(d.rescaled_time(7.5), Estimator::mis, TestSpec::parse(t), small());
    CHECK(a.observed_sup == doctest::Approx(b.observed_sup).epsilon(1e-9));
    CHECK(a.p_value == b.p_value);
  }
  std::vector<int> perm(d.n());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  // Multipliers follow subject order, so only the observed process is comparable.
  auto opt = small();
  opt.standardized = false;
  const auto a = run_test(d, Estimator::mis, TestSpec::parse("link"), opt);
  const auto b = run_test(d.permuted(perm), Estimator::mis, TestSpec::parse("link"), opt);
  CHECK(a.observed_sup == doctest::Approx(b.observed_sup).epsilon(1e-9));
}

TEST_CASE("all forms returns one report per covariate") {
  const auto d = scenario(Scenario::S2, 60, 2);
  const auto reps = run_all_forms(d, Estimator::mns, small(20));
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].test == "form:z1");
  CHECK(reps[1].test == "form:z2");
  for (const auto& r : reps) CHECK(r.K_effective <= r.K);
}

TEST_CASE("report payloads") {
  const auto d = scenario(Scenario::S1, 50, 4);
  const auto r = run_test(d, Estimator::mls, TestSpec::parse("omni"), small(10));
  CHECK(r.plot.paths.size() == 5);
  CHECK(r.plot.observed.size() == r.plot.paths[0].size());
  const auto j = r.to_json();
  CHECK(j["K"] == 10);
  CHECK(j["estimator"] == "mls");
  const auto dir = std::filesystem::temp_directory_path();
  write_plot_csv(r, dir / "aftgof_plot.csv");
  write_plot_svg(r, dir / "aftgof_plot.svg");
  std::ifstream in(dir / "aftgof_plot.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("path_id,", 0) == 0);
  CHECK(std::filesystem::file_size(dir / "aftgof_plot.svg") > 100);
}

TEST_CASE("unknown form covariate is an input error") {
  const auto d = scenario(Scenario::S1, 40, 1);
  CHECK_THROWS_AS(run_test(d, Estimator::mis, TestSpec::parse("form:nope"), small(5)), DataError);
}
