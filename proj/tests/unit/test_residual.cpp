#include "aftgof/residual.hpp"

#include "../common/fixtures.hpp"
#include "../common/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace aftgof;

TEST_CASE("nelson-aalen on a hand example") {
  const auto d = fixtures::from_log({0.0, std::log(2.0), std::log(3.0)}, {1, 1, 1}, {0, 0, 0});
  const ResidualFrame f(d, Eigen::VectorXd::Zero(1));
  REQUIRE(f.level_count() == 3);
  CHECK(f.na_increments()[0] == doctest::Approx(1.0 / 3.0));
  CHECK(f.na_increments()[1] == doctest::Approx(0.5));
  CHECK(f.na_increments()[2] == doctest::Approx(1.0));
  CHECK(f.cumulative_hazard_at(f.level_value()[2]) == doctest::Approx(11.0 / 6.0));
  CHECK(f.cumulative_hazard_at(0.5) == 0.0);
  CHECK(f.cumulative_hazard_at(std::numeric_limits<double>::infinity()) == doctest::Approx(11.0 / 6.0));
}

TEST_CASE("kaplan-meier on hand examples") {
  const auto d = fixtures::from_log({0.0, std::log(2.0), std::log(3.0)}, {1, 0, 1}, {0, 0, 0});
  const ResidualFrame f(d, Eigen::VectorXd::Zero(1));
  const auto F = km_residual_cdf(f);
  CHECK(F(1.0) == doctest::Approx(1.0 / 3.0));
  CHECK(F(2.5) == doctest::Approx(1.0 / 3.0));
  CHECK(F(f.level_value()[2]) == doctest::Approx(1.0));
  CHECK(F(3.01) == doctest::Approx(1.0));
  CHECK(F(0.9) == 0.0);

  const auto last = fixtures::from_log({0.1, 0.2, 0.3, 0.4}, {0, 0, 0, 1}, {0, 0, 0, 0});
  const ResidualFrame fl(last, Eigen::VectorXd::Zero(1));
  const auto jumps = km_level_jumps(fl);
  CHECK(jumps[3] == doctest::Approx(1.0));
  CHECK(jumps[0] + jumps[1] + jumps[2] == 0.0);
}

TEST_CASE("frame quantities match step-function oracles") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 30; ++rep) {
    const auto d = oracle::random_small(rng, 3 + rep % 6, 1 + rep % 2, rep % 3 != 0);
    const Eigen::VectorXd b = rep % 3 == 0 ? Eigen::VectorXd(Eigen::VectorXd::Random(d.p()))
                                           : Eigen::VectorXd(Eigen::VectorXd::Zero(d.p()));
    const ResidualFrame f(d, b);
    const auto e = oracle::residuals(d, b);
    std::vector<double> w(d.n());
    for (auto& x : w) x = 0.5 + std::exponential_distribution<double>(1.0)(rng);
    const auto F = km_residual_cdf(f);
    const auto Fw = km_residual_cdf(f, w);
    double msum = 0.0;
    for (int i = 0; i < d.n(); ++i) {
      const double r = std::exp(e[i]);
      CHECK(std::abs(f.cumulative_hazard_at_log(e[i]) - oracle::nelson_aalen(e, d.status(), r)) < 1e-10);
      CHECK(std::abs(f.cumulative_hazard_at(r) - oracle::nelson_aalen(e, d.status(), r)) < 1e-10);
      CHECK(std::abs(F(r) - oracle::km_cdf(e, d.status(), r)) < 1e-10);
      CHECK(std::abs(Fw(r) - oracle::km_cdf(e, d.status(), r, w)) < 1e-10);
      const double m = d.status()[i] - oracle::nelson_aalen(e, d.status(), r);
      CHECK(std::abs(f.martingale_residuals()[i] - m) < 1e-10);
      msum += f.martingale_residuals()[i];
    }
    CHECK(std::abs(msum) < 1e-10);
    for (double t : f.level_value()) {
      double s = 0.0;
      for (int i = 0; i < d.n(); ++i) s += f.martingale_residual(i, t);
      CHECK(std::abs(s) < 1e-10);
    }
  }
}

TEST_CASE("log-scale and exp-scale ranking agree") {
  std::mt19937_64 rng(4);
  const auto d = oracle::random_small(rng, 25, 2, false);
  const Eigen::VectorXd b = Eigen::VectorXd::Random(2);
  const ResidualFrame f(d, b);
  for (int k = 0; k + 1 < f.level_count(); ++k) {
    CHECK(f.level_log_value()[k] < f.level_log_value()[k + 1]);
    CHECK(f.level_value()[k] < f.level_value()[k + 1]);
  }
  for (int i = 0; i < d.n(); ++i) {
    int y = 0;
    for (int j = 0; j < d.n(); ++j) y += f.residuals()[j] >= f.residuals()[i];
    CHECK(f.level_at_risk()[f.level_of()[i]] == y);
  }
}

TEST_CASE("baseline densities") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const int n = 400;
  std::vector<double> t(n);
  std::vector<int> s(n, 1);
  Eigen::MatrixXd z(n, 1);
  for (int i = 0; i < n; ++i) {
    t[i] = std::exp(nd(rng));
    z(i, 0) = nd(rng);
  }
  const SurvivalDataset d(t, s, z);
  const ResidualFrame f(d, Eigen::VectorXd::Zero(1));
  const auto dens = estimate_baseline_densities(f);
  for (double x : {0.2, 0.7, 1.0, 2.5, 6.0}) CHECK(dens.f0(x) == doctest::Approx(dens.g0(x)).epsilon(1e-12));

  // Integral over the exp scale by substitution u = log t.
  double integral = 0.0;
  const double h = 1e-3;
  for (double u = -12.0; u < 12.0; u += h) integral += dens.f0(std::exp(u)) * std::exp(u) * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  // True density of exp(eps), eps ~ N(0, 1): lognormal.
  for (double x : {0.5, 1.0, 2.0}) {
    const double truth = std::exp(-0.5 * std::log(x) * std::log(x)) / (x * std::sqrt(2 * M_PI));
    CHECK(std::abs(dens.g0(x) - truth) < 0.1);
  }
  CHECK(dens.f0(0.0) == 0.0);
}
