#include "aftgof/process.hpp"

#include "../common/fixtures.hpp"
#include "../common/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace aftgof;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("indicator weights") {
  Eigen::Vector2d z(2.0, kInf);
  CHECK(indicator_weight(Eigen::Vector2d(1, 5), z) == 1);
  CHECK(indicator_weight(Eigen::Vector2d(3, 5), z) == 0);
  CHECK(indicator_weight(Eigen::Vector2d(3, 5), Eigen::Vector2d(kInf, kInf)) == 1);
}

TEST_CASE("observed process matches the oracle") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 25; ++rep) {
    const auto d = oracle::random_small(rng, 4 + rep % 5, 1 + rep % 2, rep % 2 == 1);
    const Eigen::VectorXd b = 0.5 * Eigen::VectorXd::Random(d.p());
    const ResidualFrame f(d, b);
    auto grid = std::make_shared<EvalGrid>(EvalGrid::omnibus(d, f, 0));
    grid->t_grid.push_back(kInf);
    grid->z_grid.push_back(Eigen::VectorXd::Constant(d.p(), kInf));
    const auto w = observed_process(d, f, grid);
    for (std::size_t a = 0; a < grid->t_grid.size(); ++a) {
      for (std::size_t c = 0; c < grid->z_grid.size(); ++c) {
        const double t = grid->t_grid[a];
        const double o = oracle::observed_w(d, b, std::isinf(t) ? 1e300 : t, grid->z_grid[c]);
        CHECK(std::abs(w.values(a, c) - o) < 1e-10);
      }
    }
    CHECK(w.values.col(grid->z_grid.size() - 1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("observed process is a step function in t") {
  std::mt19937_64 rng(8);
  const auto d = oracle::random_small(rng, 20, 2, false);
  const ResidualFrame f(d, Eigen::VectorXd::Zero(2));
  auto grid = std::make_shared<EvalGrid>();
  grid->z_grid = {Eigen::VectorXd(d.covariates().row(3).transpose())};
  for (int k = 0; k + 1 < f.level_count(); ++k) {
    const double lo = f.level_value()[k], hi = f.level_value()[k + 1];
    grid->t_grid = {lo, 0.5 * (lo + hi), std::nextafter(hi, 0.0)};
    const auto w = observed_process(d, f, grid);
    CHECK(w.values(0, 0) == w.values(1, 0));
    CHECK(w.values(1, 0) == w.values(2, 0));
  }
}

TEST_CASE("link equals form when p = 1") {
  std::mt19937_64 rng(12);
  const auto d = oracle::random_small(rng, 15, 1, true);
  const ResidualFrame f(d, Eigen::VectorXd::Constant(1, 0.3));
  const auto l = observed_process(d, f, std::make_shared<EvalGrid>(EvalGrid::link(d)));
  const auto fm = observed_process(d, f, std::make_shared<EvalGrid>(EvalGrid::form(d, 0)));
  CHECK(l.values == fm.values);
}

TEST_CASE("omnibus grid cap") {
  std::mt19937_64 rng(2);
  const auto d = oracle::random_small(rng, 60, 2, false);
  const ResidualFrame f(d, Eigen::VectorXd::Zero(2));
  CHECK(EvalGrid::omnibus(d, f, 0).z_grid.size() == 60);
  CHECK(EvalGrid::omnibus(d, f, 20).z_grid.size() <= 20);
  CHECK(EvalGrid::omnibus(d, f, 0).t_grid.size() == f.event_levels().size());
}

TEST_CASE("pi risk averages") {
  std::mt19937_64 rng(5);
  const auto d = oracle::random_small(rng, 12, 2, false);
  const ResidualFrame f(d, Eigen::VectorXd::Zero(2));
  const auto all = pi_risk_averages(d, f, Eigen::VectorXd::Constant(2, kInf));
  for (int k = 0; k < f.level_count(); ++k) {
    CHECK(all.s_pi[k] == f.level_at_risk()[k]);
    CHECK(all.e_pi[k] == 1.0);
  }
  const auto none = pi_risk_averages(d, f, Eigen::VectorXd::Constant(2, -1e9));
  for (int k = 0; k < f.level_count(); ++k) CHECK(none.s_pi[k] == 0.0);
  const Eigen::VectorXd z = d.covariates().row(4).transpose();
  int count = 0;
  for (int i = 0; i < d.n(); ++i) count += indicator_weight(d.covariates().row(i).transpose(), z);
  CHECK(pi_risk_averages(d, f, z).s_pi[0] == count);
}

TEST_CASE("pi density terms") {
  std::mt19937_64 rng(9);
  const auto d = oracle::random_small(rng, 40, 2, false);
  const ResidualFrame f(d, Eigen::VectorXd::Zero(2));
  const auto dens = estimate_baseline_densities(f);
  const auto none = pi_density_terms(d, dens, Eigen::VectorXd::Constant(2, -1e9));
  CHECK(none.f(1.0).norm() == 0.0);
  CHECK(none.g(1.0).norm() == 0.0);

  const auto zero = d.with_covariates(Eigen::MatrixXd::Zero(d.n(), 2));
  const auto zt = pi_density_terms(zero, dens, Eigen::VectorXd::Constant(2, kInf));
  CHECK(zt.f(1.0).norm() == 0.0);

  const auto t = pi_density_terms(d, dens, d.covariates().row(0).transpose());
  const Eigen::VectorXd r1 = t.f(0.5) / scaled_density(dens.f0, 0.5);
  const Eigen::VectorXd r2 = t.f(2.0) / scaled_density(dens.f0, 2.0);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-12);
}
