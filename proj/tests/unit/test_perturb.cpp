#include "aftgof/gof.hpp"
#include "aftgof/perturb.hpp"
#include "aftgof/simulate.hpp"

#include "../common/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace aftgof;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SurvivalDataset s1(int n, std::uint64_t seed, double gamma = 0.0) {
  ScenarioConfig cfg;
  cfg.n = n;
  cfg.gamma = gamma;
  cfg.seed = seed;
  cfg.tau = calibrate_tau(Scenario::S1, gamma, 0.2);
  return generate(cfg);
}

PerturbationWeights scaled(const PerturbationWeights& phi, double c) {
  PerturbationWeights out = phi;
  for (auto& x : out.phi) x = 1.0 + c * (x - 1.0);
  return out;
}

}  // namespace

TEST_CASE("unit multipliers give a zero path") {
  const auto d = s1(80, 3);
  for (auto est : {Estimator::mis, Estimator::mns, Estimator::mls}) {
    const auto anchor = fit(d, est);
    const ResidualFrame f(d, anchor.beta);
    const auto dens = estimate_baseline_densities(f);
    const auto grid = std::make_shared<EvalGrid>(EvalGrid::omnibus(d, f));
    for (auto h : {HazardTerm::linearized, HazardTerm::exact}) {
      const auto p = perturbed_path(d, anchor, f, dens, grid, PerturbationWeights::ones(d.n()),
                                    default_scheme(est), h);
      CHECK((p.fit.beta - anchor.beta).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(p.surface.values.cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("term 1 matches the oracle and is linear in the multipliers") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_small(rng, 4 + rep % 5, 1 + rep % 2, rep % 2 == 0);
    FittedModel anchor;
    anchor.beta = 0.3 * Eigen::VectorXd::Random(d.p());
    anchor.converged = true;
    const ResidualFrame f(d, anchor.beta);
    const auto dens = estimate_baseline_densities(f);
    const auto grid = EvalGrid::omnibus(d, f, 0);
    const auto phi = PerturbationWeights::draw(d.n(), 100 + rep, 0);
    const auto draw = build_draw(d, f, phi, anchor, PerturbationScheme::weighted_score);
    const auto draw2 = build_draw(d, f, scaled(phi, 2.0), anchor, PerturbationScheme::weighted_score);
    const auto t = path_terms(d, f, dens, draw, grid);
    const auto t2 = path_terms(d, f, dens, draw2, grid);
    for (std::size_t a = 0; a < grid.t_grid.size(); ++a) {
      for (std::size_t c = 0; c < grid.z_grid.size(); ++c) {
        const double o = oracle::term1(d, anchor.beta, draw.w, grid.t_grid[a], grid.z_grid[c]);
        CHECK(std::abs(t.term1(a, c) - o) < 1e-10);
        CHECK(std::abs(t2.term1(a, c) - 2.0 * t.term1(a, c)) < 1e-12);
      }
    }
    // beta* = beta-hat: no hazard gap and no deviation.
    if (!(dens.f0.bandwidth > 0.0 && dens.g0.bandwidth > 0.0)) continue;
    CHECK(t.term2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(path_terms(d, f, dens, draw, grid, HazardTerm::exact).term3.cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.term3.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("perturbed paths vanish at z = +inf, t = +inf") {
  const auto d = s1(100, 7, 0.3);
  const auto anchor = fit(d, Estimator::mis);
  const PathEnsemble ens(d, anchor, 20, 5, EnsembleOptions{});
  auto grid = std::make_shared<EvalGrid>();
  grid->t_grid = {kInf};
  grid->z_grid = {Eigen::VectorXd::Constant(1, kInf)};
  for (int k = 0; k < ens.requested(); ++k) {
    CHECK(std::abs(ens.surface(k, grid).values(0, 0)) < 1e-12);
  }
  CHECK(ens.observed(grid).values(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("ensembles are deterministic and thread independent") {
  const auto d = s1(60, 2);
  const auto anchor = fit(d, Estimator::mis);
  const PathEnsemble a(d, anchor, 8, 99, EnsembleOptions{});
  const PathEnsemble b(d, anchor, 8, 99, EnsembleOptions{});
  const auto grid = std::make_shared<EvalGrid>(EvalGrid::link(d));
  const auto ba = generate_bundle(a, grid);
  const auto bb = generate_bundle(b, grid);
  CHECK(ba.pointwise_sd == bb.pointwise_sd);
  CHECK(ba.sup_standardized == bb.sup_standardized);
  for (int k = 0; k < 8; ++k) CHECK(a.surface(k, grid).values == b.surface(k, grid).values);
}

TEST_CASE("sd floor on empty cells and the quantile clamp") {
  const auto d = s1(60, 4);
  const auto anchor = fit(d, Estimator::mis);
  const PathEnsemble ens(d, anchor, 10, 1, EnsembleOptions{});
  auto grid = std::make_shared<EvalGrid>(EvalGrid::link(d));
  grid->z_grid.insert(grid->z_grid.begin(), Eigen::VectorXd::Constant(1, -1e9));
  BundleOptions off;
  off.sd_quantile = 0.0;
  const auto b = generate_bundle(ens, grid, off);
  CHECK(b.pointwise_sd(0, 0) == off.sd_floor);

  BundleOptions on;
  on.sd_quantile = 0.5;
  const auto c = generate_bundle(ens, grid, on);
  const auto& sd = b.pointwise_sd;
  const double med = sample_quantile({sd.data(), sd.data() + sd.size()}, 0.5);
  CHECK(c.pointwise_sd.minCoeff() == doctest::Approx(med));
  CHECK(c.sup_unstandardized == b.sup_unstandardized);

  CHECK(sample_quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(sample_quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(default_sd_quantile(TestKind::omnibus) == 0.1);
  CHECK(default_sd_quantile(TestKind::link) == 0.0);
}

TEST_CASE("constant sd makes the two statistics agree") {
  const auto d = s1(80, 6, 0.3);
  const auto anchor = fit(d, Estimator::mis);
  const PathEnsemble ens(d, anchor, 30, 2, EnsembleOptions{});
  const auto grid = std::make_shared<EvalGrid>(EvalGrid::omnibus(d, ens.frame()));
  BundleOptions o;
  o.sd_override = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(grid->t_grid.size()),
                                            static_cast<Eigen::Index>(grid->z_grid.size()), 0.37);
  const auto b = generate_bundle(ens, grid, o);
  const auto s = make_report(ens, b, true);
  const auto u = make_report(ens, b, false);
  CHECK(s.p_value == u.p_value);
  CHECK(s.observed_sup == doctest::Approx(u.observed_sup / 0.37));
}
