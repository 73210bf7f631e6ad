#pragma once

// Brute-force reference implementations. Each follows the defining double sum
// or product directly, with no sorting, prefix sums or shared code paths from
// the library.

#include "aftgof/data.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

namespace oracle {

inline std::vector<double> residuals(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b) {
  const Eigen::VectorXd zb = d.covariates() * b;
  std::vector<double> e(d.n());
  for (int i = 0; i < d.n(); ++i) e[i] = std::log(d.time()[i]) + zb(i);
  return e;
}

inline Eigen::VectorXd gehan_score(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b,
                                   const std::vector<double>& w = {}) {
  const auto e = residuals(d, b);
  const int n = d.n();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d.p());
  for (int i = 0; i < n; ++i) {
    if (d.status()[i] == 0) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    for (int j = 0; j < n; ++j) {
      if (e[j] >= e[i]) s += wi * (d.covariates().row(i) - d.covariates().row(j)).transpose();
    }
  }
  return s / n;
}

inline double gehan_loss(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b,
                         const std::vector<double>& w = {}) {
  const auto e = residuals(d, b);
  const int n = d.n();
  double g = 0.0;
  for (int i = 0; i < n; ++i) {
    if (d.status()[i] == 0) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    for (int j = 0; j < n; ++j) g += wi * std::max(e[j] - e[i], 0.0);
  }
  return g / n;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline Eigen::VectorXd smoothed_score(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b,
                                      const std::vector<double>& w = {}) {
  const auto e = residuals(d, b);
  const int n = d.n();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d.p());
  for (int i = 0; i < n; ++i) {
    if (d.status()[i] == 0) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd dz = (d.covariates().row(i) - d.covariates().row(j)).transpose();
      const double r = std::sqrt(dz.squaredNorm() / n);
      const double k = r > 0.0 ? normal_cdf((e[j] - e[i]) / r) : (e[j] >= e[i] ? 1.0 : 0.0);
      s += wi * dz * k;
    }
  }
  return s / n;
}

/// Distinct event residual values, ascending.
inline std::vector<double> event_values(const std::vector<double>& e, const std::vector<int>& status) {
  std::set<double> s;
  for (std::size_t i = 0; i < e.size(); ++i)
    if (status[i] == 1) s.insert(e[i]);
  return {s.begin(), s.end()};
}

/// Nelson-Aalen cumulative hazard at u (exp scale): sum over event values v
/// with exp(v) <= u of #events at v / #(e >= v).
inline double nelson_aalen(const std::vector<double>& e, const std::vector<int>& status, double u) {
  double h = 0.0;
  for (double v : event_values(e, status)) {
    if (std::exp(v) > u) break;
    int dv = 0, yv = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] >= v) ++yv;
      if (e[i] == v && status[i] == 1) ++dv;
    }
    h += static_cast<double>(dv) / yv;
  }
  return h;
}

/// Kaplan-Meier CDF at u (exp scale), optionally weighted.
inline double km_cdf(const std::vector<double>& e, const std::vector<int>& status, double u,
                     const std::vector<double>& w = {}) {
  double surv = 1.0;
  for (double v : event_values(e, status)) {
    if (std::exp(v) > u) break;
    double dv = 0.0, yv = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double wi = w.empty() ? 1.0 : w[i];
      if (e[i] >= v) yv += wi;
      if (e[i] == v && status[i] == 1) dv += wi;
    }
    surv *= 1.0 - dv / yv;
  }
  return 1.0 - surv;
}

/// n^-1/2 sum_i w_i int_0^t (pi_i(z) - E_pi(u)) dM_i(u), t on the exp scale.
inline double term1(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b,
                    const std::vector<double>& w, double t, const Eigen::VectorXd& z) {
  const auto e = residuals(d, b);
  const int n = d.n();
  std::vector<double> pi(n);
  for (int i = 0; i < n; ++i) {
    pi[i] = 1.0;
    for (int q = 0; q < d.p(); ++q)
      if (!(d.covariates()(i, q) <= z(q))) pi[i] = 0.0;
  }
  double total = 0.0;
  for (double v : event_values(e, d.status())) {
    if (!(std::exp(v) <= t)) break;
    double y = 0.0, dn = 0.0, spi = 0.0;
    for (int i = 0; i < n; ++i) {
      if (e[i] >= v) {
        y += 1.0;
        spi += pi[i];
      }
      if (e[i] == v && d.status()[i] == 1) dn += 1.0;
    }
    const double epi = spi / y;
    for (int i = 0; i < n; ++i) {
      const double dNi = (e[i] == v && d.status()[i] == 1) ? 1.0 : 0.0;
      const double Yi = e[i] >= v ? 1.0 : 0.0;
      total += w[i] * (pi[i] - epi) * (dNi - Yi * dn / y);
    }
  }
  return total / std::sqrt(static_cast<double>(n));
}

/// n^-1/2 sum_i pi_i(z) M_i(t) with M_i(t) = N_i(t) - Lambda(min(t, R_i)).
inline double observed_w(const aftgof::SurvivalDataset& d, const Eigen::VectorXd& b, double t,
                         const Eigen::VectorXd& z) {
  const auto e = residuals(d, b);
  const int n = d.n();
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    bool in = true;
    for (int q = 0; q < d.p(); ++q)
      if (!(d.covariates()(i, q) <= z(q))) in = false;
    if (!in) continue;
    const double ri = std::exp(e[i]);
    const double Ni = (d.status()[i] == 1 && ri <= t) ? 1.0 : 0.0;
    s += Ni - nelson_aalen(e, d.status(), std::min(t, ri));
  }
  return s / std::sqrt(static_cast<double>(n));
}

/// Random small dataset with at least two events; integer-rounded times so
/// that ties appear.
inline aftgof::SurvivalDataset random_small(std::mt19937_64& rng, int n, int p, bool ties) {
  std::normal_distribution<double> nd;
  std::bernoulli_distribution ev(0.7);
  for (;;) {
    std::vector<double> t(n);
    std::vector<int> s(n);
    Eigen::MatrixXd z(n, p);
    for (int i = 0; i < n; ++i) {
      t[i] = std::exp(nd(rng));
      if (ties) t[i] = std::round(t[i] * 4.0) / 4.0 + 0.25;
      s[i] = ev(rng) ? 1 : 0;
      for (int q = 0; q < p; ++q) z(i, q) = ties ? std::round(nd(rng) * 2.0) / 2.0 : nd(rng);
    }
    int events = 0;
    for (int x : s) events += x;
    if (events < 2) continue;
    try {
      return aftgof::SurvivalDataset(t, s, z);
    } catch (const std::exception&) {
    }
  }
}

}  // namespace oracle
