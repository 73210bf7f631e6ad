#include "aftgof/residual.hpp"

#include "aftgof/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace aftgof {

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(x.begin(), x.end(), t);
  if (it == x.begin()) return 0.0;
  return y[static_cast<std::size_t>(it - x.begin()) - 1];
}

ResidualFrame::ResidualFrame(const SurvivalDataset& data, const Eigen::VectorXd& beta)
    : beta_(beta), status_(data.status()) {
  const int n = data.n();
  if (beta.size() != data.p()) throw DataError("beta has wrong dimension");
  const Eigen::VectorXd zb = data.covariates() * beta;
  log_r_.resize(n);
  r_.resize(n);
  for (int i = 0; i < n; ++i) {
    log_r_[i] = std::log(data.time()[i]) + zb(i);
    r_[i] = std::exp(log_r_[i]);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](int a, int b) { return log_r_[a] < log_r_[b]; });

  ordered_status_.resize(n);
  level_of_.resize(n);
  for (int k = 0; k < n; ++k) {
    const int i = order_[k];
    ordered_status_[k] = status_[i];
    if (k == 0 || log_r_[i] != level_log_.back()) {
      level_begin_.push_back(k);
      level_log_.push_back(log_r_[i]);
      level_value_.push_back(r_[i]);
      level_events_.push_back(0);
    }
    level_of_[i] = static_cast<int>(level_log_.size()) - 1;
    level_events_.back() += status_[i];
  }
  level_begin_.push_back(n);

  const int levels = level_count();
  level_at_risk_.resize(levels);
  na_increment_.resize(levels);
  cum_hazard_.resize(levels);
  double cum = 0.0;
  for (int k = 0; k < levels; ++k) {
    level_at_risk_[k] = n - level_begin_[k];
    na_increment_[k] = level_events_[k] > 0
                           ? static_cast<double>(level_events_[k]) / level_at_risk_[k]
                           : 0.0;
    cum += na_increment_[k];
    cum_hazard_[k] = cum;
    if (level_events_[k] > 0) event_levels_.push_back(k);
  }

  mhat_.resize(n);
  for (int i = 0; i < n; ++i) mhat_[i] = status_[i] - cum_hazard_[level_of_[i]];
}

double ResidualFrame::cumulative_hazard_at_log(double log_t) const {
  auto it = std::upper_bound(level_log_.begin(), level_log_.end(), log_t);
  if (it == level_log_.begin()) return 0.0;
  return cum_hazard_[static_cast<std::size_t>(it - level_log_.begin()) - 1];
}

double ResidualFrame::cumulative_hazard_at(double t) const {
  auto it = std::upper_bound(level_value_.begin(), level_value_.end(), t);
  if (it == level_value_.begin()) return 0.0;
  return cum_hazard_[static_cast<std::size_t>(it - level_value_.begin()) - 1];
}

double ResidualFrame::martingale_residual(int subject, double t) const {
  const double ri = r_[subject];
  const double counted = (status_[subject] == 1 && ri <= t) ? 1.0 : 0.0;
  const double compensator =
      t >= ri ? cum_hazard_[level_of_[subject]] : cumulative_hazard_at(t);
  return counted - compensator;
}

std::vector<double> km_level_jumps(const ResidualFrame& frame, std::span<const double> weights) {
  const int n = frame.n();
  if (!weights.empty() && static_cast<int>(weights.size()) != n) {
    throw DataError("weight vector has wrong length");
  }
  const auto& order = frame.order();
  const auto& begin = frame.level_begin();
  const int levels = frame.level_count();
  auto w = [&](int i) { return weights.empty() ? 1.0 : weights[i]; };

  std::vector<double> events(levels, 0.0);
  std::vector<double> at_risk(levels, 0.0);
  double tail = 0.0;
  for (int k = levels - 1; k >= 0; --k) {
    for (int pos = begin[k]; pos < begin[k + 1]; ++pos) {
      const int i = order[pos];
      tail += w(i);
      if (frame.status()[i] == 1) events[k] += w(i);
    }
    at_risk[k] = tail;
  }
  std::vector<double> jumps(levels, 0.0);
  double surv = 1.0;
  for (int k = 0; k < levels; ++k) {
    if (events[k] <= 0.0) continue;
    const double next = surv * (1.0 - events[k] / at_risk[k]);
    jumps[k] = surv - next;
    surv = next;
  }
  return jumps;
}

StepFunction km_residual_cdf(const ResidualFrame& frame, std::span<const double> weights) {
  const auto jumps = km_level_jumps(frame, weights);
  StepFunction out;
  double cdf = 0.0;
  for (int k = 0; k < frame.level_count(); ++k) {
    if (frame.level_events()[k] == 0) continue;
    cdf += jumps[k];
    out.x.push_back(frame.level_value()[k]);
    out.y.push_back(std::min(cdf, 1.0));
  }
  return out;
}

double KernelDensity::operator()(double t) const {
  if (log_scale) {
    if (!(t > 0.0)) return 0.0;
    t = std::log(t);
  }
  const double inv_h = 1.0 / bandwidth;
  const double norm = inv_h / std::sqrt(2.0 * std::numbers::pi);
  double sum = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double u = (t - points[k]) * inv_h;
    sum += weights[k] * std::exp(-0.5 * u * u);
  }
  return log_scale ? sum * norm / std::exp(t) : sum * norm;
}

namespace {

// Weighted quantile on sorted points; each point sits at the midpoint of its
// cumulative-weight interval and values are linearly interpolated between.
double weighted_quantile(const std::vector<std::pair<double, double>>& sorted, double total,
                         double q) {
  const double target = q * total;
  double cum = 0.0;
  double prev_pos = 0.0;
  double prev_x = sorted.front().first;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double pos = cum + 0.5 * sorted[k].second;
    if (pos >= target) {
      if (k == 0) return sorted[k].first;
      const double frac = (target - prev_pos) / (pos - prev_pos);
      return prev_x + frac * (sorted[k].first - prev_x);
    }
    cum += sorted[k].second;
    prev_pos = pos;
    prev_x = sorted[k].first;
  }
  return sorted.back().first;
}

}  // namespace

double silverman_bandwidth(std::span<const double> points, std::span<const double> weights) {
  const std::size_t m = points.size();
  if (m < 2 || weights.size() != m) throw DataError("bandwidth needs at least two weighted points");
  double sw = 0.0, sw2 = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    sw += weights[k];
    sw2 += weights[k] * weights[k];
    mean += weights[k] * points[k];
  }
  mean /= sw;
  double ss = 0.0;
  for (std::size_t k = 0; k < m; ++k) ss += weights[k] * (points[k] - mean) * (points[k] - mean);
  const double eff = sw * sw / sw2;
  const double sd = eff > 1.0 ? std::sqrt(ss / sw * eff / (eff - 1.0)) : 0.0;

  std::vector<std::pair<double, double>> sorted(m);
  for (std::size_t k = 0; k < m; ++k) sorted[k] = {points[k], weights[k]};
  std::sort(sorted.begin(), sorted.end());
  const double iqr = weighted_quantile(sorted, sw, 0.75) - weighted_quantile(sorted, sw, 0.25);

  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw NumericalError("degenerate residual distribution: zero spread");
  return 0.9 * spread * std::pow(eff, -0.2);
}

BaselineDensities estimate_baseline_densities(const ResidualFrame& frame) {
  const int n = frame.n();
  int events = 0;
  for (int s : frame.status()) events += s;
  if (events < 2) throw DataError("density estimation needs at least two events");

  BaselineDensities out;
  out.g0.points = frame.log_residuals();
  out.g0.log_scale = true;
  out.f0.log_scale = true;
  out.g0.weights.assign(n, 1.0 / n);
  out.g0.bandwidth = silverman_bandwidth(out.g0.points, out.g0.weights);

  // Each event subject carries an equal share of its level's KM jump.
  const auto jumps = km_level_jumps(frame);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (frame.status()[i] != 1) continue;
    const int k = frame.level_of()[i];
    const double w = jumps[k] / frame.level_events()[k];
    out.f0.points.push_back(frame.log_residuals()[i]);
    out.f0.weights.push_back(w);
    total += w;
  }
  for (auto& w : out.f0.weights) w /= total;
  out.f0.bandwidth = silverman_bandwidth(out.f0.points, out.f0.weights);
  return out;
}

}  // namespace aftgof
