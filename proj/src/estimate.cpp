#include "aftgof/estimate.hpp"

#include "aftgof/error.hpp"
#include "aftgof/parallel.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace aftgof {

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::mns: return "mns";
    case Estimator::mis: return "mis";
    case Estimator::mls: return "mls";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "mns") return Estimator::mns;
  if (name == "mis") return Estimator::mis;
  if (name == "mls") return Estimator::mls;
  throw DataError("unknown estimator '" + name + "' (expected mns, mis or mls)");
}

std::string to_string(PerturbationScheme s) {
  return s == PerturbationScheme::martingale_target ? "martingale_target" : "weighted_score";
}

PerturbationScheme parse_scheme(const std::string& name) {
  if (name == "martingale_target") return PerturbationScheme::martingale_target;
  if (name == "weighted_score") return PerturbationScheme::weighted_score;
  throw DataError("unknown perturbation scheme '" + name + "'");
}

PerturbationScheme default_scheme(Estimator e) {
  return e == Estimator::mls ? PerturbationScheme::weighted_score
                             : PerturbationScheme::martingale_target;
}

PerturbationWeights PerturbationWeights::draw(int n, std::uint64_t seed, int path_index) {
  PerturbationWeights out;
  out.seed = seed;
  out.path_index = path_index;
  auto gen = keyed_stream(seed, 0x70686900ULL, static_cast<std::uint64_t>(path_index));
  std::exponential_distribution<double> exp1(1.0);
  out.phi.resize(n);
  for (auto& v : out.phi) {
    do v = exp1(gen);
    while (!(v > 0.0));
  }
  return out;
}

PerturbationWeights PerturbationWeights::ones(int n) {
  PerturbationWeights out;
  out.phi.assign(n, 1.0);
  return out;
}

namespace {

void check_weights(std::span<const double> w, int n) {
  if (!w.empty() && static_cast<int>(w.size()) != n) throw DataError("weight vector has wrong length");
}

inline double weight(std::span<const double> w, int i) { return w.empty() ? 1.0 : w[i]; }

std::vector<int> sorted_order(const Eigen::VectorXd& e) {
  std::vector<int> idx(e.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return e(a) < e(b); });
  return idx;
}

}  // namespace

Eigen::VectorXd log_residuals(const SurvivalDataset& data, const Eigen::VectorXd& beta) {
  if (beta.size() != data.p()) throw DataError("beta has wrong dimension");
  Eigen::VectorXd e = data.covariates() * beta;
  for (int i = 0; i < data.n(); ++i) e(i) += std::log(data.time()[i]);
  return e;
}

Eigen::VectorXd gehan_score(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                            std::span<const double> weights) {
  const int n = data.n();
  const int p = data.p();
  check_weights(weights, n);
  const Eigen::VectorXd e = log_residuals(data, beta);
  const auto idx = sorted_order(e);
  const auto& z = data.covariates();
  const auto& status = data.status();

  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd suffix = Eigen::VectorXd::Zero(p);
  int count = 0;
  int hi = n;
  while (hi > 0) {
    int lo = hi - 1;
    while (lo > 0 && e(idx[lo - 1]) == e(idx[hi - 1])) --lo;
    for (int k = lo; k < hi; ++k) suffix += z.row(idx[k]).transpose();
    count += hi - lo;
    for (int k = lo; k < hi; ++k) {
      const int i = idx[k];
      if (status[i] != 1) continue;
      out += weight(weights, i) * (count * z.row(i).transpose() - suffix);
    }
    hi = lo;
  }
  return out / n;
}

double gehan_loss(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                  std::span<const double> weights) {
  const int n = data.n();
  check_weights(weights, n);
  const Eigen::VectorXd e = log_residuals(data, beta);
  const auto idx = sorted_order(e);
  const auto& status = data.status();

  double total = 0.0;
  double suffix = 0.0;
  int count = 0;
  int hi = n;
  while (hi > 0) {
    int lo = hi - 1;
    while (lo > 0 && e(idx[lo - 1]) == e(idx[hi - 1])) --lo;
    for (int k = lo; k < hi; ++k) {
      const int i = idx[k];
      if (status[i] != 1) continue;
      total += weight(weights, i) * (suffix - count * e(i));
    }
    for (int k = lo; k < hi; ++k) suffix += e(idx[k]);
    count += hi - lo;
    hi = lo;
  }
  return std::max(total, 0.0) / n;
}

namespace {

// Phi is exactly 1.0 in double precision beyond this point; the opposite tail
// and the density are below 1e-16 there.
constexpr double kSaturation = 8.5;

template <int P>
void smoothed_kernel(int n, int p_runtime, const double* zt, const double* e, const int* status,
                     std::span<const double> weights, double radius_scale, double* score,
                     double* jac) {
  const int p = P > 0 ? P : p_runtime;
  const double inv_n = 1.0 / n;
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double pdf_norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> buf(2 * p + p * p);
  double* d = buf.data();
  double* acc = d + p;
  double* jacc = acc + p;
  for (int i = 0; i < n; ++i) {
    if (status[i] != 1) continue;
    std::fill(buf.begin() + p, buf.end(), 0.0);
    const double* zi = zt + static_cast<std::ptrdiff_t>(i) * p;
    const double ei = e[i];
    for (int j = 0; j < n; ++j) {
      const double* zj = zt + static_cast<std::ptrdiff_t>(j) * p;
      double r2 = 0.0;
      for (int q = 0; q < p; ++q) {
        d[q] = zi[q] - zj[q];
        r2 += d[q] * d[q];
      }
      if (r2 == 0.0) continue;
      const double r = radius_scale * std::sqrt(r2 * inv_n);
      const double x = (e[j] - ei) / r;
      if (x >= kSaturation) {
        if (score)
          for (int q = 0; q < p; ++q) acc[q] += d[q];
        continue;
      }
      if (x <= -kSaturation) continue;
      if (score) {
        const double phi = 0.5 * std::erfc(-x * inv_sqrt2);
        for (int q = 0; q < p; ++q) acc[q] += phi * d[q];
      }
      if (jac) {
        const double g = pdf_norm * std::exp(-0.5 * x * x) / r;
        for (int a = 0; a < p; ++a)
          for (int b = 0; b < p; ++b) jacc[a * p + b] -= g * d[a] * d[b];
      }
    }
    const double wi = weight(weights, i);
    if (score)
      for (int q = 0; q < p; ++q) score[q] += wi * acc[q];
    if (jac)
      for (int q = 0; q < p * p; ++q) jac[q] += wi * jacc[q];
  }
  if (score)
    for (int q = 0; q < p; ++q) score[q] *= inv_n;
  if (jac)
    for (int q = 0; q < p * p; ++q) jac[q] *= inv_n;
}

void smoothed_eval(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                   std::span<const double> weights, double radius_scale, Eigen::VectorXd* score,
                   Eigen::MatrixXd* jac) {
  const int n = data.n();
  const int p = data.p();
  check_weights(weights, n);
  const Eigen::VectorXd e = log_residuals(data, beta);
  const Eigen::MatrixXd zt = data.covariates().transpose();
  if (score) score->setZero(p);
  if (jac) jac->setZero(p, p);
  double* s = score ? score->data() : nullptr;
  double* jm = jac ? jac->data() : nullptr;  // symmetric, so storage order is irrelevant
  const int* st = data.status().data();
  switch (p) {
    case 1: smoothed_kernel<1>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
    case 2: smoothed_kernel<2>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
    case 3: smoothed_kernel<3>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
    case 4: smoothed_kernel<4>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
    case 5: smoothed_kernel<5>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
    default: smoothed_kernel<0>(n, p, zt.data(), e.data(), st, weights, radius_scale, s, jm); break;
  }
}

}  // namespace

Eigen::VectorXd smoothed_score(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                               std::span<const double> weights, double radius_scale) {
  Eigen::VectorXd s;
  smoothed_eval(data, beta, weights, radius_scale, &s, nullptr);
  return s;
}

Eigen::MatrixXd smoothed_jacobian(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                                  std::span<const double> weights, double radius_scale) {
  Eigen::MatrixXd j;
  smoothed_eval(data, beta, weights, radius_scale, nullptr, &j);
  return j;
}

Eigen::VectorXd conditional_expectation(const SurvivalDataset& data, const Eigen::VectorXd& beta,
                                        std::span<const double> weights) {
  const int n = data.n();
  check_weights(weights, n);
  const ResidualFrame frame(data, beta);
  auto mass = km_level_jumps(frame, weights);
  const int levels = frame.level_count();
  double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (total < 1.0) mass[levels - 1] += 1.0 - total;

  // tail_mass[k], tail_moment[k]: KM mass and first moment strictly above level k.
  std::vector<double> tail_mass(levels, 0.0);
  std::vector<double> tail_moment(levels, 0.0);
  const auto& u = frame.level_log_value();
  for (int k = levels - 2; k >= 0; --k) {
    tail_mass[k] = tail_mass[k + 1] + mass[k + 1];
    tail_moment[k] = tail_moment[k + 1] + mass[k + 1] * u[k + 1];
  }

  Eigen::VectorXd out(n);
  const auto& e = frame.log_residuals();
  for (int i = 0; i < n; ++i) {
    const double log_x = std::log(data.time()[i]);
    if (data.status()[i] == 1) {
      out(i) = log_x;
      continue;
    }
    const int k = frame.level_of()[i];
    const double imputed = tail_mass[k] > 0.0 ? tail_moment[k] / tail_mass[k] : e[i];
    out(i) = imputed - (e[i] - log_x);
  }
  return out;
}

Eigen::VectorXd least_squares_update(const SurvivalDataset& data, const Eigen::VectorXd& b,
                                     std::span<const double> weights) {
  const int n = data.n();
  const auto& z = data.covariates();
  const Eigen::VectorXd t = conditional_expectation(data, b, weights);
  const Eigen::RowVectorXd zbar = z.colwise().mean();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(data.p(), data.p());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(data.p());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd c = (z.row(i) - zbar).transpose();
    const double w = weight(weights, i);
    lhs.noalias() += w * c * z.row(i);
    rhs.noalias() -= w * t(i) * c;
  }
  return lhs.colPivHouseholderQr().solve(rhs);
}

Eigen::VectorXd martingale_score_target(const SurvivalDataset& data, const ResidualFrame& frame,
                                        std::span<const double> phi) {
  const int n = data.n();
  const int p = data.p();
  check_weights(phi, n);
  const auto& z = data.covariates();
  const auto& order = frame.order();
  const auto& begin = frame.level_begin();
  const int levels = frame.level_count();

  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);   // sum of Z over the risk set
  Eigen::VectorXd wz = Eigen::VectorXd::Zero(p);   // sum of w Z over the risk set
  double w_risk = 0.0;
  Eigen::VectorXd ev_wz(p);
  for (int k = levels - 1; k >= 0; --k) {
    ev_wz.setZero();
    double ev_w = 0.0;
    for (int pos = begin[k]; pos < begin[k + 1]; ++pos) {
      const int i = order[pos];
      const double w = phi.empty() ? 0.0 : phi[i] - 1.0;
      s1 += z.row(i).transpose();
      wz += w * z.row(i).transpose();
      w_risk += w;
      if (frame.status()[i] == 1) {
        ev_wz += w * z.row(i).transpose();
        ev_w += w;
      }
    }
    if (frame.level_events()[k] == 0) continue;
    const double s0 = frame.level_at_risk()[k];
    const double dl = frame.na_increments()[k];
    out += s0 * ev_wz - ev_w * s1 - dl * (s0 * wz - w_risk * s1);
  }
  return out / n;
}

nlohmann::json FittedModel::to_json() const {
  return {{"estimator", to_string(estimator)},
          {"beta", std::vector<double>(beta.data(), beta.data() + beta.size())},
          {"score_norm", score_norm},
          {"iterations", iterations},
          {"converged", converged}};
}

Eigen::VectorXd ols_initial_value(const SurvivalDataset& data) {
  const int n = data.n();
  const auto& z = data.covariates();
  const Eigen::RowVectorXd zbar = z.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - zbar;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = std::log(data.time()[i]);
  y.array() -= y.mean();
  return -zc.colPivHouseholderQr().solve(y);
}

void check_identifiable(const SurvivalDataset& data) {
  const auto& z = data.covariates();
  const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zc);
  qr.setThreshold(1e-10);
  if (qr.rank() < data.p()) {
    throw NonIdentifiableError("covariates are constant or collinear; beta is not identifiable");
  }
}

namespace {

// Newton on F(b) = smoothed_score(b; w) - target with step halving on |F|.
FittedModel solve_smoothed(const SurvivalDataset& data, std::span<const double> weights,
                           const Eigen::VectorXd& target, Eigen::VectorXd beta,
                           const FitOptions& opt) {
  FittedModel out;
  out.estimator = Estimator::mis;
  Eigen::VectorXd f;
  Eigen::MatrixXd jac;
  smoothed_eval(data, beta, weights, 1.0, &f, &jac);
  f -= target;
  double norm = f.norm();
  int it = 0;
  for (; it < opt.max_newton_iterations && norm >= opt.score_tolerance; ++it) {
    Eigen::VectorXd step;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    if (jac.allFinite() && qr.rank() == jac.cols()) {
      step = qr.solve(-f);
    } else {
      const Eigen::VectorXd g = jac.transpose() * f;
      const double denom = (jac * g).squaredNorm();
      if (!(denom > 0.0) || !std::isfinite(denom)) break;
      step = -(g.squaredNorm() / denom) * g;
    }
    bool accepted = false;
    double lambda = 1.0;
    for (int h = 0; h < 40; ++h, lambda *= 0.5) {
      const Eigen::VectorXd cand = beta + lambda * step;
      Eigen::VectorXd fc;
      Eigen::MatrixXd jc;
      smoothed_eval(data, cand, weights, 1.0, &fc, &jc);
      fc -= target;
      const double nc = fc.norm();
      if (std::isfinite(nc) && nc < norm) {
        beta = cand;
        f = fc;
        jac = jc;
        norm = nc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  out.beta = beta;
  out.score_norm = norm;
  out.iterations = it;
  out.converged = norm < opt.score_tolerance;
  return out;
}

struct LossContext {
  const SurvivalDataset* data;
  std::span<const double> weights;
  const Eigen::VectorXd* target;
  int evaluations = 0;
};

double loss_callback(const gsl_vector* x, void* params) {
  auto* ctx = static_cast<LossContext*>(params);
  const int p = ctx->data->p();
  Eigen::VectorXd b(p);
  for (int q = 0; q < p; ++q) b(q) = gsl_vector_get(x, q);
  ++ctx->evaluations;
  return gehan_loss(*ctx->data, b, ctx->weights) + ctx->target->dot(b);
}

// Nelder-Mead on G_w(b) + target'b, restarted from the best vertex until the
// objective stops improving.
FittedModel solve_gehan(const SurvivalDataset& data, std::span<const double> weights,
                        const Eigen::VectorXd& target, Eigen::VectorXd beta,
                        const FitOptions& opt) {
  gsl_set_error_handler_off();
  const int p = data.p();
  LossContext ctx{&data, weights, &target};
  gsl_multimin_function fn{&loss_callback, static_cast<std::size_t>(p), &ctx};
  gsl_vector* x = gsl_vector_alloc(p);
  gsl_vector* step = gsl_vector_alloc(p);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, p);

  for (int q = 0; q < p; ++q) gsl_vector_set(x, q, beta(q));
  double best = loss_callback(x, &ctx);
  double scale = 0.1;
  int total_iter = 0;
  bool converged = false;
  for (int restart = 0; restart < 8; ++restart) {
    for (int q = 0; q < p; ++q) {
      gsl_vector_set(x, q, beta(q));
      gsl_vector_set(step, q, scale * std::max(1.0, std::abs(beta(q))));
    }
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    int status = GSL_CONTINUE;
    for (int it = 0; it < 20000 && status == GSL_CONTINUE; ++it) {
      ++total_iter;
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.simplex_tolerance);
    }
    converged = status == GSL_SUCCESS;
    const double value = s->fval;
    const bool improved = value < best - 1e-13 * (1.0 + std::abs(best));
    if (value <= best) {
      for (int q = 0; q < p; ++q) beta(q) = gsl_vector_get(s->x, q);
      best = value;
    }
    if (!improved && restart > 0) break;
    scale = 1e-3;
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);

  FittedModel out;
  out.estimator = Estimator::mns;
  out.beta = beta;
  out.score_norm = (gehan_score(data, beta, weights) - target).norm();
  out.iterations = total_iter;
  out.converged = converged;
  return out;
}

FittedModel solve_least_squares(const SurvivalDataset& data, std::span<const double> weights,
                                Eigen::VectorXd beta, const FitOptions& opt) {
  FittedModel out;
  out.estimator = Estimator::mls;
  double step = std::numeric_limits<double>::infinity();
  int m = 0;
  bool cycled = false;
  std::vector<Eigen::VectorXd> recent{beta};
  while (m < opt.max_ls_iterations) {
    const Eigen::VectorXd next = least_squares_update(data, beta, weights);
    ++m;
    if (!next.allFinite()) break;
    step = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    if (step < opt.ls_tolerance) break;
    // The imputation is piecewise constant in b, so the map can settle on a
    // short cycle instead of a fixed point; take the cycle mean.
    for (std::size_t j = recent.size() - 1; j-- > 0;) {
      if ((recent[j] - next).lpNorm<Eigen::Infinity>() < 1e-12) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(next.size());
        for (std::size_t c = j; c < recent.size(); ++c) mean += recent[c];
        beta = mean / static_cast<double>(recent.size() - j);
        cycled = true;
        break;
      }
    }
    if (cycled) break;
    recent.push_back(next);
    if (recent.size() > 8) recent.erase(recent.begin());
  }
  out.beta = beta;
  out.score_norm = cycled ? 0.0 : step;
  out.iterations = m;
  out.converged = cycled || step < opt.ls_tolerance;
  return out;
}

}  // namespace

FittedModel fit(const SurvivalDataset& data, Estimator estimator,
                const std::optional<Eigen::VectorXd>& init, const FitOptions& options) {
  check_identifiable(data);
  Eigen::VectorXd start = init ? *init : ols_initial_value(data);
  if (start.size() != data.p()) throw DataError("initial value has wrong dimension");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(data.p());
  switch (estimator) {
    case Estimator::mis:
      return solve_smoothed(data, {}, zero, start, options);
    case Estimator::mns: {
      const auto mis = solve_smoothed(data, {}, zero, start, options);
      return solve_gehan(data, {}, zero, mis.beta, options);
    }
    case Estimator::mls: {
      if (!init) {
        const auto mis = solve_smoothed(data, {}, zero, start, options);
        start = solve_gehan(data, {}, zero, mis.beta, options).beta;
      }
      return solve_least_squares(data, {}, start, options);
    }
  }
  throw DataError("unknown estimator");
}

FittedModel fit_perturbed(const SurvivalDataset& data, Estimator estimator,
                          const PerturbationWeights& phi, const FittedModel& anchor,
                          PerturbationScheme scheme, const ResidualFrame* frame,
                          const FitOptions& options) {
  const int n = data.n();
  if (static_cast<int>(phi.phi.size()) != n) throw DataError("perturbation weights have wrong length");
  if (std::all_of(phi.phi.begin(), phi.phi.end(), [](double v) { return v == 1.0; })) {
    FittedModel same = anchor;
    same.iterations = 0;
    return same;
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(data.p());
  if (scheme == PerturbationScheme::weighted_score) {
    switch (estimator) {
      case Estimator::mis: return solve_smoothed(data, phi.phi, zero, anchor.beta, options);
      case Estimator::mns: return solve_gehan(data, phi.phi, zero, anchor.beta, options);
      case Estimator::mls: return solve_least_squares(data, phi.phi, anchor.beta, options);
    }
  }
  if (estimator == Estimator::mls) {
    throw DataError("the martingale_target scheme is not defined for mls");
  }
  Eigen::VectorXd target;
  if (frame) {
    target = martingale_score_target(data, *frame, phi.phi);
  } else {
    target = martingale_score_target(data, ResidualFrame(data, anchor.beta), phi.phi);
  }
  if (estimator == Estimator::mis) return solve_smoothed(data, {}, target, anchor.beta, options);
  return solve_gehan(data, {}, target, anchor.beta, options);
}

}  // namespace aftgof
