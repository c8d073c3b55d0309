// Cox proportional-hazards estimation: negative log partial likelihood with
// Breslow/Efron ties handling and exact analytic derivatives, Newton-Raphson
// fitting with step halving and a ridge fallback, Wald inference, the
// Breslow baseline cumulative hazard and horizon-risk prediction.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "survkit/cohort.hpp"
#include "survkit/common.hpp"

namespace survkit::coxph {

enum class Ties { breslow, efron };

inline std::string to_string(Ties t) { return t == Ties::breslow ? "breslow" : "efron"; }

inline Ties ties_from_string(const std::string& s) {
  if (s == "breslow") return Ties::breslow;
  if (s == "efron") return Ties::efron;
  throw ConfigError("unknown ties method '" + s + "' (breslow|efron)");
}

struct CoxFitConfig {
  Ties ties = Ties::efron;
  int max_iterations = 100;
  double tolerance = 1e-7;  // change in negative log partial likelihood
  double ridge = 0.0;       // L2 stabilizer
  int step_halving_max = 10;

  void validate() const {
    if (!(tolerance > 0.0)) throw ConfigError("cox: tolerance must be > 0");
    if (ridge < 0.0) throw ConfigError("cox: ridge must be >= 0");
    if (max_iterations < 1) throw ConfigError("cox: max_iterations must be >= 1");
  }
};

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

namespace detail {

// Rows sorted by duration ascending; tie groups as [lo, hi) ranges. The
// evaluation walks groups from the latest time down, so risk-set sums are
// plain running accumulations.
struct RiskSetContext {
  std::vector<int> order;
  std::vector<std::pair<int, int>> groups;
  std::size_t n_events = 0;

  static RiskSetContext build(const std::vector<SurvivalOutcome>& y) {
    RiskSetContext ctx;
    const int n = static_cast<int>(y.size());
    ctx.order.resize(static_cast<std::size_t>(n));
    std::iota(ctx.order.begin(), ctx.order.end(), 0);
    std::sort(ctx.order.begin(), ctx.order.end(), [&](int a, int b) {
      return y[static_cast<std::size_t>(a)].duration < y[static_cast<std::size_t>(b)].duration;
    });
    int i = 0;
    while (i < n) {
      int j = i;
      const double t = y[static_cast<std::size_t>(ctx.order[static_cast<std::size_t>(i)])].duration;
      while (j < n &&
             y[static_cast<std::size_t>(ctx.order[static_cast<std::size_t>(j)])].duration == t)
        ++j;
      ctx.groups.emplace_back(i, j);
      i = j;
    }
    ctx.n_events = count_events(y);
    return ctx;
  }

  PartialLikelihood eval(const Eigen::MatrixXd& x, const std::vector<SurvivalOutcome>& y,
                         const Eigen::VectorXd& beta, Ties ties, double ridge) const {
    const auto d = x.cols();
    PartialLikelihood out;
    out.gradient = Eigen::VectorXd::Zero(d);
    out.hessian = Eigen::MatrixXd::Zero(d, d);

    Eigen::VectorXd eta = x * beta;
    if (!eta.allFinite()) throw NumericError("cox: non-finite linear predictor");
    const double shift = eta.maxCoeff();
    Eigen::VectorXd w = (eta.array() - shift).exp();

    double value = 0.0;
    double risk_sum = 0.0;                                   // sum of shifted weights
    Eigen::VectorXd risk_x = Eigen::VectorXd::Zero(d);       // sum of w * x
    Eigen::MatrixXd risk_xx = Eigen::MatrixXd::Zero(d, d);   // sum of w * x x^T
    Eigen::VectorXd tie_x(d), mu(d);
    Eigen::MatrixXd tie_xx(d, d);

    for (auto g = groups.rbegin(); g != groups.rend(); ++g) {
      int n_deaths = 0;
      double tie_sum = 0.0;
      tie_x.setZero();
      tie_xx.setZero();
      for (int k = g->first; k < g->second; ++k) {
        const int i = order[static_cast<std::size_t>(k)];
        const double wi = w(i);
        const auto xi = x.row(i);
        risk_sum += wi;
        risk_x.noalias() += wi * xi.transpose();
        risk_xx.selfadjointView<Eigen::Lower>().rankUpdate(xi.transpose(), wi);
        if (y[static_cast<std::size_t>(i)].event) {
          ++n_deaths;
          value -= eta(i);
          out.gradient -= xi.transpose();
          if (ties == Ties::efron) {
            tie_sum += wi;
            tie_x.noalias() += wi * xi.transpose();
            tie_xx.selfadjointView<Eigen::Lower>().rankUpdate(xi.transpose(), wi);
          }
        }
      }
      if (n_deaths == 0) continue;
      const int sub_steps = ties == Ties::efron ? n_deaths : 1;
      for (int r = 0; r < sub_steps; ++r) {
        const double frac =
            ties == Ties::efron ? static_cast<double>(r) / static_cast<double>(n_deaths) : 0.0;
        const double denom = risk_sum - frac * tie_sum;
        if (!(denom > 0.0)) throw NumericError("cox: nonpositive risk-set denominator");
        const double weight = ties == Ties::efron ? 1.0 : static_cast<double>(n_deaths);
        value += weight * (std::log(denom) + shift);
        mu = (risk_x - frac * tie_x) / denom;
        out.gradient.noalias() += weight * mu;
        out.hessian.triangularView<Eigen::Lower>() +=
            weight * ((risk_xx - frac * tie_xx) / denom);
        out.hessian.selfadjointView<Eigen::Lower>().rankUpdate(mu, -weight);
      }
    }
    out.hessian = out.hessian.selfadjointView<Eigen::Lower>();
    out.value = value;
    if (ridge > 0.0) {
      out.value += 0.5 * ridge * beta.squaredNorm();
      out.gradient.noalias() += ridge * beta;
      out.hessian.diagonal().array() += ridge;
    }
    if (!std::isfinite(out.value)) throw NumericError("cox: non-finite partial likelihood");
    return out;
  }
};

// Acklam's rational approximation of the standard normal quantile,
// refined with one Halley step; |error| < 1e-12 over (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

}  // namespace detail

// Exact value / gradient / Hessian of the (optionally ridge-penalized)
// negative log partial likelihood.
inline PartialLikelihood neg_log_partial_likelihood(const Eigen::VectorXd& beta,
                                                    const Eigen::MatrixXd& x,
                                                    const std::vector<SurvivalOutcome>& y,
                                                    Ties ties, double ridge = 0.0) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw ConfigError("cox: feature/outcome row mismatch");
  if (x.cols() != beta.size()) throw ConfigError("cox: beta dimension mismatch");
  if (count_events(y) == 0) throw NumericError("cox: no events in the data");
  auto ctx = detail::RiskSetContext::build(y);
  return ctx.eval(x, y, beta, ties, ridge);
}

// Breslow estimator of the baseline cumulative hazard at the given
// coefficients: mass d_i / sum_{risk set} exp(x.beta) at each event time.
inline StepFunction breslow_baseline(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                     const std::vector<SurvivalOutcome>& y) {
  auto ctx = detail::RiskSetContext::build(y);
  Eigen::VectorXd eta = x * beta;
  const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
  Eigen::VectorXd w = (eta.array() - shift).exp();

  std::vector<double> times, increments;
  double risk_sum = 0.0;
  for (auto g = ctx.groups.rbegin(); g != ctx.groups.rend(); ++g) {
    int n_deaths = 0;
    for (int k = g->first; k < g->second; ++k) {
      const int i = ctx.order[static_cast<std::size_t>(k)];
      risk_sum += w(i);
      n_deaths += y[static_cast<std::size_t>(i)].event ? 1 : 0;
    }
    if (n_deaths > 0) {
      times.push_back(y[static_cast<std::size_t>(ctx.order[static_cast<std::size_t>(g->first)])].duration);
      increments.push_back(static_cast<double>(n_deaths) * std::exp(-shift) / risk_sum);
    }
  }
  std::reverse(times.begin(), times.end());
  std::reverse(increments.begin(), increments.end());

  StepFunction h0;
  h0.initial = 0.0;
  double cum = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    cum += increments[k];
    h0.times.push_back(times[k]);
    h0.values.push_back(cum);
  }
  return h0;
}

struct CoxModel {
  Eigen::VectorXd beta;  // log hazard ratios on the scaled feature space
  Eigen::MatrixXd covariance;
  StepFunction baseline_cumhaz;
  std::vector<std::string> column_names;
  std::vector<cohort::ColumnScaling> scaling;
  bool converged = false;
  bool separation_warning = false;
  double ridge_used = 0.0;
  double final_nll = 0.0;
  int iterations = 0;
  double max_time = 0.0;  // largest observed duration in the training data
  CoxFitConfig config;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const { return x * beta; }
};

inline CoxModel fit(const cohort::FeatureMatrix& features, const std::vector<SurvivalOutcome>& y,
                    const CoxFitConfig& cfg = {}) {
  cfg.validate();
  const Eigen::MatrixXd& x = features.values;
  const auto n = x.rows();
  const auto d = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw ConfigError("cox: feature/outcome row mismatch");
  if (n <= d) throw NumericError("cox: need more rows than features");
  if (count_events(y) == 0) throw NumericError("cox: no events in the data");
  for (Eigen::Index j = 0; j < d; ++j) {
    const double m = x.col(j).mean();
    if ((x.col(j).array() - m).abs().maxCoeff() == 0.0)
      throw NumericError("cox: zero-variance column '" + features.column_names[static_cast<std::size_t>(j)] + "'");
  }

  auto ctx = detail::RiskSetContext::build(y);
  CoxModel model;
  model.column_names = features.column_names;
  model.scaling = features.scaling;
  model.config = cfg;
  model.ridge_used = cfg.ridge;
  model.max_time = max_duration(y);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  PartialLikelihood cur = ctx.eval(x, y, beta, cfg.ties, model.ridge_used);

  auto solve_step = [&](const PartialLikelihood& pl, Eigen::VectorXd& step) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(pl.hessian);
    if (ldlt.info() != Eigen::Success) return false;
    step = ldlt.solve(pl.gradient);
    if (!step.allFinite()) return false;
    const double residual = (pl.hessian * step - pl.gradient).norm();
    return residual <= 1e-6 * std::max(1.0, pl.gradient.norm());
  };

  bool converged = false;
  int iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    Eigen::VectorXd step(d);
    if (!solve_step(cur, step)) {
      if (model.ridge_used == 0.0) {
        // Near-collinear designs (full one-hot groups) land here.
        model.ridge_used = 1e-6;
        cur = ctx.eval(x, y, beta, cfg.ties, model.ridge_used);
        if (!solve_step(cur, step)) throw NumericError("cox: singular Hessian after ridge fallback");
      } else {
        throw NumericError("cox: singular Hessian after ridge fallback");
      }
    }

    Eigen::VectorXd cand_beta = beta - step;
    PartialLikelihood cand = ctx.eval(x, y, cand_beta, cfg.ties, model.ridge_used);
    int halvings = 0;
    while (cand.value > cur.value && halvings < cfg.step_halving_max) {
      step *= 0.5;
      cand_beta = beta - step;
      cand = ctx.eval(x, y, cand_beta, cfg.ties, model.ridge_used);
      ++halvings;
    }
    const double delta = cur.value - cand.value;
    if (cand.value > cur.value && std::abs(delta) >= cfg.tolerance) break;  // cannot descend

    beta = cand_beta;
    cur = cand;
    if (beta.lpNorm<Eigen::Infinity>() > 50.0) {
      model.separation_warning = true;
      ++iter;
      break;
    }
    if (std::abs(delta) < cfg.tolerance) {
      converged = true;
      ++iter;
      break;
    }
  }

  model.beta = beta;
  model.converged = converged && !model.separation_warning;
  model.final_nll = cur.value;
  model.iterations = iter;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.hessian);
  if (ldlt.info() == Eigen::Success) {
    Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
    model.covariance = 0.5 * (cov + cov.transpose());
  } else {
    model.covariance = Eigen::MatrixXd::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
  }
  model.baseline_cumhaz = breslow_baseline(beta, x, y);
  return model;
}

struct WaldStats {
  Eigen::VectorXd standard_error;
  Eigen::VectorXd z;
  Eigen::VectorXd p_value;
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
};

inline WaldStats wald_stats(const CoxModel& model, double alpha = 0.05) {
  if (!model.converged) throw NumericError("wald_stats: inference refused, model did not converge");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("wald_stats: alpha must lie in (0,1)");
  const auto d = model.beta.size();
  const double z_crit = detail::normal_quantile(1.0 - alpha / 2.0);
  WaldStats w;
  w.standard_error.resize(d);
  w.z.resize(d);
  w.p_value.resize(d);
  w.ci_low.resize(d);
  w.ci_high.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double se = std::sqrt(std::max(model.covariance(j, j), 0.0));
    w.standard_error(j) = se;
    w.z(j) = se > 0.0 ? model.beta(j) / se : 0.0;
    w.p_value(j) = std::erfc(std::abs(w.z(j)) / std::sqrt(2.0));
    w.ci_low(j) = model.beta(j) - z_crit * se;
    w.ci_high(j) = model.beta(j) + z_crit * se;
  }
  return w;
}

// Horizon risk for a subject given in raw (unscaled) units:
// 1 - exp(-H0(horizon) * exp(z . beta)) with z the stored standardization.
inline double predict_risk(const CoxModel& model, std::span<const double> raw_x,
                           double horizon) {
  if (raw_x.size() != model.column_names.size())
    throw ConfigError("predict_risk: feature vector length mismatch");
  if (horizon > model.max_time)
    throw ConfigError("predict_risk: horizon beyond observed follow-up (no extrapolation)");
  double eta = 0.0;
  for (std::size_t j = 0; j < raw_x.size(); ++j) {
    const auto& sc = model.scaling[j];
    eta += ((raw_x[j] - sc.mean) / sc.stddev) * model.beta(static_cast<Eigen::Index>(j));
  }
  return 1.0 - std::exp(-model.baseline_cumhaz(horizon) * std::exp(eta));
}

// Same, for a row that is already on the model's scaled feature space.
inline double predict_risk_scaled(const CoxModel& model, const Eigen::RowVectorXd& scaled_x,
                                  double horizon) {
  if (horizon > model.max_time)
    throw ConfigError("predict_risk: horizon beyond observed follow-up (no extrapolation)");
  const double eta = (scaled_x * model.beta).value();
  return 1.0 - std::exp(-model.baseline_cumhaz(horizon) * std::exp(eta));
}

}  // namespace survkit::coxph
