// Feature selection: univariate Cox screening followed by iterative
// backward elimination driven by concordance on a held-out validation
// split. Candidate batches shrink geometrically on rejection; once single
// features are rejected they are declared permanent, and the procedure
// stops when no single-feature removal is acceptable.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "survkit/cohort.hpp"
#include "survkit/coxph.hpp"
#include "survkit/metrics.hpp"

namespace survkit::selection {

struct ScreenResult {
  std::vector<std::string> kept;
  std::vector<std::pair<std::string, double>> dropped;  // (feature, p-value)
  std::vector<std::string> failed;  // fit failures, recorded in dropped with p = 1
};

// Fits one single-covariate Cox model per feature on the training split and
// drops features with Wald p > alpha. A feature whose univariate fit fails
// (separation, singularity, non-convergence) is dropped with p recorded as 1.
inline ScreenResult univariate_screen(const cohort::FeatureMatrix& x,
                                      const std::vector<SurvivalOutcome>& y, double alpha = 0.1,
                                      const coxph::CoxFitConfig& cfg = {}, int workers = 1) {
  const std::size_t d = x.n_cols();
  if (d == 0) throw ConfigError("univariate_screen: no features");

  std::vector<double> pvals(d, std::numeric_limits<double>::quiet_NaN());
  auto run_one = [&](std::size_t j) {
    cohort::FeatureMatrix single = x.select({x.column_names[j]});
    try {
      coxph::CoxModel m = coxph::fit(single, y, cfg);
      coxph::WaldStats w = coxph::wald_stats(m);
      pvals[j] = w.p_value(0);
    } catch (const Error&) {
      // recorded as a failure below
    }
  };

  if (workers > 1) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t j; (j = next.fetch_add(1)) < d;) run_one(j);
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t j = 0; j < d; ++j) run_one(j);
  }

  ScreenResult res;
  for (std::size_t j = 0; j < d; ++j) {
    const std::string& name = x.column_names[j];
    if (std::isnan(pvals[j])) {
      res.failed.push_back(name);
      res.dropped.emplace_back(name, 1.0);
    } else if (pvals[j] > alpha) {
      res.dropped.emplace_back(name, pvals[j]);
    } else {
      res.kept.push_back(name);
    }
  }
  if (res.kept.empty()) throw NumericError("univariate_screen: no features survive the screen");
  return res;
}

// ---------------------------------------------------------------------------
// Backward elimination.
// ---------------------------------------------------------------------------

struct EliminationRound {
  std::vector<std::string> candidate_set_removed;
  bool accepted = false;
  bool refit_failed = false;
  double validation_c_before = 0.0;
  double validation_c_after = 0.0;
};

struct EliminationTrace {
  std::vector<EliminationRound> rounds;
  std::vector<std::string> surviving_features;
  double initial_c = 0.0;
};

namespace detail {

inline double validation_concordance(const coxph::CoxModel& model,
                                     const cohort::FeatureMatrix& x_val,
                                     const std::vector<SurvivalOutcome>& y_val) {
  Eigen::VectorXd s = model.linear_predictor(x_val.values);
  std::vector<double> scores(s.data(), s.data() + s.size());
  return metrics::concordance(scores, y_val).c_index;
}

// Features ranked least-significant first; ties broken by name.
inline std::vector<std::string> rank_by_p_desc(const coxph::CoxModel& model) {
  coxph::WaldStats w = coxph::wald_stats(model);
  std::vector<std::size_t> idx(model.column_names.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double pa = w.p_value(static_cast<Eigen::Index>(a));
    const double pb = w.p_value(static_cast<Eigen::Index>(b));
    if (pa != pb) return pa > pb;
    return model.column_names[a] < model.column_names[b];
  });
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(model.column_names[i]);
  return out;
}

}  // namespace detail

// Removes features as long as validation concordance does not drop by more
// than drop_tolerance. initial_batch <= 0 means max(1, ceil(d / 8)); the
// batch halves on rejection and resets after an acceptance.
inline EliminationTrace backward_eliminate(const cohort::FeatureMatrix& x_train,
                                           const std::vector<SurvivalOutcome>& y_train,
                                           const cohort::FeatureMatrix& x_val,
                                           const std::vector<SurvivalOutcome>& y_val,
                                           double drop_tolerance = 0.001,
                                           int initial_batch = 0,
                                           const coxph::CoxFitConfig& cfg = {}) {
  if (x_train.n_cols() == 0) throw ConfigError("backward_eliminate: no features");
  if (x_train.column_names != x_val.column_names)
    throw SchemaError("backward_eliminate: train/validation schemas differ");

  auto auto_batch = [](std::size_t n_free) {
    return std::max<int>(1, static_cast<int>((n_free + 7) / 8));
  };

  std::vector<std::string> features = x_train.column_names;
  std::vector<std::string> permanent;
  auto is_permanent = [&](const std::string& f) {
    return std::find(permanent.begin(), permanent.end(), f) != permanent.end();
  };

  EliminationTrace trace;
  coxph::CoxModel current = coxph::fit(x_train, y_train, cfg);
  if (!current.converged)
    throw NumericError("backward_eliminate: initial fit did not converge");
  double current_c = detail::validation_concordance(current, x_val, y_val);
  trace.initial_c = current_c;

  int batch = initial_batch > 0 ? initial_batch : auto_batch(features.size());

  while (true) {
    if (features.size() <= 1) break;
    std::vector<std::string> ranked = detail::rank_by_p_desc(current);
    std::vector<std::string> removable;
    for (const auto& f : ranked)
      if (!is_permanent(f)) removable.push_back(f);
    if (removable.empty()) break;

    const int k = std::min<int>(
        {batch, static_cast<int>(removable.size()), static_cast<int>(features.size()) - 1});
    std::vector<std::string> candidates(removable.begin(), removable.begin() + k);

    std::vector<std::string> reduced;
    for (const auto& f : features)
      if (std::find(candidates.begin(), candidates.end(), f) == candidates.end())
        reduced.push_back(f);

    EliminationRound round;
    round.candidate_set_removed = candidates;
    round.validation_c_before = current_c;

    bool refit_ok = true;
    coxph::CoxModel refit;
    double c_after = 0.0;
    try {
      refit = coxph::fit(x_train.select(reduced), y_train, cfg);
      refit_ok = refit.converged;
      if (refit_ok) c_after = detail::validation_concordance(refit, x_val.select(reduced), y_val);
    } catch (const Error&) {
      refit_ok = false;
    }
    round.refit_failed = !refit_ok;
    round.validation_c_after = c_after;
    round.accepted = refit_ok && (current_c - c_after <= drop_tolerance);
    trace.rounds.push_back(round);

    if (round.accepted) {
      features = reduced;
      current = std::move(refit);
      current_c = c_after;
      std::size_t free_count = 0;
      for (const auto& f : features)
        if (!is_permanent(f)) ++free_count;
      batch = auto_batch(std::max<std::size_t>(free_count, 1));
    } else if (k > 1) {
      batch = std::max(1, k / 2);
    } else {
      permanent.push_back(candidates.front());
      batch = 1;
    }
  }

  trace.surviving_features = features;
  return trace;
}

}  // namespace survkit::selection
