// Evaluation metrics for right-censored survival data: Harrell's
// concordance index, percentile-bootstrap confidence intervals, the
// Kaplan-Meier estimator and horizon calibration with the Integrated
// Calibration Index.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "survkit/common.hpp"

namespace survkit::metrics {

// ---------------------------------------------------------------------------
// Concordance index.
//
// A pair (i, j) is comparable when t_i < t_j and subject i had the event;
// it is concordant when score_i > score_j (higher score = riskier), tied
// scores count 1/2, and pairs with equal times are never comparable.
// ---------------------------------------------------------------------------

struct ConcordanceResult {
  double c_index = 0.0;
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t tied_risk = 0;
  std::int64_t comparable_pairs = 0;
};

namespace detail {

// Fenwick tree over compressed score ranks; supports prefix counts.
class RankCounter {
 public:
  explicit RankCounter(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t rank) {  // rank in [1, n]
    for (std::size_t i = rank; i < tree_.size(); i += i & (~i + 1)) tree_[i] += 1;
  }

  std::int64_t count_leq(std::size_t rank) const {  // ranks in [1, rank]
    std::int64_t s = 0;
    for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace detail

// O(n log n) sweep: walk event-time groups from the latest time backwards,
// keeping a rank-indexed count of every score with a strictly larger time.
inline ConcordanceResult concordance(std::span<const double> scores,
                                     const std::vector<SurvivalOutcome>& y) {
  const std::size_t n = y.size();
  if (scores.size() != n) throw NumericError("concordance: scores/outcomes size mismatch");

  // Compress scores to ranks 1..m.
  std::vector<double> sorted_scores(scores.begin(), scores.end());
  std::sort(sorted_scores.begin(), sorted_scores.end());
  sorted_scores.erase(std::unique(sorted_scores.begin(), sorted_scores.end()),
                      sorted_scores.end());
  auto rank_of = [&](double s) {
    return static_cast<std::size_t>(
               std::lower_bound(sorted_scores.begin(), sorted_scores.end(), s) -
               sorted_scores.begin()) + 1;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return y[a].duration < y[b].duration; });

  detail::RankCounter counter(sorted_scores.size());
  ConcordanceResult r;
  std::int64_t inserted = 0;

  // Groups of equal duration are queried before any member is inserted, so
  // same-time pairs are never counted.
  std::size_t hi = n;
  while (hi > 0) {
    std::size_t lo = hi;
    const double t = y[order[hi - 1]].duration;
    while (lo > 0 && y[order[lo - 1]].duration == t) --lo;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      if (!y[i].event) continue;
      const std::size_t rk = rank_of(scores[i]);
      const std::int64_t below = counter.count_leq(rk - 1);
      const std::int64_t at_or_below = counter.count_leq(rk);
      r.concordant += below;
      r.tied_risk += at_or_below - below;
      r.discordant += inserted - at_or_below;
      r.comparable_pairs += inserted;
    }
    for (std::size_t k = lo; k < hi; ++k) {
      counter.add(rank_of(scores[order[k]]));
      ++inserted;
    }
    hi = lo;
  }

  if (r.comparable_pairs == 0)
    throw NumericError("concordance undefined: no comparable pairs");
  r.c_index = (static_cast<double>(r.concordant) + 0.5 * static_cast<double>(r.tied_risk)) /
              static_cast<double>(r.comparable_pairs);
  return r;
}

// ---------------------------------------------------------------------------
// Kaplan-Meier product-limit estimator. S(0) = 1, right-continuous,
// nonincreasing. Subjects censored exactly at an event time remain in the
// risk set for that event.
// ---------------------------------------------------------------------------

inline StepFunction kaplan_meier(const std::vector<SurvivalOutcome>& y) {
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return y[a].duration < y[b].duration; });

  StepFunction s;
  s.initial = 1.0;
  double surv = 1.0;
  std::size_t at_risk = n;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    const double t = y[order[i]].duration;
    std::size_t deaths = 0;
    while (j < n && y[order[j]].duration == t) {
      deaths += y[order[j]].event ? 1 : 0;
      ++j;
    }
    if (deaths > 0) {
      surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      s.times.push_back(t);
      s.values.push_back(surv);
    }
    at_risk -= j - i;
    i = j;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Percentile bootstrap. `metric` is called with a vector of row indices
// (the resample); rounds draw per-round generators seeded seed + round so
// parallel and sequential execution agree. Resamples without any event are
// redrawn, up to 10 retries.
// ---------------------------------------------------------------------------

struct BootstrapCI {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
  int rounds = 0;
  double level = 0.95;
};

inline BootstrapCI bootstrap_ci(const std::function<double(const std::vector<int>&)>& metric,
                                const std::vector<SurvivalOutcome>& y, int rounds = 50,
                                double level = 0.95, std::uint64_t seed = 0, int workers = 1) {
  if (rounds < 1) throw ConfigError("bootstrap_ci: rounds must be >= 1");
  const int n = static_cast<int>(y.size());
  if (n == 0) throw ConfigError("bootstrap_ci: empty data");

  std::vector<int> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);

  std::vector<double> stats(static_cast<std::size_t>(rounds));
  auto run_round = [&](int round) {
    Rng rng(seed + static_cast<std::uint64_t>(round));
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 10)
        throw NumericError("bootstrap: 10 consecutive resamples without events");
      bool any_event = false;
      for (auto& v : idx) {
        v = static_cast<int>(uniform_int(rng, 0, n - 1));
        any_event = any_event || y[static_cast<std::size_t>(v)].event;
      }
      if (any_event) break;
    }
    stats[static_cast<std::size_t>(round)] = metric(idx);
  };

  if (workers > 1) {
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
      for (int r; (r = next.fetch_add(1)) < rounds;) {
        try {
          run_round(r);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  } else {
    for (int r = 0; r < rounds; ++r) run_round(r);
  }

  std::sort(stats.begin(), stats.end());
  BootstrapCI ci;
  ci.point = metric(identity);
  ci.rounds = rounds;
  ci.level = level;
  const double tail = (1.0 - level) / 2.0;
  ci.low = percentile(stats, tail);
  ci.high = percentile(stats, 1.0 - tail);
  return ci;
}

// Convenience: bootstrap CI of the concordance index of fixed scores.
inline BootstrapCI concordance_ci(std::span<const double> scores,
                                  const std::vector<SurvivalOutcome>& y, int rounds = 50,
                                  double level = 0.95, std::uint64_t seed = 0,
                                  int workers = 1) {
  auto metric = [&](const std::vector<int>& idx) {
    std::vector<double> s(idx.size());
    std::vector<SurvivalOutcome> yy(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      s[i] = scores[static_cast<std::size_t>(idx[i])];
      yy[i] = y[static_cast<std::size_t>(idx[i])];
    }
    return concordance(s, yy).c_index;
  };
  return bootstrap_ci(metric, y, rounds, level, seed, workers);
}

// ---------------------------------------------------------------------------
// Horizon calibration. Subjects are sorted by predicted risk into
// equal-count quantile bins; observed risk per bin is 1 - KM(horizon)
// within the bin; ICI is the prevalence-weighted mean absolute difference.
// Bins with nobody at risk at the horizon are flagged and excluded.
// ---------------------------------------------------------------------------

struct CalibrationBin {
  double mean_predicted = 0.0;
  double km_observed = 0.0;
  std::size_t subject_count = 0;
  std::size_t at_risk_at_horizon = 0;
  bool usable = true;
};

struct CalibrationReport {
  double horizon = 10.0;
  std::vector<CalibrationBin> bins;
  double ici = 0.0;
  double mean_predicted_overall = 0.0;
  double mean_observed_overall = 0.0;
  std::size_t excluded_bins = 0;
};

inline CalibrationReport calibration(std::span<const double> predicted,
                                     const std::vector<SurvivalOutcome>& y,
                                     double horizon = 10.0, int n_bins = 10) {
  const std::size_t n = y.size();
  if (predicted.size() != n) throw ConfigError("calibration: size mismatch");
  if (n == 0) throw ConfigError("calibration: empty data");
  if (n_bins < 1) throw ConfigError("calibration: n_bins must be >= 1");
  for (double p : predicted)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("calibration: predictions must lie in [0,1]");
  if (horizon > max_duration(y))
    throw ConfigError("calibration: horizon exceeds maximum follow-up");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });

  CalibrationReport rep;
  rep.horizon = horizon;
  const auto bins = static_cast<std::size_t>(n_bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins;
    const std::size_t hi = (b + 1) * n / bins;
    if (lo >= hi) continue;  // more bins than subjects
    CalibrationBin bin;
    bin.subject_count = hi - lo;
    std::vector<SurvivalOutcome> members(hi - lo);
    double pred_sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      members[k - lo] = y[i];
      pred_sum += predicted[i];
      if (y[i].duration >= horizon) ++bin.at_risk_at_horizon;
    }
    bin.mean_predicted = pred_sum / static_cast<double>(bin.subject_count);
    bin.km_observed = 1.0 - kaplan_meier(members)(horizon);
    bin.usable = bin.at_risk_at_horizon > 0;
    rep.bins.push_back(bin);
  }

  double ici = 0.0;
  for (const auto& bin : rep.bins) {
    if (!bin.usable) {
      ++rep.excluded_bins;
      continue;
    }
    ici += (static_cast<double>(bin.subject_count) / static_cast<double>(n)) *
           std::abs(bin.mean_predicted - bin.km_observed);
  }
  rep.ici = ici;
  rep.mean_predicted_overall = mean(predicted);
  rep.mean_observed_overall = 1.0 - kaplan_meier(y)(horizon);
  return rep;
}

}  // namespace survkit::metrics
