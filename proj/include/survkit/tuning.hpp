// Hyperparameter search via the Tree-Structured Parzen Estimator with
// k-fold cross-validated concordance as the objective. Numeric dimensions
// are modeled in a unit transform (log scale for log-uniform) by Gaussian
// kernel densities over the good/bad trial split; categorical dimensions
// use count smoothing. Candidates are drawn from the good-trial density and
// scored by the density ratio.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "survkit/cohort.hpp"
#include "survkit/common.hpp"
#include "survkit/metrics.hpp"
#include "survkit/neural.hpp"

namespace survkit::tuning {

// ---------------------------------------------------------------------------
// Search space.
// ---------------------------------------------------------------------------

struct Uniform {
  double lo = 0.0, hi = 1.0;
};
struct LogUniform {
  double lo = 1e-6, hi = 1.0;
};
struct IntegerRange {
  int lo = 0, hi = 1;
};
struct Categorical {
  std::vector<std::string> choices;
};

using ParamDist = std::variant<Uniform, LogUniform, IntegerRange, Categorical>;
using ParamValue = std::variant<double, std::string>;
using ParamSet = std::map<std::string, ParamValue>;

struct SearchSpace {
  std::vector<std::pair<std::string, ParamDist>> dims;

  void validate() const {
    if (dims.empty()) throw ConfigError("search space is empty");
    for (const auto& [name, dist] : dims) {
      if (name.empty()) throw ConfigError("search space: empty dimension name");
      if (const auto* u = std::get_if<Uniform>(&dist)) {
        if (!(std::isfinite(u->lo) && std::isfinite(u->hi) && u->lo < u->hi))
          throw ConfigError("search space: bad uniform bounds for '" + name + "'");
      } else if (const auto* lu = std::get_if<LogUniform>(&dist)) {
        if (!(lu->lo > 0.0 && std::isfinite(lu->hi) && lu->lo < lu->hi))
          throw ConfigError("search space: bad log-uniform bounds for '" + name + "'");
      } else if (const auto* ir = std::get_if<IntegerRange>(&dist)) {
        if (!(ir->lo < ir->hi))
          throw ConfigError("search space: bad integer bounds for '" + name + "'");
      } else if (const auto* c = std::get_if<Categorical>(&dist)) {
        if (c->choices.empty())
          throw ConfigError("search space: no choices for '" + name + "'");
      }
    }
  }
};

struct TrialRecord {
  int trial_id = 0;
  ParamSet params;
  neural::MlpSpec spec;
  std::vector<double> fold_c;
  double mean_c = 0.0;
  enum class Status { ok, failed } status = Status::ok;
};

// ---------------------------------------------------------------------------
// Prior sampling and the MlpSpec binding. Recognized parameter names map
// onto spec fields; everything else in the base spec stays untouched, so a
// space may search any subset of hyperparameters.
// ---------------------------------------------------------------------------

namespace detail {

inline double to_unit(const ParamDist& dist, const ParamValue& v) {
  const double x = std::get<double>(v);
  if (const auto* u = std::get_if<Uniform>(&dist)) return (x - u->lo) / (u->hi - u->lo);
  if (const auto* lu = std::get_if<LogUniform>(&dist))
    return (std::log(x) - std::log(lu->lo)) / (std::log(lu->hi) - std::log(lu->lo));
  if (const auto* ir = std::get_if<IntegerRange>(&dist))
    return (x - ir->lo) / static_cast<double>(ir->hi - ir->lo);
  throw ConfigError("to_unit: categorical dimension");
}

inline ParamValue from_unit(const ParamDist& dist, double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (const auto* un = std::get_if<Uniform>(&dist)) return un->lo + u * (un->hi - un->lo);
  if (const auto* lu = std::get_if<LogUniform>(&dist))
    return std::exp(std::log(lu->lo) + u * (std::log(lu->hi) - std::log(lu->lo)));
  if (const auto* ir = std::get_if<IntegerRange>(&dist)) {
    const double raw = ir->lo + u * static_cast<double>(ir->hi - ir->lo);
    return static_cast<double>(std::clamp(static_cast<int>(std::lround(raw)), ir->lo, ir->hi));
  }
  throw ConfigError("from_unit: categorical dimension");
}

}  // namespace detail

inline ParamSet prior_sample(const SearchSpace& space, Rng& rng) {
  ParamSet out;
  for (const auto& [name, dist] : space.dims) {
    if (const auto* c = std::get_if<Categorical>(&dist)) {
      out[name] = c->choices[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<std::int64_t>(c->choices.size()) - 1))];
    } else {
      out[name] = detail::from_unit(dist, uniform01(rng));
    }
  }
  return out;
}

// Applies sampled parameters onto a base spec. "n_hidden" and "width"
// together rebuild hidden_layers as n_hidden copies of width.
inline neural::MlpSpec spec_from_params(const ParamSet& params, const neural::MlpSpec& base) {
  neural::MlpSpec spec = base;
  auto num = [&](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : std::get<double>(it->second);
  };
  const auto n_hidden = static_cast<int>(
      num("n_hidden", static_cast<double>(base.hidden_layers.size())));
  const auto width = static_cast<int>(
      num("width", base.hidden_layers.empty() ? 16.0 : static_cast<double>(base.hidden_layers[0])));
  spec.hidden_layers.assign(static_cast<std::size_t>(std::max(0, n_hidden)),
                            std::max(1, width));
  spec.dropout_rate = num("dropout", base.dropout_rate);
  spec.weight_decay = num("weight_decay", base.weight_decay);
  spec.learning_rate = num("learning_rate", base.learning_rate);
  spec.batch_size = static_cast<int>(num("batch_size", static_cast<double>(base.batch_size)));
  spec.momentum = num("momentum", base.momentum);
  if (auto it = params.find("activation"); it != params.end())
    spec.activation = neural::activation_from_string(std::get<std::string>(it->second));
  if (auto it = params.find("optimizer"); it != params.end())
    spec.optimizer = neural::optimizer_from_string(std::get<std::string>(it->second));
  if (auto it = params.find("batch_norm"); it != params.end())
    spec.batch_norm = std::get<std::string>(it->second) == "true";
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// TPE sampling.
// ---------------------------------------------------------------------------

namespace detail {

// 1-D Gaussian KDE over the unit transform, mixed with the uniform prior as
// one extra component. Bandwidth by Scott's rule with floors.
struct UnitKde {
  std::vector<double> centers;
  double bandwidth = 0.25;

  static UnitKde build(std::vector<double> centers) {
    UnitKde k;
    k.centers = std::move(centers);
    const double sd = sample_stddev(k.centers);
    const double n = static_cast<double>(std::max<std::size_t>(k.centers.size(), 1));
    k.bandwidth = std::clamp(std::max(sd, 1e-3) * std::pow(n, -0.2), 1e-3, 1.0);
    return k;
  }

  double density(double u) const {
    const double n1 = static_cast<double>(centers.size()) + 1.0;
    double acc = 1.0;  // uniform prior component on [0,1]
    const double inv = 1.0 / bandwidth;
    for (double c : centers) {
      const double z = (u - c) * inv;
      acc += inv * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    }
    return acc / n1;
  }

  double sample(Rng& rng) const {
    const auto pick = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(centers.size())));
    if (pick == centers.size()) return uniform01(rng);  // prior component
    return std::clamp(centers[pick] + normal01(rng) * bandwidth, 0.0, 1.0);
  }
};

// Smoothed categorical frequencies (add-one smoothing).
struct CategoryModel {
  std::vector<double> probs;

  static CategoryModel build(const std::vector<std::size_t>& counts) {
    CategoryModel m;
    double total = 0.0;
    for (std::size_t c : counts) total += static_cast<double>(c) + 1.0;
    for (std::size_t c : counts) m.probs.push_back((static_cast<double>(c) + 1.0) / total);
    return m;
  }

  std::size_t sample(Rng& rng) const {
    double u = uniform01(rng);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      u -= probs[i];
      if (u <= 0.0) return i;
    }
    return probs.size() - 1;
  }
};

}  // namespace detail

// Draws the next configuration. With fewer than n_startup completed trials
// (or fewer than two usable ones) the prior is sampled directly; otherwise
// history splits at the gamma-quantile of mean_c into good/bad densities
// and the best of n_candidates draws from the good density by density
// ratio wins. Deterministic given seed and history.
inline ParamSet tpe_sample_params(const std::vector<TrialRecord>& history,
                                  const SearchSpace& space, double gamma = 0.25,
                                  int n_candidates = 24, std::uint64_t seed = 0,
                                  int n_startup = 10) {
  space.validate();
  Rng rng(derive_seed(seed, splitmix64(0x79E5 + history.size())));

  std::vector<const TrialRecord*> ok;
  for (const auto& t : history)
    if (t.status == TrialRecord::Status::ok) ok.push_back(&t);

  if (static_cast<int>(history.size()) < n_startup || ok.size() < 2)
    return prior_sample(space, rng);

  std::sort(ok.begin(), ok.end(), [](const TrialRecord* a, const TrialRecord* b) {
    if (a->mean_c != b->mean_c) return a->mean_c > b->mean_c;
    return a->trial_id < b->trial_id;
  });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(ok.size()))));

  struct DimModel {
    bool categorical = false;
    detail::UnitKde good_kde, bad_kde;
    detail::CategoryModel good_cat, bad_cat;
    const Categorical* cat = nullptr;
  };
  std::vector<DimModel> models;
  for (const auto& [name, dist] : space.dims) {
    DimModel dm;
    if (const auto* c = std::get_if<Categorical>(&dist)) {
      dm.categorical = true;
      dm.cat = c;
      std::vector<std::size_t> good_counts(c->choices.size(), 0), bad_counts(c->choices.size(), 0);
      for (std::size_t i = 0; i < ok.size(); ++i) {
        auto it = ok[i]->params.find(name);
        if (it == ok[i]->params.end()) continue;
        const auto& label = std::get<std::string>(it->second);
        auto pos = std::find(c->choices.begin(), c->choices.end(), label);
        if (pos == c->choices.end()) continue;
        auto& counts = i < n_good ? good_counts : bad_counts;
        ++counts[static_cast<std::size_t>(pos - c->choices.begin())];
      }
      dm.good_cat = detail::CategoryModel::build(good_counts);
      dm.bad_cat = detail::CategoryModel::build(bad_counts);
    } else {
      std::vector<double> good_units, bad_units;
      for (std::size_t i = 0; i < ok.size(); ++i) {
        auto it = ok[i]->params.find(name);
        if (it == ok[i]->params.end()) continue;
        (i < n_good ? good_units : bad_units).push_back(detail::to_unit(dist, it->second));
      }
      dm.good_kde = detail::UnitKde::build(std::move(good_units));
      dm.bad_kde = detail::UnitKde::build(std::move(bad_units));
    }
    models.push_back(std::move(dm));
  }

  ParamSet best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < n_candidates; ++c) {
    ParamSet cand;
    double score = 0.0;
    for (std::size_t dim = 0; dim < space.dims.size(); ++dim) {
      const auto& [name, dist] = space.dims[dim];
      const DimModel& dm = models[dim];
      if (dm.categorical) {
        const std::size_t pick = dm.good_cat.sample(rng);
        cand[name] = dm.cat->choices[pick];
        score += std::log(dm.good_cat.probs[pick]) - std::log(dm.bad_cat.probs[pick]);
      } else {
        const double u = dm.good_kde.sample(rng);
        cand[name] = detail::from_unit(dist, u);
        score += std::log(dm.good_kde.density(u)) - std::log(dm.bad_kde.density(u));
      }
    }
    if (score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  return best;
}

inline neural::MlpSpec tpe_sample(const std::vector<TrialRecord>& history,
                                  const SearchSpace& space, const neural::MlpSpec& base,
                                  double gamma = 0.25, int n_candidates = 24,
                                  std::uint64_t seed = 0) {
  return spec_from_params(tpe_sample_params(history, space, gamma, n_candidates, seed), base);
}

// ---------------------------------------------------------------------------
// Event-stratified k-fold cross-validation of a spec; any fold failure
// marks the trial failed.
// ---------------------------------------------------------------------------

// Fold assignment per row: events and censored are shuffled separately and
// dealt round-robin, so per-fold event counts differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<SurvivalOutcome>& y, int k,
                                         std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross_validate: k must be >= 2");
  if (y.size() < static_cast<std::size_t>(k)) throw ConfigError("cross_validate: n < k");
  std::vector<int> events, censored;
  for (std::size_t i = 0; i < y.size(); ++i)
    (y[i].event ? events : censored).push_back(static_cast<int>(i));
  if (events.size() < static_cast<std::size_t>(k))
    throw ConfigError("cross_validate: cannot stratify, fewer events than folds");
  if (censored.size() < static_cast<std::size_t>(k))
    throw ConfigError("cross_validate: cannot stratify, fewer censored rows than folds");
  Rng rng(derive_seed(seed, 0xF01D5));
  std::shuffle(events.begin(), events.end(), rng);
  std::shuffle(censored.begin(), censored.end(), rng);
  std::vector<int> fold(y.size(), 0);
  for (std::size_t i = 0; i < events.size(); ++i)
    fold[static_cast<std::size_t>(events[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < censored.size(); ++i)
    fold[static_cast<std::size_t>(censored[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

inline TrialRecord cross_validate(const neural::MlpSpec& spec, const cohort::FeatureMatrix& x,
                                  const std::vector<SurvivalOutcome>& y, int k = 3,
                                  std::uint64_t seed = 0, int trial_id = 0) {
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.spec = spec;
  const std::vector<int> fold = stratified_folds(y, k, seed);

  double sum = 0.0;
  for (int f = 0; f < k; ++f) {
    std::vector<int> tr, ho;
    for (std::size_t i = 0; i < y.size(); ++i)
      (fold[i] == f ? ho : tr).push_back(static_cast<int>(i));
    try {
      neural::MlpSurvModel model =
          neural::train(x.take_rows(tr), cohort::take_outcomes(y, tr), x.take_rows(ho),
                        cohort::take_outcomes(y, ho), spec, derive_seed(seed, 0xCF0 + f));
      if (model.diverged) throw NumericError("fold diverged");
      Eigen::VectorXd s = model.score(x.take_rows(ho).values);
      std::vector<double> scores(s.data(), s.data() + s.size());
      const double c = metrics::concordance(scores, cohort::take_outcomes(y, ho)).c_index;
      rec.fold_c.push_back(c);
      sum += c;
    } catch (const Error&) {
      rec.status = TrialRecord::Status::failed;
      rec.fold_c.clear();
      rec.mean_c = std::numeric_limits<double>::quiet_NaN();
      return rec;
    }
  }
  rec.mean_c = sum / static_cast<double>(k);
  return rec;
}

// ---------------------------------------------------------------------------
// Search loop: budget trials of tpe_sample -> cross_validate, resumable
// from persisted history.
// ---------------------------------------------------------------------------

struct SearchResult {
  TrialRecord best;
  std::vector<TrialRecord> all;
};

inline SearchResult search(const SearchSpace& space, int budget,
                           const cohort::FeatureMatrix& x, const std::vector<SurvivalOutcome>& y,
                           int k = 3, std::uint64_t seed = 0,
                           const neural::MlpSpec& base = {},
                           std::vector<TrialRecord> history = {},
                           const std::function<void(const TrialRecord&)>& on_trial = {}) {
  if (budget < 1) throw ConfigError("search: budget must be >= 1");
  space.validate();

  for (int t = static_cast<int>(history.size()); t < budget; ++t) {
    ParamSet params = tpe_sample_params(history, space, 0.25, 24, seed);
    neural::MlpSpec spec = spec_from_params(params, base);
    TrialRecord rec = cross_validate(spec, x, y, k, derive_seed(seed, 0xAB10 + static_cast<std::uint64_t>(t)), t);
    rec.params = std::move(params);
    history.push_back(rec);
    if (on_trial) on_trial(history.back());
  }

  const TrialRecord* best = nullptr;
  for (const auto& t : history)
    if (t.status == TrialRecord::Status::ok && (best == nullptr || t.mean_c > best->mean_c))
      best = &t;
  if (best == nullptr) throw NumericError("search: every trial failed");

  SearchResult res;
  res.best = *best;
  res.all = std::move(history);
  return res;
}

}  // namespace survkit::tuning
