#include <catch2/catch_amalgamated.hpp>

#include "survkit/metrics.hpp"

#include <random>

using namespace survkit;
using metrics::ConcordanceResult;

namespace {

// Independent O(n^2) oracle: direct pair enumeration of the comparability
// and tie rules. Kept free of the production sweep on purpose.
ConcordanceResult concordance_bruteforce(const std::vector<double>& s,
                                         const std::vector<SurvivalOutcome>& y) {
  ConcordanceResult r;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!y[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (!(y[i].duration < y[j].duration)) continue;
      ++r.comparable_pairs;
      if (s[i] > s[j])
        ++r.concordant;
      else if (s[i] < s[j])
        ++r.discordant;
      else
        ++r.tied_risk;
    }
  }
  r.c_index = (r.concordant + 0.5 * r.tied_risk) / static_cast<double>(r.comparable_pairs);
  return r;
}

std::vector<SurvivalOutcome> make_outcomes(std::initializer_list<double> t,
                                           std::initializer_list<int> e) {
  std::vector<SurvivalOutcome> y;
  auto ti = t.begin();
  auto ei = e.begin();
  for (; ti != t.end(); ++ti, ++ei) y.push_back({*ti, *ei != 0});
  return y;
}

}  // namespace

TEST_CASE("perfect ranking gives c = 1", "[metrics]") {
  auto y = make_outcomes({1, 2, 3}, {1, 1, 1});
  std::vector<double> s = {3, 2, 1};
  auto r = metrics::concordance(s, y);
  REQUIRE(r.c_index == 1.0);
  REQUIRE(r.comparable_pairs == 3);
  REQUIRE(r.concordant == 3);
}

TEST_CASE("all-tied scores give c = 0.5", "[metrics]") {
  auto y = make_outcomes({1, 2, 3, 4}, {1, 1, 0, 1});
  std::vector<double> s = {5, 5, 5, 5};
  auto r = metrics::concordance(s, y);
  REQUIRE(r.c_index == 0.5);
  REQUIRE(r.tied_risk == r.comparable_pairs);
}

TEST_CASE("hand-enumerated three-subject case", "[metrics]") {
  // A(t=1,e,s=.9), B(t=2,e,s=.3), C(t=3,cens,s=.5): AB, AC concordant; BC discordant.
  auto y = make_outcomes({1, 2, 3}, {1, 1, 0});
  std::vector<double> s = {0.9, 0.3, 0.5};
  auto r = metrics::concordance(s, y);
  REQUIRE(r.comparable_pairs == 3);
  REQUIRE(r.concordant == 2);
  REQUIRE(r.discordant == 1);
  REQUIRE(r.c_index == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("tied event times are incomparable", "[metrics]") {
  auto y = make_outcomes({1, 1, 2}, {1, 1, 0});
  std::vector<double> s = {3, 1, 2};
  auto r = metrics::concordance(s, y);
  // Only the two (event at 1) -> (censored at 2) pairs count.
  REQUIRE(r.comparable_pairs == 2);
}

TEST_CASE("no comparable pairs is an error", "[metrics]") {
  auto all_censored = make_outcomes({1, 2, 3}, {0, 0, 0});
  std::vector<double> s = {1, 2, 3};
  REQUIRE_THROWS_AS(metrics::concordance(s, all_censored), NumericError);
  // A single event at the latest time has nothing after it.
  auto late_event = make_outcomes({1, 2}, {0, 1});
  std::vector<double> s2 = {1, 2};
  REQUIRE_THROWS_AS(metrics::concordance(s2, late_event), NumericError);
}

TEST_CASE("production concordance equals brute force on random instances", "[metrics]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 199);
    std::vector<SurvivalOutcome> y;
    std::vector<double> s;
    bool any_event = false;
    for (int i = 0; i < n; ++i) {
      // Coarse grids force plenty of tied times and tied scores.
      const double t = 1.0 + static_cast<double>(rng() % 20);
      const bool e = rng() % 3 != 0;
      any_event |= e;
      y.push_back({t, e});
      s.push_back(static_cast<double>(rng() % 10));
    }
    if (!any_event) {
      y[0].event = true;
      y[0].duration = 0.5;
    }
    ConcordanceResult expect;
    try {
      expect = concordance_bruteforce(s, y);
    } catch (...) {
      continue;
    }
    if (expect.comparable_pairs == 0) {
      REQUIRE_THROWS_AS(metrics::concordance(s, y), NumericError);
      continue;
    }
    auto got = metrics::concordance(s, y);
    REQUIRE(got.concordant == expect.concordant);
    REQUIRE(got.discordant == expect.discordant);
    REQUIRE(got.tied_risk == expect.tied_risk);
    REQUIRE(got.comparable_pairs == expect.comparable_pairs);
    REQUIRE(got.c_index == expect.c_index);
  }
}

TEST_CASE("concordance is invariant under increasing transforms", "[metrics]") {
  std::mt19937_64 rng(11);
  std::vector<SurvivalOutcome> y;
  std::vector<double> s;
  for (int i = 0; i < 150; ++i) {
    y.push_back({1.0 + static_cast<double>(rng() % 40), rng() % 2 == 0});
    s.push_back(static_cast<double>(rng() % 25) / 5.0 - 2.0);
  }
  auto base = metrics::concordance(s, y);
  std::vector<double> exp_s(s.size()), aff_s(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    exp_s[i] = std::exp(s[i]);
    aff_s[i] = 3.0 * s[i] + 11.0;
  }
  for (const auto& transformed : {exp_s, aff_s}) {
    auto r = metrics::concordance(transformed, y);
    REQUIRE(r.concordant == base.concordant);
    REQUIRE(r.tied_risk == base.tied_risk);
    REQUIRE(r.c_index == base.c_index);
  }
}

TEST_CASE("concordance antisymmetry without score ties", "[metrics]") {
  std::mt19937_64 rng(13);
  std::vector<SurvivalOutcome> y;
  std::vector<double> s, neg;
  for (int i = 0; i < 120; ++i) {
    y.push_back({1.0 + static_cast<double>(rng() % 30), rng() % 2 == 0});
    s.push_back(static_cast<double>(i) + static_cast<double>(rng() % 7) * 0.01);
  }
  for (double v : s) neg.push_back(-v);
  auto a = metrics::concordance(s, y);
  auto b = metrics::concordance(neg, y);
  REQUIRE(a.tied_risk == 0);
  REQUIRE(b.c_index == Catch::Approx(1.0 - a.c_index));
}

// --- Kaplan-Meier ---------------------------------------------------------

TEST_CASE("kaplan_meier product-limit by hand", "[metrics]") {
  auto y = make_outcomes({1, 2, 3}, {1, 0, 1});
  auto s = metrics::kaplan_meier(y);
  REQUIRE(s(0.0) == 1.0);
  REQUIRE(s(1.0) == Catch::Approx(2.0 / 3.0));
  REQUIRE(s(2.0) == Catch::Approx(2.0 / 3.0));
  REQUIRE(s(3.0) == Catch::Approx(0.0));
}

TEST_CASE("kaplan_meier with no events is identically 1", "[metrics]") {
  auto y = make_outcomes({1, 2, 3}, {0, 0, 0});
  auto s = metrics::kaplan_meier(y);
  REQUIRE(s(0.5) == 1.0);
  REQUIRE(s(10.0) == 1.0);
}

TEST_CASE("kaplan_meier without censoring equals the empirical survivor", "[metrics]") {
  std::mt19937_64 rng(5);
  std::vector<SurvivalOutcome> y;
  for (int i = 0; i < 60; ++i) y.push_back({1.0 + static_cast<double>(rng() % 12), true});
  auto s = metrics::kaplan_meier(y);
  for (double t : {0.5, 1.0, 3.0, 6.5, 12.0, 13.0}) {
    double surviving = 0.0;
    for (const auto& o : y) surviving += o.duration > t ? 1.0 : 0.0;
    REQUIRE(s(t) == Catch::Approx(surviving / 60.0).margin(1e-12));
  }
}

TEST_CASE("censoring at an event time stays in the risk set", "[metrics]") {
  auto y = make_outcomes({2, 2, 4}, {1, 0, 0});
  auto s = metrics::kaplan_meier(y);
  REQUIRE(s(2.0) == Catch::Approx(2.0 / 3.0));
}

// --- Bootstrap --------------------------------------------------------------

TEST_CASE("constant metric collapses the CI", "[metrics]") {
  auto y = make_outcomes({1, 2, 3, 4}, {1, 0, 1, 0});
  auto ci = metrics::bootstrap_ci([](const std::vector<int>&) { return 0.7; }, y, 50, 0.95, 3);
  REQUIRE(ci.point == 0.7);
  REQUIRE(ci.low == 0.7);
  REQUIRE(ci.high == 0.7);
}

TEST_CASE("one bootstrap round pins low = high", "[metrics]") {
  auto y = make_outcomes({1, 2, 3, 4}, {1, 0, 1, 0});
  auto metric = [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) s += y[static_cast<std::size_t>(i)].duration;
    return s;
  };
  auto ci = metrics::bootstrap_ci(metric, y, 1, 0.95, 9);
  REQUIRE(ci.low == ci.high);
}

TEST_CASE("bootstrap is deterministic and worker-count invariant", "[metrics]") {
  std::mt19937_64 rng(17);
  std::vector<SurvivalOutcome> y;
  std::vector<double> s;
  for (int i = 0; i < 300; ++i) {
    y.push_back({1.0 + static_cast<double>(rng() % 50), rng() % 4 == 0});
    s.push_back(uniform01(rng));
  }
  auto a = metrics::concordance_ci(s, y, 50, 0.95, 123, 1);
  auto b = metrics::concordance_ci(s, y, 50, 0.95, 123, 1);
  auto c = metrics::concordance_ci(s, y, 50, 0.95, 123, 4);
  REQUIRE(a.low == b.low);
  REQUIRE(a.high == b.high);
  REQUIRE(a.low == c.low);
  REQUIRE(a.high == c.high);
}

TEST_CASE("degenerate resamples are redrawn then fail after 10 tries", "[metrics]") {
  // Single event among many censored rows: redraws succeed.
  std::vector<SurvivalOutcome> y;
  for (int i = 0; i < 12; ++i) y.push_back({1.0 + i, i == 3});
  int calls = 0;
  auto metric = [&](const std::vector<int>&) {
    ++calls;
    return 1.0;
  };
  auto ci = metrics::bootstrap_ci(metric, y, 20, 0.95, 1);
  REQUIRE(ci.rounds == 20);
  // All-censored data can never produce a valid resample.
  std::vector<SurvivalOutcome> dead;
  for (int i = 0; i < 5; ++i) dead.push_back({1.0 + i, false});
  REQUIRE_THROWS_AS(metrics::bootstrap_ci(metric, dead, 5, 0.95, 1), NumericError);
}

// --- Calibration -------------------------------------------------------------

TEST_CASE("perfectly calibrated predictions give ici = 0", "[metrics]") {
  // Two risk strata with no censoring before the horizon.
  std::vector<SurvivalOutcome> y;
  std::vector<double> pred;
  for (int i = 0; i < 40; ++i) {  // low-risk stratum: 25% events by t=5
    const bool event = i % 4 == 0;
    y.push_back({event ? 2.0 : 20.0, event});
    pred.push_back(0.25);
  }
  for (int i = 0; i < 40; ++i) {  // high-risk stratum: 75% events by t=5
    const bool event = i % 4 != 0;
    y.push_back({event ? 3.0 : 20.0, event});
    pred.push_back(0.75);
  }
  auto rep = metrics::calibration(pred, y, 10.0, 2);
  REQUIRE(rep.ici == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(rep.bins.size() == 2);
  REQUIRE(rep.bins[0].subject_count + rep.bins[1].subject_count == 80);
}

TEST_CASE("all-zero predictions: ici equals the observed event fraction", "[metrics]") {
  std::vector<SurvivalOutcome> y;
  std::vector<double> pred;
  for (int i = 0; i < 50; ++i) {
    const bool event = i % 5 == 0;
    y.push_back({event ? 4.0 : 15.0, event});
    pred.push_back(0.0);
  }
  auto rep = metrics::calibration(pred, y, 10.0, 5);
  REQUIRE(rep.ici == Catch::Approx(0.2).margin(1e-12));
  REQUIRE(rep.mean_observed_overall == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("calibration rejects bad inputs", "[metrics]") {
  auto y = make_outcomes({1, 2, 3, 12}, {1, 0, 1, 0});
  std::vector<double> bad = {0.1, 1.4, 0.2, 0.3};
  REQUIRE_THROWS_AS(metrics::calibration(bad, y, 10.0, 2), ConfigError);
  std::vector<double> ok = {0.1, 0.4, 0.2, 0.3};
  REQUIRE_THROWS_AS(metrics::calibration(ok, y, 50.0, 2), ConfigError);
}

TEST_CASE("bins with nobody at risk at the horizon are excluded", "[metrics]") {
  // Low-prediction bin all censored before the horizon.
  std::vector<SurvivalOutcome> y;
  std::vector<double> pred;
  for (int i = 0; i < 10; ++i) {
    y.push_back({2.0, false});
    pred.push_back(0.1);
  }
  for (int i = 0; i < 10; ++i) {
    const bool event = i % 2 == 0;
    y.push_back({event ? 3.0 : 15.0, event});
    pred.push_back(0.9);
  }
  auto rep = metrics::calibration(pred, y, 10.0, 2);
  REQUIRE(rep.excluded_bins == 1);
  REQUIRE_FALSE(rep.bins[0].usable);
  REQUIRE(rep.bins[1].usable);
  REQUIRE(rep.ici == Catch::Approx(0.5 * std::abs(0.9 - 0.5)).margin(1e-12));
}

TEST_CASE("counts reconcile and subject counts sum to n", "[metrics]") {
  std::mt19937_64 rng(23);
  std::vector<SurvivalOutcome> y;
  std::vector<double> pred;
  for (int i = 0; i < 137; ++i) {
    y.push_back({0.5 + static_cast<double>(rng() % 30), rng() % 3 == 0});
    pred.push_back(uniform01(rng));
  }
  auto rep = metrics::calibration(pred, y, 5.0, 10);
  std::size_t total = 0;
  for (const auto& b : rep.bins) total += b.subject_count;
  REQUIRE(total == y.size());
  REQUIRE(rep.ici >= 0.0);
}
