#include <catch2/catch_amalgamated.hpp>

#include "survkit/coxph.hpp"

#include <random>

using namespace survkit;
using coxph::Ties;

namespace {

cohort::FeatureMatrix make_features(const Eigen::MatrixXd& x) {
  cohort::FeatureMatrix fm;
  fm.values = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    fm.column_names.push_back("x" + std::to_string(j + 1));
    fm.scaling.push_back({});
  }
  return fm;
}

// Independent oracle: direct Breslow/Efron NLL from the definition, one
// explicit risk-set scan per event time. No shared code with the library.
double nll_reference(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                     const std::vector<SurvivalOutcome>& y, Ties ties) {
  const auto n = x.rows();
  Eigen::VectorXd eta = x * beta;
  std::vector<double> event_times;
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[static_cast<std::size_t>(i)].event) event_times.push_back(y[static_cast<std::size_t>(i)].duration);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

  double nll = 0.0;
  for (double t : event_times) {
    double risk = 0.0, tie_risk = 0.0;
    double num = 0.0;
    int deaths = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = y[static_cast<std::size_t>(i)];
      if (o.duration >= t) risk += std::exp(eta(i));
      if (o.event && o.duration == t) {
        ++deaths;
        num += eta(i);
        tie_risk += std::exp(eta(i));
      }
    }
    nll -= num;
    if (ties == Ties::breslow) {
      nll += deaths * std::log(risk);
    } else {
      for (int r = 0; r < deaths; ++r)
        nll += std::log(risk - (static_cast<double>(r) / deaths) * tie_risk);
    }
  }
  return nll;
}

struct RandomInstance {
  Eigen::MatrixXd x;
  std::vector<SurvivalOutcome> y;
};

RandomInstance random_instance(std::mt19937_64& rng, int n, int d, bool with_ties) {
  RandomInstance inst;
  inst.x.resize(n, d);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) inst.x(i, j) = gauss(rng);
    const double t = with_ties ? 1.0 + static_cast<double>(rng() % 8)
                               : 0.1 + std::generate_canonical<double, 53>(rng) * 10.0;
    inst.y.push_back({t, rng() % 3 != 0});
  }
  bool any = false;
  for (auto& o : inst.y) any |= o.event;
  if (!any) inst.y[0].event = true;
  return inst;
}

}  // namespace

TEST_CASE("nll at beta = 0 counts risk-set sizes", "[coxph]") {
  // 3 subjects, distinct times, all events: ln 3 + ln 2 + ln 1.
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 0.0, 1.0;
  std::vector<SurvivalOutcome> y = {{1, true}, {2, true}, {3, true}};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
  for (Ties ties : {Ties::breslow, Ties::efron}) {
    auto pl = coxph::neg_log_partial_likelihood(beta, x, y, ties);
    REQUIRE(pl.value == Catch::Approx(std::log(3.0) + std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("breslow and efron agree without tied event times", "[coxph]") {
  std::mt19937_64 rng(31);
  auto inst = random_instance(rng, 25, 3, false);
  Eigen::VectorXd beta(3);
  beta << 0.3, -0.7, 0.1;
  auto b = coxph::neg_log_partial_likelihood(beta, inst.x, inst.y, Ties::breslow);
  auto e = coxph::neg_log_partial_likelihood(beta, inst.x, inst.y, Ties::efron);
  REQUIRE(b.value == Catch::Approx(e.value).epsilon(1e-12));
  REQUIRE((b.gradient - e.gradient).norm() < 1e-10);
  REQUIRE((b.hessian - e.hessian).norm() < 1e-10);
}

TEST_CASE("value matches the reference oracle with ties", "[coxph]") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 30, 4, true);
    Eigen::VectorXd beta(4);
    std::normal_distribution<double> gauss;
    for (int j = 0; j < 4; ++j) beta(j) = 0.5 * gauss(rng);
    for (Ties ties : {Ties::breslow, Ties::efron}) {
      auto pl = coxph::neg_log_partial_likelihood(beta, inst.x, inst.y, ties);
      REQUIRE(pl.value == Catch::Approx(nll_reference(beta, inst.x, inst.y, ties)).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradient and hessian match central finite differences", "[coxph]") {
  std::mt19937_64 rng(41);
  const double h = 1e-5;
  for (int trial = 0; trial < 8; ++trial) {
    auto inst = random_instance(rng, 20, 4, trial % 2 == 0);
    Eigen::VectorXd beta(4);
    std::normal_distribution<double> gauss;
    for (int j = 0; j < 4; ++j) beta(j) = 0.4 * gauss(rng);
    for (Ties ties : {Ties::breslow, Ties::efron}) {
      auto pl = coxph::neg_log_partial_likelihood(beta, inst.x, inst.y, ties);
      for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd bp = beta, bm = beta;
        bp(j) += h;
        bm(j) -= h;
        const double fd =
            (coxph::neg_log_partial_likelihood(bp, inst.x, inst.y, ties).value -
             coxph::neg_log_partial_likelihood(bm, inst.x, inst.y, ties).value) /
            (2 * h);
        const double rel = std::abs(pl.gradient(j) - fd) /
                           std::max({1.0, std::abs(pl.gradient(j)), std::abs(fd)});
        REQUIRE(rel < 1e-5);
        // Hessian column vs finite difference of the analytic gradient.
        const Eigen::VectorXd gp =
            coxph::neg_log_partial_likelihood(bp, inst.x, inst.y, ties).gradient;
        const Eigen::VectorXd gm =
            coxph::neg_log_partial_likelihood(bm, inst.x, inst.y, ties).gradient;
        for (int i = 0; i < 4; ++i) {
          const double hfd = (gp(i) - gm(i)) / (2 * h);
          const double hrel = std::abs(pl.hessian(i, j) - hfd) /
                              std::max({1.0, std::abs(pl.hessian(i, j)), std::abs(hfd)});
          REQUIRE(hrel < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("hessian is positive semidefinite at random beta", "[coxph]") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 60; ++trial) {
    auto inst = random_instance(rng, 25, 3, trial % 2 == 0);
    Eigen::VectorXd beta(3);
    std::normal_distribution<double> gauss;
    for (int j = 0; j < 3; ++j) beta(j) = gauss(rng);
    for (Ties ties : {Ties::breslow, Ties::efron}) {
      auto pl = coxph::neg_log_partial_likelihood(beta, inst.x, inst.y, ties);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pl.hessian);
      REQUIRE(es.eigenvalues().minCoeff() > -1e-8);
    }
  }
}

TEST_CASE("fit matches a 1-D grid-search oracle", "[coxph]") {
  // Data {(t=1,e=1,x=1),(2,1,0),(3,1,1),(4,0,0)}; grid over [-5,5], step 1e-3.
  Eigen::MatrixXd x(4, 1);
  x << 1, 0, 1, 0;
  std::vector<SurvivalOutcome> y = {{1, true}, {2, true}, {3, true}, {4, false}};
  double best_beta = 0.0, best_val = std::numeric_limits<double>::infinity();
  for (double b = -5.0; b <= 5.0 + 1e-12; b += 1e-3) {
    Eigen::VectorXd bb(1);
    bb << b;
    const double v = nll_reference(bb, x, y, Ties::breslow);
    if (v < best_val) {
      best_val = v;
      best_beta = b;
    }
  }
  coxph::CoxFitConfig cfg;
  cfg.ties = Ties::breslow;
  auto model = coxph::fit(make_features(x), y, cfg);
  REQUIRE(model.converged);
  REQUIRE(std::abs(model.beta(0) - best_beta) < 1e-3);
  REQUIRE(model.beta(0) == Catch::Approx(0.9408).margin(2e-3));
}

TEST_CASE("independent covariate stays within 3 standard errors", "[coxph]") {
  std::mt19937_64 rng(47);
  const int n = 5000;
  Eigen::MatrixXd x(n, 1);
  std::vector<SurvivalOutcome> y;
  std::normal_distribution<double> gauss;
  for (int i = 0; i < n; ++i) {
    x(i, 0) = gauss(rng);  // permutation-equivalent: covariate independent of outcome
    y.push_back({0.1 + std::generate_canonical<double, 53>(rng) * 10.0, rng() % 5 != 0});
  }
  auto model = coxph::fit(make_features(x), y);
  REQUIRE(model.converged);
  auto w = coxph::wald_stats(model);
  REQUIRE(std::abs(model.beta(0)) < 3.0 * w.standard_error(0));
}

TEST_CASE("monotone likelihood raises the separation warning", "[coxph]") {
  // Covariate identical to the event indicator, events earliest.
  Eigen::MatrixXd x(8, 1);
  std::vector<SurvivalOutcome> y;
  for (int i = 0; i < 4; ++i) {
    x(i, 0) = 1.0;
    y.push_back({1.0 + i, true});
  }
  for (int i = 4; i < 8; ++i) {
    x(i, 0) = 0.0;
    y.push_back({10.0 + i, false});
  }
  auto model = coxph::fit(make_features(x), y);
  REQUIRE(model.separation_warning);
  REQUIRE_FALSE(model.converged);
  REQUIRE_THROWS_AS(coxph::wald_stats(model), NumericError);
}

TEST_CASE("fit preconditions are enforced", "[coxph]") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 1, 1, 1;  // zero variance
  std::vector<SurvivalOutcome> y = {{1, true}, {2, false}, {3, true}, {4, false}};
  REQUIRE_THROWS_AS(coxph::fit(make_features(x), y), NumericError);
  Eigen::MatrixXd x2(4, 1);
  x2 << 1, 0, 1, 0;
  std::vector<SurvivalOutcome> none = {{1, false}, {2, false}, {3, false}, {4, false}};
  REQUIRE_THROWS_AS(coxph::fit(make_features(x2), none), NumericError);
}

TEST_CASE("wald statistics formulas", "[coxph]") {
  coxph::CoxModel m;
  m.converged = true;
  m.beta = Eigen::VectorXd::Zero(2);
  m.beta(1) = 1.959964;
  m.covariance = Eigen::MatrixXd::Identity(2, 2);
  m.covariance(0, 0) = 4.0;  // se = 2
  m.column_names = {"a", "b"};
  m.scaling = {{}, {}};
  auto w = coxph::wald_stats(m);
  REQUIRE(w.standard_error(0) == 2.0);
  REQUIRE(w.p_value(0) == Catch::Approx(1.0));
  REQUIRE(w.ci_low(0) == Catch::Approx(-2.0 * 1.959964).epsilon(1e-6));
  REQUIRE(w.ci_high(0) == Catch::Approx(2.0 * 1.959964).epsilon(1e-6));
  REQUIRE(w.p_value(1) == Catch::Approx(0.05).margin(1e-6));
}

TEST_CASE("baseline cumulative hazard reduces to Nelson-Aalen at beta 0", "[coxph]") {
  Eigen::MatrixXd x(3, 1);
  x << 0.5, -0.5, 0.25;
  std::vector<SurvivalOutcome> y = {{1, true}, {2, true}, {3, true}};
  auto h0 = coxph::breslow_baseline(Eigen::VectorXd::Zero(1), x, y);
  REQUIRE(h0(0.0) == 0.0);
  REQUIRE(h0(1.0) == Catch::Approx(1.0 / 3.0));
  REQUIRE(h0(2.0) == Catch::Approx(1.0 / 3.0 + 1.0 / 2.0));
  REQUIRE(h0(3.0) == Catch::Approx(1.0 / 3.0 + 1.0 / 2.0 + 1.0));
}

TEST_CASE("baseline hazard is nondecreasing on random cohorts", "[coxph]") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng, 40, 2, trial % 2 == 0);
    Eigen::VectorXd beta(2);
    std::normal_distribution<double> gauss;
    beta << gauss(rng), gauss(rng);
    auto h0 = coxph::breslow_baseline(beta, inst.x, inst.y);
    REQUIRE(h0.initial == 0.0);
    for (std::size_t k = 1; k < h0.values.size(); ++k) {
      REQUIRE(h0.values[k] >= h0.values[k - 1]);
      REQUIRE(h0.times[k] > h0.times[k - 1]);
    }
  }
}

TEST_CASE("predict_risk basics", "[coxph]") {
  std::mt19937_64 rng(59);
  auto inst = random_instance(rng, 60, 2, false);
  auto model = coxph::fit(make_features(inst.x), inst.y);
  REQUIRE(model.converged);

  const double horizon = model.max_time * 0.5;
  std::vector<double> subject = {0.3, -0.2};
  const double risk = coxph::predict_risk(model, subject, horizon);
  REQUIRE(risk >= 0.0);
  REQUIRE(risk <= 1.0);
  // Nondecreasing in horizon.
  REQUIRE(coxph::predict_risk(model, subject, model.max_time) >= risk);
  // Extrapolation is refused.
  REQUIRE_THROWS_AS(coxph::predict_risk(model, subject, model.max_time + 1.0), ConfigError);

  // Null model: identical risk for all subjects, 1 - exp(-H0(t)).
  coxph::CoxModel null_model = model;
  null_model.beta.setZero();
  std::vector<double> a = {5.0, 1.0}, b = {-3.0, 2.0};
  const double ra = coxph::predict_risk(null_model, a, horizon);
  const double rb = coxph::predict_risk(null_model, b, horizon);
  REQUIRE(ra == Catch::Approx(rb).epsilon(1e-12));
  REQUIRE(ra == Catch::Approx(1.0 - std::exp(-null_model.baseline_cumhaz(horizon))));

  // H0(10) = 0 gives zero risk.
  coxph::CoxModel flat = model;
  flat.baseline_cumhaz = StepFunction{};
  REQUIRE(coxph::predict_risk(flat, subject, horizon) == 0.0);

  // Raising exp(x.beta) raises risk monotonically.
  coxph::CoxModel pos = model;
  pos.beta(0) = std::abs(pos.beta(0)) + 0.5;
  std::vector<double> low = {0.0, 0.0}, high = {1.0, 0.0};
  REQUIRE(coxph::predict_risk(pos, high, horizon) > coxph::predict_risk(pos, low, horizon));
}

TEST_CASE("scale equivariance of the fit", "[coxph]") {
  std::mt19937_64 rng(61);
  auto inst = random_instance(rng, 80, 3, false);
  auto base = coxph::fit(make_features(inst.x), inst.y);
  REQUIRE(base.converged);

  Eigen::MatrixXd scaled_x = inst.x;
  const double c = 4.0;
  scaled_x.col(1) *= c;
  auto scaled = coxph::fit(make_features(scaled_x), inst.y);
  REQUIRE(scaled.converged);

  REQUIRE(scaled.beta(1) == Catch::Approx(base.beta(1) / c).epsilon(1e-6));
  // Per-subject linear predictors and risks unchanged.
  Eigen::VectorXd lp_base = base.linear_predictor(inst.x);
  Eigen::VectorXd lp_scaled = scaled.linear_predictor(scaled_x);
  REQUIRE((lp_base - lp_scaled).lpNorm<Eigen::Infinity>() < 1e-8);
  const double horizon = base.max_time * 0.7;
  for (int i = 0; i < 5; ++i) {
    Eigen::RowVectorXd row_b = inst.x.row(i), row_s = scaled_x.row(i);
    REQUIRE(coxph::predict_risk_scaled(base, row_b, horizon) ==
            Catch::Approx(coxph::predict_risk_scaled(scaled, row_s, horizon)).margin(1e-8));
  }
}
