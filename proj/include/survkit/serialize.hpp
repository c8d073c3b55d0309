// JSON serialization for schemas, models, reports and trial history.
// Artifacts carry a version field; model loaders check it and the feature
// schema so that stale or mismatched artifacts fail loudly.
#pragma once

#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "survkit/cohort.hpp"
#include "survkit/coxph.hpp"
#include "survkit/metrics.hpp"
#include "survkit/neural.hpp"
#include "survkit/selection.hpp"
#include "survkit/tuning.hpp"

namespace survkit::serialize {

using Json = nlohmann::ordered_json;

constexpr int kArtifactVersion = 1;

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open JSON file: " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in " + path + ": " + e.what());
  }
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in " + what + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing file: " + path);
}

// ---------------------------------------------------------------------------
// Eigen helpers.
// ---------------------------------------------------------------------------

inline Json vector_to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const Json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& rows) {
  const auto r = rows.size();
  const auto c = r == 0 ? 0 : rows[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Schema.
// ---------------------------------------------------------------------------

inline Json schema_to_json(const std::vector<cohort::ColumnSpec>& schema) {
  Json arr = Json::array();
  for (const auto& c : schema) {
    Json col;
    col["name"] = c.name;
    col["kind"] = cohort::to_string(c.kind);
    if (!c.categories.empty()) col["categories"] = c.categories;
    arr.push_back(std::move(col));
  }
  return arr;
}

inline std::vector<cohort::ColumnSpec> schema_from_json(const Json& arr) {
  if (!arr.is_array()) throw SchemaError("schema JSON must be an array of columns");
  std::vector<cohort::ColumnSpec> schema;
  for (const auto& col : arr) {
    cohort::ColumnSpec spec;
    spec.name = col.at("name").get<std::string>();
    spec.kind = cohort::column_kind_from_string(col.at("kind").get<std::string>());
    if (col.contains("categories"))
      spec.categories = col["categories"].get<std::vector<std::string>>();
    schema.push_back(std::move(spec));
  }
  cohort::validate_schema(schema);
  return schema;
}

// ---------------------------------------------------------------------------
// Step functions and scalings.
// ---------------------------------------------------------------------------

inline Json step_function_to_json(const StepFunction& f) {
  Json j;
  j["initial"] = f.initial;
  j["times"] = f.times;
  j["values"] = f.values;
  return j;
}

inline StepFunction step_function_from_json(const Json& j) {
  StepFunction f;
  f.initial = j.at("initial").get<double>();
  f.times = j.at("times").get<std::vector<double>>();
  f.values = j.at("values").get<std::vector<double>>();
  return f;
}

inline Json scaling_to_json(const std::vector<cohort::ColumnScaling>& scaling) {
  Json arr = Json::array();
  for (const auto& s : scaling) {
    Json e;
    e["mean"] = s.mean;
    e["stddev"] = s.stddev;
    arr.push_back(std::move(e));
  }
  return arr;
}

inline std::vector<cohort::ColumnScaling> scaling_from_json(const Json& arr) {
  std::vector<cohort::ColumnScaling> scaling;
  for (const auto& e : arr)
    scaling.push_back({e.at("mean").get<double>(), e.at("stddev").get<double>()});
  return scaling;
}

// ---------------------------------------------------------------------------
// Cox model artifact.
// ---------------------------------------------------------------------------

inline Json cox_model_to_json(const coxph::CoxModel& m) {
  Json j;
  j["version"] = kArtifactVersion;
  j["type"] = "cox";
  j["column_names"] = m.column_names;
  j["scaling"] = scaling_to_json(m.scaling);
  j["beta"] = vector_to_json(m.beta);
  j["covariance"] = matrix_to_json(m.covariance);
  j["baseline_cumhaz"] = step_function_to_json(m.baseline_cumhaz);
  j["converged"] = m.converged;
  j["separation_warning"] = m.separation_warning;
  j["ridge_used"] = m.ridge_used;
  j["final_nll"] = m.final_nll;
  j["iterations"] = m.iterations;
  j["max_time"] = m.max_time;
  Json cfg;
  cfg["ties"] = coxph::to_string(m.config.ties);
  cfg["max_iterations"] = m.config.max_iterations;
  cfg["tolerance"] = m.config.tolerance;
  cfg["ridge"] = m.config.ridge;
  cfg["step_halving_max"] = m.config.step_halving_max;
  j["config"] = std::move(cfg);
  return j;
}

inline coxph::CoxModel cox_model_from_json(const Json& j) {
  if (j.value("type", "") != "cox") throw SchemaError("artifact is not a cox model");
  if (j.value("version", -1) != kArtifactVersion)
    throw SchemaError("unsupported cox artifact version");
  coxph::CoxModel m;
  m.column_names = j.at("column_names").get<std::vector<std::string>>();
  m.scaling = scaling_from_json(j.at("scaling"));
  m.beta = vector_from_json(j.at("beta"));
  m.covariance = matrix_from_json(j.at("covariance"));
  m.baseline_cumhaz = step_function_from_json(j.at("baseline_cumhaz"));
  m.converged = j.at("converged").get<bool>();
  m.separation_warning = j.value("separation_warning", false);
  m.ridge_used = j.value("ridge_used", 0.0);
  m.final_nll = j.value("final_nll", 0.0);
  m.iterations = j.value("iterations", 0);
  m.max_time = j.at("max_time").get<double>();
  const auto& cfg = j.at("config");
  m.config.ties = coxph::ties_from_string(cfg.at("ties").get<std::string>());
  m.config.max_iterations = cfg.at("max_iterations").get<int>();
  m.config.tolerance = cfg.at("tolerance").get<double>();
  m.config.ridge = cfg.at("ridge").get<double>();
  m.config.step_halving_max = cfg.at("step_halving_max").get<int>();
  if (m.column_names.size() != static_cast<std::size_t>(m.beta.size()) ||
      m.column_names.size() != m.scaling.size())
    throw SchemaError("cox artifact: inconsistent dimensions");
  return m;
}

// ---------------------------------------------------------------------------
// Neural model artifact.
// ---------------------------------------------------------------------------

inline Json mlp_spec_to_json(const neural::MlpSpec& s) {
  Json j;
  j["hidden_layers"] = s.hidden_layers;
  j["activation"] = neural::to_string(s.activation);
  j["dropout_rate"] = s.dropout_rate;
  j["batch_norm"] = s.batch_norm;
  j["weight_decay"] = s.weight_decay;
  j["optimizer"] = neural::to_string(s.optimizer);
  j["momentum"] = s.momentum;
  j["adam_beta1"] = s.adam_beta1;
  j["adam_beta2"] = s.adam_beta2;
  j["adam_epsilon"] = s.adam_epsilon;
  j["learning_rate"] = s.learning_rate;
  j["batch_size"] = s.batch_size;
  j["max_epochs"] = s.max_epochs;
  j["early_stop_patience"] = s.early_stop_patience;
  return j;
}

inline neural::MlpSpec mlp_spec_from_json(const Json& j) {
  neural::MlpSpec s;
  s.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  s.activation = neural::activation_from_string(j.at("activation").get<std::string>());
  s.dropout_rate = j.at("dropout_rate").get<double>();
  s.batch_norm = j.at("batch_norm").get<bool>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.optimizer = neural::optimizer_from_string(j.at("optimizer").get<std::string>());
  s.momentum = j.value("momentum", 0.9);
  s.adam_beta1 = j.value("adam_beta1", 0.9);
  s.adam_beta2 = j.value("adam_beta2", 0.999);
  s.adam_epsilon = j.value("adam_epsilon", 1e-8);
  s.learning_rate = j.at("learning_rate").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.max_epochs = j.at("max_epochs").get<int>();
  s.early_stop_patience = j.at("early_stop_patience").get<int>();
  s.validate();
  return s;
}

namespace detail {

inline Json dense_to_json(const Eigen::MatrixXd& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);  // row-major
  return j;
}

inline Eigen::MatrixXd dense_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw SchemaError("weight matrix: data length mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

}  // namespace detail

inline Json mlp_model_to_json(const neural::MlpSurvModel& m) {
  Json j;
  j["version"] = kArtifactVersion;
  j["type"] = "mlp";
  j["column_names"] = m.column_names;
  j["scaling"] = scaling_to_json(m.scaling);
  j["input_dim"] = m.input_dim;
  j["spec"] = mlp_spec_to_json(m.spec);
  Json weights = Json::array(), biases = Json::array();
  for (const auto& w : m.weights) weights.push_back(detail::dense_to_json(w));
  for (const auto& b : m.biases) biases.push_back(vector_to_json(b));
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  if (m.spec.batch_norm) {
    Json bn;
    Json g = Json::array(), s = Json::array(), rm = Json::array(), rv = Json::array();
    for (const auto& v : m.bn_gamma) g.push_back(vector_to_json(v));
    for (const auto& v : m.bn_shift) s.push_back(vector_to_json(v));
    for (const auto& v : m.bn_run_mean) rm.push_back(vector_to_json(v));
    for (const auto& v : m.bn_run_var) rv.push_back(vector_to_json(v));
    bn["gamma"] = std::move(g);
    bn["shift"] = std::move(s);
    bn["running_mean"] = std::move(rm);
    bn["running_var"] = std::move(rv);
    j["batch_norm"] = std::move(bn);
  }
  Json log = Json::array();
  for (const auto& e : m.training_log) {
    Json entry;
    entry["train_loss"] = e.train_loss;
    entry["val_concordance"] = e.val_concordance;
    log.push_back(std::move(entry));
  }
  j["training_log"] = std::move(log);
  j["diverged"] = m.diverged;
  j["best_epoch"] = m.best_epoch;
  return j;
}

inline neural::MlpSurvModel mlp_model_from_json(const Json& j) {
  if (j.value("type", "") != "mlp") throw SchemaError("artifact is not an mlp model");
  if (j.value("version", -1) != kArtifactVersion)
    throw SchemaError("unsupported mlp artifact version");
  neural::MlpSurvModel m;
  m.column_names = j.at("column_names").get<std::vector<std::string>>();
  m.scaling = scaling_from_json(j.at("scaling"));
  m.input_dim = j.at("input_dim").get<int>();
  m.spec = mlp_spec_from_json(j.at("spec"));
  for (const auto& w : j.at("weights")) m.weights.push_back(detail::dense_from_json(w));
  for (const auto& b : j.at("biases")) m.biases.push_back(vector_from_json(b));
  if (m.spec.batch_norm) {
    const auto& bn = j.at("batch_norm");
    for (const auto& v : bn.at("gamma")) m.bn_gamma.push_back(vector_from_json(v));
    for (const auto& v : bn.at("shift")) m.bn_shift.push_back(vector_from_json(v));
    for (const auto& v : bn.at("running_mean")) m.bn_run_mean.push_back(vector_from_json(v));
    for (const auto& v : bn.at("running_var")) m.bn_run_var.push_back(vector_from_json(v));
  }
  for (const auto& e : j.at("training_log"))
    m.training_log.push_back(
        {e.at("train_loss").get<double>(), e.at("val_concordance").get<double>()});
  m.diverged = j.value("diverged", false);
  m.best_epoch = j.value("best_epoch", -1);
  return m;
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

inline Json preprocess_report_to_json(const cohort::PreprocessReport& r) {
  Json j;
  j["rows_excluded_missing"] = r.rows_excluded_missing;
  j["rows_excluded_prior"] = r.rows_excluded_prior;
  Json dropped = Json::array();
  for (const auto& d : r.columns_dropped_rare) {
    Json e;
    e["column"] = d.column;
    e["category"] = d.category;
    e["frequency"] = d.frequency;
    dropped.push_back(std::move(e));
  }
  j["columns_dropped_rare"] = std::move(dropped);
  j["derived_columns"] = r.derived_columns;
  return j;
}

inline Json screen_result_to_json(const selection::ScreenResult& r) {
  Json j;
  j["kept"] = r.kept;
  Json dropped = Json::array();
  for (const auto& [name, p] : r.dropped) {
    Json e;
    e["feature"] = name;
    e["p_value"] = p;
    dropped.push_back(std::move(e));
  }
  j["dropped"] = std::move(dropped);
  j["failed"] = r.failed;
  return j;
}

inline Json elimination_trace_to_json(const selection::EliminationTrace& t) {
  Json j;
  j["initial_c"] = t.initial_c;
  Json rounds = Json::array();
  for (const auto& r : t.rounds) {
    Json e;
    e["candidate_set_removed"] = r.candidate_set_removed;
    e["accepted"] = r.accepted;
    e["refit_failed"] = r.refit_failed;
    e["validation_c_before"] = r.validation_c_before;
    e["validation_c_after"] = r.validation_c_after;
    rounds.push_back(std::move(e));
  }
  j["rounds"] = std::move(rounds);
  j["surviving_features"] = t.surviving_features;
  return j;
}

inline selection::EliminationTrace elimination_trace_from_json(const Json& j) {
  selection::EliminationTrace t;
  t.initial_c = j.at("initial_c").get<double>();
  for (const auto& e : j.at("rounds")) {
    selection::EliminationRound r;
    r.candidate_set_removed = e.at("candidate_set_removed").get<std::vector<std::string>>();
    r.accepted = e.at("accepted").get<bool>();
    r.refit_failed = e.value("refit_failed", false);
    r.validation_c_before = e.at("validation_c_before").get<double>();
    r.validation_c_after = e.at("validation_c_after").get<double>();
    t.rounds.push_back(std::move(r));
  }
  t.surviving_features = j.at("surviving_features").get<std::vector<std::string>>();
  return t;
}

inline Json bootstrap_ci_to_json(const metrics::BootstrapCI& ci) {
  Json j;
  j["point"] = ci.point;
  j["low"] = ci.low;
  j["high"] = ci.high;
  j["rounds"] = ci.rounds;
  j["level"] = ci.level;
  return j;
}

inline Json calibration_report_to_json(const metrics::CalibrationReport& r) {
  Json j;
  j["horizon"] = r.horizon;
  Json bins = Json::array();
  for (const auto& b : r.bins) {
    Json e;
    e["mean_predicted"] = b.mean_predicted;
    e["km_observed"] = b.km_observed;
    e["subject_count"] = b.subject_count;
    e["at_risk_at_horizon"] = b.at_risk_at_horizon;
    e["usable"] = b.usable;
    bins.push_back(std::move(e));
  }
  j["bins"] = std::move(bins);
  j["ici"] = r.ici;
  j["mean_predicted_overall"] = r.mean_predicted_overall;
  j["mean_observed_overall"] = r.mean_observed_overall;
  j["excluded_bins"] = r.excluded_bins;
  return j;
}

inline void calibration_report_to_csv(std::ostream& out, const metrics::CalibrationReport& r) {
  out << "bin_index,mean_predicted,km_observed,count\n";
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    out << b << ',' << format_double(r.bins[b].mean_predicted) << ','
        << format_double(r.bins[b].km_observed) << ',' << r.bins[b].subject_count << '\n';
  }
}

// ---------------------------------------------------------------------------
// Search space and trial history.
// ---------------------------------------------------------------------------

inline Json search_space_to_json(const tuning::SearchSpace& space) {
  Json j = Json::object();
  for (const auto& [name, dist] : space.dims) {
    Json e;
    if (const auto* u = std::get_if<tuning::Uniform>(&dist)) {
      e["type"] = "uniform";
      e["lo"] = u->lo;
      e["hi"] = u->hi;
    } else if (const auto* lu = std::get_if<tuning::LogUniform>(&dist)) {
      e["type"] = "log_uniform";
      e["lo"] = lu->lo;
      e["hi"] = lu->hi;
    } else if (const auto* ir = std::get_if<tuning::IntegerRange>(&dist)) {
      e["type"] = "integer";
      e["lo"] = ir->lo;
      e["hi"] = ir->hi;
    } else if (const auto* c = std::get_if<tuning::Categorical>(&dist)) {
      e["type"] = "categorical";
      e["choices"] = c->choices;
    }
    j[name] = std::move(e);
  }
  return j;
}

inline tuning::SearchSpace search_space_from_json(const Json& j) {
  tuning::SearchSpace space;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& e = it.value();
    const std::string type = e.at("type").get<std::string>();
    if (type == "uniform")
      space.dims.emplace_back(it.key(),
                              tuning::Uniform{e.at("lo").get<double>(), e.at("hi").get<double>()});
    else if (type == "log_uniform")
      space.dims.emplace_back(
          it.key(), tuning::LogUniform{e.at("lo").get<double>(), e.at("hi").get<double>()});
    else if (type == "integer")
      space.dims.emplace_back(it.key(),
                              tuning::IntegerRange{e.at("lo").get<int>(), e.at("hi").get<int>()});
    else if (type == "categorical")
      space.dims.emplace_back(
          it.key(), tuning::Categorical{e.at("choices").get<std::vector<std::string>>()});
    else
      throw ConfigError("search space: unknown distribution type '" + type + "'");
  }
  space.validate();
  return space;
}

inline Json trial_record_to_json(const tuning::TrialRecord& t) {
  Json j;
  j["trial_id"] = t.trial_id;
  Json params = Json::object();
  for (const auto& [name, value] : t.params) {
    if (const auto* d = std::get_if<double>(&value))
      params[name] = *d;
    else
      params[name] = std::get<std::string>(value);
  }
  j["params"] = std::move(params);
  j["spec"] = mlp_spec_to_json(t.spec);
  j["fold_c"] = t.fold_c;
  if (t.status == tuning::TrialRecord::Status::ok)
    j["mean_c"] = t.mean_c;
  else
    j["mean_c"] = nullptr;
  j["status"] = t.status == tuning::TrialRecord::Status::ok ? "ok" : "failed";
  return j;
}

inline tuning::TrialRecord trial_record_from_json(const Json& j) {
  tuning::TrialRecord t;
  t.trial_id = j.at("trial_id").get<int>();
  for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
    if (it.value().is_string())
      t.params[it.key()] = it.value().get<std::string>();
    else
      t.params[it.key()] = it.value().get<double>();
  }
  t.spec = mlp_spec_from_json(j.at("spec"));
  t.fold_c = j.at("fold_c").get<std::vector<double>>();
  t.status = j.at("status").get<std::string>() == "ok" ? tuning::TrialRecord::Status::ok
                                                       : tuning::TrialRecord::Status::failed;
  t.mean_c = j.at("mean_c").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                      : j.at("mean_c").get<double>();
  return t;
}

inline std::vector<tuning::TrialRecord> read_trial_history(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::vector<tuning::TrialRecord> history;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    history.push_back(trial_record_from_json(parse_json(line, path)));
  }
  return history;
}

inline void append_trial_record(std::ostream& out, const tuning::TrialRecord& t) {
  out << trial_record_to_json(t).dump() << '\n';
}

}  // namespace survkit::serialize
