// Cohort data model: typed columns, CSV ingestion, synthetic cohort
// generation with known ground truth, preprocessing into a numeric feature
// matrix and stratified train/validation/test splitting.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "survkit/common.hpp"
#include "survkit/csv.hpp"

namespace survkit::cohort {

// ---------------------------------------------------------------------------
// Schema and table.
// ---------------------------------------------------------------------------

enum class ColumnKind { continuous, ordinal, categorical, event_date };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::ordinal: return "ordinal";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::event_date: return "event_date";
  }
  return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "ordinal") return ColumnKind::ordinal;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "event_date") return ColumnKind::event_date;
  throw SchemaError("unknown column kind '" + s + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  // Categorical: the category labels (>= 1). Ordinal: optional ordered level
  // labels; when empty ordinal cells are parsed as numbers.
  std::vector<std::string> categories;
};

inline void validate_schema(const std::vector<ColumnSpec>& schema) {
  std::vector<std::string> names;
  for (const auto& c : schema) {
    if (c.name.empty()) throw SchemaError("schema: empty column name");
    names.push_back(c.name);
    if (c.kind == ColumnKind::categorical && c.categories.empty())
      throw SchemaError("schema: categorical column '" + c.name + "' lists no categories");
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw SchemaError("schema: duplicate column names");
}

// One column of typed per-subject cells; only the member matching the kind
// is populated. Missing cells: NaN (numeric), -1 (categorical index),
// nullopt (dates).
struct Column {
  ColumnSpec spec;
  std::vector<double> numeric;                // continuous / ordinal
  std::vector<int> category;                  // categorical
  std::vector<std::optional<Date>> date;      // event_date
};

struct CohortTable {
  std::vector<Column> columns;
  std::vector<Date> assessment_date;
  std::vector<std::optional<Date>> outcome_date;
  std::vector<Date> censor_date;
  std::vector<std::string> derived_columns;

  std::size_t n_rows() const { return assessment_date.size(); }

  const Column* find_column(const std::string& name) const {
    for (const auto& c : columns)
      if (c.spec.name == name) return &c;
    return nullptr;
  }

  std::vector<ColumnSpec> schema() const {
    std::vector<ColumnSpec> s;
    s.reserve(columns.size());
    for (const auto& c : columns) s.push_back(c.spec);
    return s;
  }
};

// Reserved trailing CSV columns carrying the outcome timeline.
inline const std::vector<std::string>& reserved_date_columns() {
  static const std::vector<std::string> cols = {"assessment_date", "outcome_date",
                                                "censor_date"};
  return cols;
}

// ---------------------------------------------------------------------------
// CSV ingestion. The header must list the schema columns in order followed
// by assessment_date, outcome_date, censor_date. Empty cells are missing;
// unparseable numeric/categorical cells become missing; a non-empty
// malformed date is a parse error naming row and column.
// ---------------------------------------------------------------------------

inline CohortTable load_cohort(const std::string& path, const std::vector<ColumnSpec>& schema) {
  validate_schema(schema);
  auto rows = csv::read_file(path);
  if (rows.empty()) throw SchemaError("cohort CSV '" + path + "' has no header row");

  const auto& header = rows[0];
  const std::size_t d = schema.size();
  std::vector<std::string> expected;
  for (const auto& c : schema) expected.push_back(c.name);
  for (const auto& c : reserved_date_columns()) expected.push_back(c);
  if (header != expected) {
    std::ostringstream msg;
    msg << "cohort CSV header does not match schema; expected [";
    for (std::size_t i = 0; i < expected.size(); ++i) msg << (i ? "," : "") << expected[i];
    msg << "] got [";
    for (std::size_t i = 0; i < header.size(); ++i) msg << (i ? "," : "") << header[i];
    msg << "]";
    throw SchemaError(msg.str());
  }

  CohortTable t;
  t.columns.resize(d);
  for (std::size_t j = 0; j < d; ++j) t.columns[j].spec = schema[j];

  auto parse_number = [](const std::string& cell) -> double {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) return std::numeric_limits<double>::quiet_NaN();
    return v;
  };

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != expected.size()) {
      std::ostringstream msg;
      msg << "cohort CSV row " << r << " has " << row.size() << " fields, expected "
          << expected.size();
      throw ParseError(msg.str());
    }
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = row[j];
      Column& col = t.columns[j];
      switch (col.spec.kind) {
        case ColumnKind::continuous:
          col.numeric.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : parse_number(cell));
          break;
        case ColumnKind::ordinal: {
          if (cell.empty()) {
            col.numeric.push_back(std::numeric_limits<double>::quiet_NaN());
          } else if (!col.spec.categories.empty()) {
            auto it = std::find(col.spec.categories.begin(), col.spec.categories.end(), cell);
            col.numeric.push_back(it == col.spec.categories.end()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : static_cast<double>(it - col.spec.categories.begin()));
          } else {
            col.numeric.push_back(parse_number(cell));
          }
          break;
        }
        case ColumnKind::categorical: {
          if (cell.empty()) {
            col.category.push_back(-1);
          } else {
            auto it = std::find(col.spec.categories.begin(), col.spec.categories.end(), cell);
            col.category.push_back(it == col.spec.categories.end()
                                       ? -1
                                       : static_cast<int>(it - col.spec.categories.begin()));
          }
          break;
        }
        case ColumnKind::event_date: {
          if (cell.empty()) {
            col.date.push_back(std::nullopt);
          } else {
            try {
              col.date.push_back(Date::parse_iso(cell));
            } catch (const ParseError&) {
              std::ostringstream msg;
              msg << "row " << r << ", column '" << col.spec.name << "': malformed date '"
                  << cell << "'";
              throw ParseError(msg.str());
            }
          }
          break;
        }
      }
    }
    auto parse_required_date = [&](const std::string& cell, const char* what) {
      try {
        return Date::parse_iso(cell);
      } catch (const ParseError&) {
        std::ostringstream msg;
        msg << "row " << r << ", column '" << what << "': malformed date '" << cell << "'";
        throw ParseError(msg.str());
      }
    };
    t.assessment_date.push_back(parse_required_date(row[d], "assessment_date"));
    if (row[d + 1].empty())
      t.outcome_date.push_back(std::nullopt);
    else
      t.outcome_date.push_back(parse_required_date(row[d + 1], "outcome_date"));
    t.censor_date.push_back(parse_required_date(row[d + 2], "censor_date"));
  }
  return t;
}

inline void write_cohort_csv(std::ostream& out, const CohortTable& t) {
  std::vector<std::string> header;
  for (const auto& c : t.columns) header.push_back(c.spec.name);
  for (const auto& c : reserved_date_columns()) header.push_back(c);
  csv::write_row(out, header);
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    std::vector<std::string> row;
    for (const auto& c : t.columns) {
      switch (c.spec.kind) {
        case ColumnKind::continuous:
        case ColumnKind::ordinal:
          row.push_back(std::isnan(c.numeric[r]) ? "" : format_double(c.numeric[r]));
          break;
        case ColumnKind::categorical:
          row.push_back(c.category[r] < 0 ? ""
                                          : c.spec.categories[static_cast<std::size_t>(c.category[r])]);
          break;
        case ColumnKind::event_date:
          row.push_back(c.date[r] ? c.date[r]->iso() : "");
          break;
      }
    }
    row.push_back(t.assessment_date[r].iso());
    row.push_back(t.outcome_date[r] ? t.outcome_date[r]->iso() : "");
    row.push_back(t.censor_date[r].iso());
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Synthetic cohorts with known ground truth. Event times follow a Weibull
// proportional-hazards model with linear predictor x . true_log_hr; the
// observation window mimics staggered recruitment: assessment dates spread
// uniformly over two years, one common extraction date.
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t n_subjects = 1000;
  std::vector<double> true_log_hr = {1.0};
  double weibull_shape = 1.3;
  // <= 0 calibrates the scale so the realized event count equals
  // round(n * target_prevalence); a positive value is used as given.
  double weibull_scale = 0.0;
  double max_followup_years = 13.8;
  double entry_stagger_years = 2.0;
  double target_prevalence = 0.0323;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_subjects < 2) throw ConfigError("synth: n_subjects must be >= 2");
    if (true_log_hr.empty()) throw ConfigError("synth: true_log_hr must be nonempty");
    if (!(target_prevalence > 0.0 && target_prevalence < 1.0))
      throw ConfigError("synth: target_prevalence must lie in (0,1)");
    if (!(max_followup_years > 0.0)) throw ConfigError("synth: max_followup_years must be > 0");
    if (!(weibull_shape > 0.0)) throw ConfigError("synth: weibull_shape must be > 0");
    if (missing_rate < 0.0 || missing_rate >= 1.0)
      throw ConfigError("synth: missing_rate must lie in [0,1)");
    if (entry_stagger_years < 0.0 || entry_stagger_years >= max_followup_years)
      throw ConfigError("synth: entry_stagger_years must lie in [0, max_followup_years)");
  }
};

struct SyntheticCohort {
  CohortTable table;
  std::vector<double> true_log_hr;
  double weibull_shape = 0.0;
  double weibull_scale = 0.0;
  std::vector<double> true_linear_predictor;  // per retained subject, row order
};

inline SyntheticCohort generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_subjects;
  const std::size_t d = cfg.true_log_hr.size();
  Rng rng(derive_seed(cfg.seed, 0xC0410F7));

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal01(rng);

  std::vector<double> eta(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      eta[i] += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * cfg.true_log_hr[j];

  std::vector<double> stagger(n), u(n);
  for (std::size_t i = 0; i < n; ++i) stagger[i] = cfg.entry_stagger_years * uniform01(rng);
  for (std::size_t i = 0; i < n; ++i) u[i] = std::max(uniform01(rng), 1e-300);

  // Censoring horizon per subject: one extraction date minus entry stagger.
  std::vector<double> censor_years(n);
  for (std::size_t i = 0; i < n; ++i) censor_years[i] = cfg.max_followup_years - stagger[i];

  // Weibull inversion: T = scale * (-ln U / exp(eta))^(1/shape). A subject
  // has an observed event iff scale <= threshold_i below, so the scale
  // quantile pins the realized event count exactly.
  const double inv_shape = 1.0 / cfg.weibull_shape;
  std::vector<double> threshold(n);
  for (std::size_t i = 0; i < n; ++i)
    threshold[i] = censor_years[i] * std::pow(std::exp(eta[i]) / (-std::log(u[i])), inv_shape);

  double scale = cfg.weibull_scale;
  const auto target_events =
      static_cast<std::size_t>(std::llround(cfg.target_prevalence * static_cast<double>(n)));
  if (scale <= 0.0) {
    if (target_events < 1 || target_events >= n)
      throw ConfigError("synth: target_prevalence unreachable at this cohort size");
    std::vector<double> sorted = threshold;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(target_events - 1),
                     sorted.end(), std::greater<double>());
    scale = sorted[target_events - 1];
  }

  std::size_t events = 0;
  std::vector<double> event_time(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    event_time[i] = scale * std::pow(-std::log(u[i]) / std::exp(eta[i]), inv_shape);
    if (event_time[i] <= censor_years[i]) ++events;
  }
  const double realized = static_cast<double>(events) / static_cast<double>(n);
  if (std::abs(realized - cfg.target_prevalence) > 0.2 * cfg.target_prevalence)
    throw ConfigError("synth: baseline scale cannot reach target prevalence under censoring "
                      "(realized " + format_double(realized) + ")");

  CohortTable t;
  t.columns.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    t.columns[j].spec.name = "x" + std::to_string(j + 1);
    t.columns[j].spec.kind = ColumnKind::continuous;
    t.columns[j].numeric.resize(n);
  }
  const Date start = Date::from_civil(2006, 1, 1);
  const Date extraction = start.add_days(
      static_cast<std::int32_t>(std::llround(cfg.max_followup_years * 365.25)));
  t.assessment_date.resize(n);
  t.outcome_date.resize(n);
  t.censor_date.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const Date assess = start.add_days(static_cast<std::int32_t>(std::llround(stagger[i] * 365.25)));
    t.assessment_date[i] = assess;
    t.censor_date[i] = extraction;
    if (event_time[i] <= censor_years[i]) {
      auto offset = static_cast<std::int32_t>(std::llround(event_time[i] * 365.25));
      offset = std::clamp(offset, 1, extraction - assess);
      t.outcome_date[i] = assess.add_days(offset);
    }
    for (std::size_t j = 0; j < d; ++j)
      t.columns[j].numeric[i] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  if (cfg.missing_rate > 0.0) {
    Rng miss_rng(derive_seed(cfg.seed, 0x715517));
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (uniform01(miss_rng) < cfg.missing_rate)
          t.columns[j].numeric[i] = std::numeric_limits<double>::quiet_NaN();
  }

  SyntheticCohort out;
  out.table = std::move(t);
  out.true_log_hr = cfg.true_log_hr;
  out.weibull_shape = cfg.weibull_shape;
  out.weibull_scale = scale;
  out.true_linear_predictor = std::move(eta);
  return out;
}

// ---------------------------------------------------------------------------
// Derived history flags: 1 iff any source event date is present and falls
// strictly before the subject's assessment date.
// ---------------------------------------------------------------------------

inline CohortTable derive_prior_flag(const CohortTable& cohort,
                                     const std::vector<std::string>& source_columns,
                                     const std::string& name) {
  if (cohort.find_column(name) != nullptr)
    throw SchemaError("derive_prior_flag: column '" + name + "' already exists");
  std::vector<const Column*> sources;
  for (const auto& src : source_columns) {
    const Column* c = cohort.find_column(src);
    if (c == nullptr) throw SchemaError("derive_prior_flag: unknown column '" + src + "'");
    if (c->spec.kind != ColumnKind::event_date)
      throw SchemaError("derive_prior_flag: column '" + src + "' is not an event_date column");
    sources.push_back(c);
  }

  CohortTable out = cohort;
  Column flag;
  flag.spec.name = name;
  flag.spec.kind = ColumnKind::ordinal;
  flag.numeric.resize(cohort.n_rows(), 0.0);
  for (std::size_t i = 0; i < cohort.n_rows(); ++i) {
    for (const Column* c : sources) {
      if (c->date[i] && *c->date[i] < cohort.assessment_date[i]) {
        flag.numeric[i] = 1.0;
        break;
      }
    }
  }
  out.columns.push_back(std::move(flag));
  out.derived_columns.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing.
// ---------------------------------------------------------------------------

struct ColumnScaling {
  double mean = 0.0;
  double stddev = 1.0;  // identity scaling for one-hot columns
};

struct FeatureMatrix {
  Eigen::MatrixXd values;  // n x d, no missing cells
  std::vector<std::string> column_names;
  std::vector<ColumnScaling> scaling;

  std::size_t n_rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(values.cols()); }

  int column_index(const std::string& name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      if (column_names[j] == name) return static_cast<int>(j);
    return -1;
  }

  // Column subset preserving order of `names`.
  FeatureMatrix select(const std::vector<std::string>& names) const {
    FeatureMatrix out;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      const int j = column_index(names[k]);
      if (j < 0) throw SchemaError("unknown feature column '" + names[k] + "'");
      out.values.col(static_cast<Eigen::Index>(k)) = values.col(j);
      out.column_names.push_back(column_names[static_cast<std::size_t>(j)]);
      out.scaling.push_back(scaling[static_cast<std::size_t>(j)]);
    }
    return out;
  }

  // Row subset in the given order.
  FeatureMatrix take_rows(const std::vector<int>& rows) const {
    FeatureMatrix out;
    out.column_names = column_names;
    out.scaling = scaling;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
    return out;
  }
};

inline std::vector<SurvivalOutcome> take_outcomes(const std::vector<SurvivalOutcome>& y,
                                                  const std::vector<int>& rows) {
  std::vector<SurvivalOutcome> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[static_cast<std::size_t>(rows[i])];
  return out;
}

struct DroppedCategory {
  std::string column;
  std::string category;
  double frequency = 0.0;
};

struct PreprocessReport {
  std::size_t rows_excluded_missing = 0;
  std::size_t rows_excluded_prior = 0;  // outcome on/before assessment
  std::vector<DroppedCategory> columns_dropped_rare;
  std::vector<std::string> derived_columns;
};

struct PreprocessResult {
  FeatureMatrix features;
  std::vector<SurvivalOutcome> outcomes;
  PreprocessReport report;
};

// Pipeline order is fixed: exclude pre-existing outcomes, one-hot encode
// (missing gets its own category), prune rare one-hot columns, exclude rows
// with missing continuous/ordinal cells, then center/scale on the retained
// rows.
inline PreprocessResult preprocess(const CohortTable& cohort, double rare_threshold = 0.001) {
  const std::size_t n_input = cohort.n_rows();
  if (n_input == 0) throw ConfigError("preprocess: empty cohort");

  PreprocessResult res;
  res.report.derived_columns = cohort.derived_columns;

  // Outcome resolution + pre-existing exclusion.
  std::vector<std::size_t> stage1;  // rows surviving the prior-outcome exclusion
  std::vector<SurvivalOutcome> outcome1;
  for (std::size_t i = 0; i < n_input; ++i) {
    const Date assess = cohort.assessment_date[i];
    const Date censor = cohort.censor_date[i];
    const auto& outcome = cohort.outcome_date[i];
    if (outcome && *outcome <= assess) {
      ++res.report.rows_excluded_prior;
      continue;
    }
    if (censor <= assess && !outcome)
      throw ConfigError("preprocess: row " + std::to_string(i) +
                        " has censor_date on/before assessment_date");
    const bool event = outcome.has_value() && *outcome <= censor;
    const Date end = event ? *outcome : censor;
    const double duration = years_between(assess, end);
    if (!(duration > 0.0))
      throw ConfigError("preprocess: row " + std::to_string(i) + " has non-positive duration");
    stage1.push_back(i);
    outcome1.push_back({duration, event});
  }
  if (stage1.empty()) throw ConfigError("preprocess: all rows excluded");

  // Encode columns. One-hot groups carry an explicit "missing" category.
  struct Encoded {
    std::string name;
    bool one_hot = false;
    const Column* src = nullptr;
    int category = 0;      // index for one-hot; -2 encodes the missing column
    std::string label;
  };
  std::vector<Encoded> enc;
  for (const auto& col : cohort.columns) {
    switch (col.spec.kind) {
      case ColumnKind::continuous:
      case ColumnKind::ordinal:
        enc.push_back({col.spec.name, false, &col, 0, ""});
        break;
      case ColumnKind::categorical: {
        for (std::size_t c = 0; c < col.spec.categories.size(); ++c)
          enc.push_back({col.spec.name + "=" + col.spec.categories[c], true, &col,
                         static_cast<int>(c), col.spec.categories[c]});
        enc.push_back({col.spec.name + "=missing", true, &col, -2, "missing"});
        break;
      }
      case ColumnKind::event_date:
        break;  // raw dates never enter the feature matrix
    }
  }

  auto one_hot_value = [](const Encoded& e, std::size_t row) {
    const int cat = e.src->category[row];
    if (e.category == -2) return cat < 0 ? 1.0 : 0.0;
    return cat == e.category ? 1.0 : 0.0;
  };

  // Rare-category pruning happens before missing-row exclusion; frequencies
  // are measured over the rows present at this stage.
  std::vector<Encoded> kept;
  for (const auto& e : enc) {
    if (!e.one_hot) {
      kept.push_back(e);
      continue;
    }
    std::size_t ones = 0;
    for (std::size_t r : stage1) ones += one_hot_value(e, r) != 0.0 ? 1 : 0;
    const double freq = static_cast<double>(ones) / static_cast<double>(stage1.size());
    if (freq < rare_threshold)
      res.report.columns_dropped_rare.push_back({e.src->spec.name, e.label, freq});
    else
      kept.push_back(e);
  }

  // Exclude rows with missing continuous/ordinal cells.
  std::vector<std::size_t> retained;
  std::vector<SurvivalOutcome> outcomes;
  for (std::size_t k = 0; k < stage1.size(); ++k) {
    const std::size_t r = stage1[k];
    bool missing = false;
    for (const auto& e : kept) {
      if (!e.one_hot && std::isnan(e.src->numeric[r])) {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++res.report.rows_excluded_missing;
      continue;
    }
    retained.push_back(r);
    outcomes.push_back(outcome1[k]);
  }
  if (retained.empty()) throw ConfigError("preprocess: all rows excluded");

  // Assemble the matrix, then center/scale numeric columns on retained rows.
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(retained.size()),
                   static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const auto& e = kept[j];
    fm.column_names.push_back(e.name);
    for (std::size_t i = 0; i < retained.size(); ++i) {
      const std::size_t r = retained[i];
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          e.one_hot ? one_hot_value(e, r) : e.src->numeric[r];
    }
  }
  fm.scaling.resize(kept.size());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (kept[j].one_hot) continue;  // identity
    auto col = fm.values.col(static_cast<Eigen::Index>(j));
    const double m = col.mean();
    const double denom = static_cast<double>(retained.size()) - 1.0;
    const double sd = retained.size() > 1 ? std::sqrt((col.array() - m).square().sum() / denom)
                                          : 0.0;
    if (!(sd > 0.0))
      throw ConfigError("preprocess: column '" + kept[j].name +
                        "' has zero variance after exclusions");
    col = (col.array() - m) / sd;
    fm.scaling[j] = {m, sd};
  }

  res.features = std::move(fm);
  res.outcomes = std::move(outcomes);
  return res;
}

// ---------------------------------------------------------------------------
// Stratified splitting. The test set takes floor(test_fraction * n_s) of
// each outcome class; the validation set takes the same fraction of the
// remainder; leftovers go to train.
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;

  std::vector<int> train_and_validation() const {
    std::vector<int> out = train;
    out.insert(out.end(), validation.begin(), validation.end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline SplitIndices stratified_split(const std::vector<SurvivalOutcome>& y,
                                     double test_fraction = 0.25,
                                     double validation_fraction = 0.25,
                                     std::uint64_t seed = 0) {
  const std::size_t n = y.size();
  if (n < 8) throw ConfigError("stratified_split: need at least 8 rows");
  if (!(test_fraction > 0.0 && test_fraction < 1.0) ||
      !(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("stratified_split: fractions must lie in (0,1)");

  std::vector<int> strata[2];
  for (std::size_t i = 0; i < n; ++i) strata[y[i].event ? 1 : 0].push_back(static_cast<int>(i));
  if (strata[0].empty() || strata[1].empty())
    throw ConfigError("stratified_split: both event classes must be present");

  Rng rng(derive_seed(seed, 0x5712A7));
  SplitIndices out;
  for (auto& stratum : strata) {
    std::shuffle(stratum.begin(), stratum.end(), rng);
    const auto n_s = stratum.size();
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n_s)));
    const auto n_rest = n_s - n_test;
    const auto n_val =
        static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n_rest)));
    if (n_test == 0 || n_val == 0 || n_rest - n_val == 0)
      throw ConfigError("stratified_split: an outcome class is too small to appear in every split");
    for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(stratum[i]);
    for (std::size_t i = n_test; i < n_test + n_val; ++i) out.validation.push_back(stratum[i]);
    for (std::size_t i = n_test + n_val; i < n_s; ++i) out.train.push_back(stratum[i]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace survkit::cohort
