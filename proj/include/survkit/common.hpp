// survkit: survival-risk modeling toolkit.
// Shared basics: error types, survival outcomes, calendar dates, step
// functions, deterministic RNG helpers and small statistics utilities.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace survkit {

// ---------------------------------------------------------------------------
// Errors. ConfigError and subclasses are user/config problems (CLI exit 2);
// NumericError covers model/numeric failures (CLI exit 3).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Survival outcome: right-censored duration in years.
// ---------------------------------------------------------------------------

struct SurvivalOutcome {
  double duration = 0.0;  // years, finite and > 0
  bool event = false;     // false = right-censored
};

inline std::size_t count_events(const std::vector<SurvivalOutcome>& y) {
  std::size_t n = 0;
  for (const auto& o : y) n += o.event ? 1 : 0;
  return n;
}

inline double max_duration(const std::vector<SurvivalOutcome>& y) {
  double m = 0.0;
  for (const auto& o : y) m = std::max(m, o.duration);
  return m;
}

// ---------------------------------------------------------------------------
// Calendar date: days since 1970-01-01, proleptic Gregorian calendar.
// ISO-8601 (YYYY-MM-DD) parsing and formatting; no locale involvement.
// ---------------------------------------------------------------------------

class Date {
 public:
  Date() = default;
  explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static Date from_civil(int year, int month, int day) {
    year -= month <= 2;
    const int era = (year >= 0 ? year : year - 399) / 400;
    const int yoe = year - era * 400;
    const int doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date(static_cast<std::int32_t>(era) * 146097 + doe - 719468);
  }

  // Parses strict YYYY-MM-DD. Throws ParseError on malformed input.
  static Date parse_iso(const std::string& text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
      throw ParseError("malformed date '" + text + "' (expected YYYY-MM-DD)");
    auto num = [&](int lo, int hi) {
      int v = 0;
      auto [p, ec] = std::from_chars(text.data() + lo, text.data() + hi, v);
      if (ec != std::errc() || p != text.data() + hi)
        throw ParseError("malformed date '" + text + "' (expected YYYY-MM-DD)");
      return v;
    };
    const int y = num(0, 4), m = num(5, 7), d = num(8, 10);
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m))
      throw ParseError("malformed date '" + text + "' (out-of-range field)");
    return from_civil(y, m, d);
  }

  void civil(int& year, int& month, int& day) const {
    std::int64_t z = days_ + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
  }

  std::string iso() const {
    int y, m, d;
    civil(y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
  }

  std::int32_t days_since_epoch() const { return days_; }

  Date add_days(std::int32_t d) const { return Date(days_ + d); }

  friend auto operator<=>(Date a, Date b) = default;
  friend std::int32_t operator-(Date a, Date b) { return a.days_ - b.days_; }

 private:
  static bool is_leap(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }
  static int days_in_month(int y, int m) {
    static constexpr int lens[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : lens[m - 1];
  }

  std::int32_t days_ = 0;
};

// Duration between two dates expressed in years (exact day count / 365.25).
inline double years_between(Date from, Date to) { return (to - from) / 365.25; }

// ---------------------------------------------------------------------------
// Right-continuous piecewise-constant function. `values[i]` holds on
// [times[i], times[i+1]); `initial` holds before times[0]. Times strictly
// increasing.
// ---------------------------------------------------------------------------

struct StepFunction {
  double initial = 0.0;
  std::vector<double> times;
  std::vector<double> values;

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  double last_time() const { return times.empty() ? 0.0 : times.back(); }
  double last_value() const { return values.empty() ? initial : values.back(); }
};

// ---------------------------------------------------------------------------
// Deterministic RNG helpers. All randomness in the library flows through
// mt19937_64 seeded explicitly; sub-streams are derived with splitmix64 so
// that parallel and sequential schedules agree.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt + 0x51ed2701d4bc0f35ULL));
}

// Uniform in [0, 1), 53-bit resolution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller (no cached second value, keeps streams
// position-independent).
inline double normal01(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Uniform integer in [lo, hi] without modulo bias concerns at these scales.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

// ---------------------------------------------------------------------------
// Small statistics helpers.
// ---------------------------------------------------------------------------

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Empirical quantile with linear interpolation between order statistics.
// `sorted` must be ascending; q in [0, 1].
inline double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw NumericError("percentile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace survkit
