#include <catch2/catch_amalgamated.hpp>

#include "survkit/common.hpp"
#include "survkit/csv.hpp"

#include <sstream>

using namespace survkit;

TEST_CASE("ISO date round trip", "[common]") {
  const char* samples[] = {"1970-01-01", "2006-03-13", "2020-09-30", "2000-02-29", "1999-12-31"};
  for (const char* s : samples) REQUIRE(Date::parse_iso(s).iso() == s);
  REQUIRE(Date::parse_iso("1970-01-01").days_since_epoch() == 0);
  REQUIRE(Date::parse_iso("1970-01-02") - Date::parse_iso("1970-01-01") == 1);
  REQUIRE(Date::parse_iso("2020-09-30") > Date::parse_iso("2006-03-13"));
}

TEST_CASE("malformed dates are rejected", "[common]") {
  REQUIRE_THROWS_AS(Date::parse_iso("2020-13-01"), ParseError);
  REQUIRE_THROWS_AS(Date::parse_iso("2021-02-29"), ParseError);
  REQUIRE_THROWS_AS(Date::parse_iso("2020/01/01"), ParseError);
  REQUIRE_THROWS_AS(Date::parse_iso("20200101"), ParseError);
  REQUIRE_THROWS_AS(Date::parse_iso(""), ParseError);
}

TEST_CASE("years_between uses exact day counts over 365.25", "[common]") {
  const Date a = Date::parse_iso("2006-01-01");
  const Date b = a.add_days(731);
  REQUIRE(years_between(a, b) == Catch::Approx(731.0 / 365.25));
}

TEST_CASE("step function evaluation is right-continuous", "[common]") {
  StepFunction f;
  f.initial = 1.0;
  f.times = {1.0, 2.0, 3.0};
  f.values = {0.9, 0.5, 0.2};
  REQUIRE(f(0.0) == 1.0);
  REQUIRE(f(0.999) == 1.0);
  REQUIRE(f(1.0) == 0.9);
  REQUIRE(f(1.5) == 0.9);
  REQUIRE(f(2.0) == 0.5);
  REQUIRE(f(3.0) == 0.2);
  REQUIRE(f(100.0) == 0.2);
}

TEST_CASE("percentile interpolates linearly", "[common]") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  REQUIRE(percentile(v, 0.0) == 1.0);
  REQUIRE(percentile(v, 1.0) == 4.0);
  REQUIRE(percentile(v, 0.5) == Catch::Approx(2.5));
  REQUIRE(percentile(v, 0.25) == Catch::Approx(1.75));
  std::vector<double> one = {7.0};
  REQUIRE(percentile(one, 0.3) == 7.0);
}

TEST_CASE("rng helpers are deterministic", "[common]") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(uniform01(a) == uniform01(b));
  }
  Rng c(42);
  double mean_acc = 0.0;
  for (int i = 0; i < 10000; ++i) mean_acc += normal01(c);
  REQUIRE(std::abs(mean_acc / 10000.0) < 0.05);
}

TEST_CASE("csv round trip with quoting", "[common]") {
  std::ostringstream out;
  std::vector<std::string> row1 = {"a", "b,c", "d\"e", "f\ng"};
  std::vector<std::string> row2 = {"", "plain", "", ""};
  csv::write_row(out, row1);
  csv::write_row(out, row2);
  std::istringstream in(out.str());
  auto rows = csv::read(in);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0] == row1);
  REQUIRE(rows[1] == row2);
}

TEST_CASE("csv parses CRLF and missing trailing newline", "[common]") {
  std::istringstream in("h1,h2\r\n1,2\r\n3,4");
  auto rows = csv::read(in);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[2] == std::vector<std::string>{"3", "4"});
}

TEST_CASE("unterminated quote is a parse error", "[common]") {
  std::istringstream in("a,\"bc");
  REQUIRE_THROWS_AS(csv::read(in), ParseError);
}

TEST_CASE("format_double round-trips exactly", "[common]") {
  for (double v : {0.1, 1.0 / 3.0, 12345.6789, 1e-12, 0.0, -2.5}) {
    REQUIRE(std::stod(format_double(v)) == v);
  }
}
