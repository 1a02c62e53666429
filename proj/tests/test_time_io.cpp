#include <gtest/gtest.h>

#include <sstream>
#include <stdexcept>

#include "odflow/io.hpp"
#include "odflow/parallel.hpp"
#include "odflow/time.hpp"

using namespace odflow;

TEST(Rfc3339, ParsesZuluOffsetsAndFractions) {
  EXPECT_EQ(parse_rfc3339("1970-01-01T00:00:00Z"), 0);
  EXPECT_EQ(parse_rfc3339("2011-04-04T00:00:00Z"), 1301875200);
  EXPECT_EQ(parse_rfc3339("2011-04-04T08:00:00+08:00"), 1301875200);
  EXPECT_EQ(parse_rfc3339("2011-04-03T19:30:00-04:30"), 1301875200);
  EXPECT_EQ(parse_rfc3339("2011-04-04T00:00:00.999Z"), 1301875200);
}

TEST(Rfc3339, RejectsGarbage) {
  for (const char* s : {"", "2011-04-04", "2011-13-01T00:00:00Z", "2011-04-04T25:00:00Z",
                        "2011-04-04T00:00:00", "2011-02-30T00:00:00Z"})
    EXPECT_FALSE(parse_rfc3339(s).has_value()) << s;
}

TEST(Rfc3339, FormatRoundTrip) {
  for (Timestamp t : {Timestamp{0}, Timestamp{1301875200}, Timestamp{951782400}, Timestamp{-86401}})
    EXPECT_EQ(parse_rfc3339(format_rfc3339(t)), t);
  EXPECT_EQ(format_rfc3339(1301875200), "2011-04-04T00:00:00Z");
}

TEST(Timestamp, UnixAndAny) {
  EXPECT_EQ(parse_timestamp("1301875200", TimestampFormat::unix_seconds), 1301875200);
  EXPECT_FALSE(parse_timestamp("12x", TimestampFormat::unix_seconds).has_value());
  EXPECT_EQ(parse_timestamp_any("2011-04-04T00:00:00Z"), 1301875200);
  EXPECT_EQ(parse_timestamp_any("1301875200"), 1301875200);
  EXPECT_THROW(parse_timestamp_format("iso"), Error);
}

TEST(TimeZone, SingaporeCalendar) {
  const TimeZone sg = TimeZone::parse("Asia/Singapore");
  // 1970-01-01 was a Thursday; 2011-04-04 is 15068 days later, 15068 % 7 = 4 -> Monday.
  const Timestamp local_midnight_utc = 1301875200 - 8 * 3600;
  EXPECT_EQ(sg.weekday(local_midnight_utc), 1u);
  EXPECT_TRUE(sg.is_weekday(local_midnight_utc));
  EXPECT_EQ(sg.hour_of_day(local_midnight_utc), 0);
  EXPECT_EQ(sg.hour_of_day(local_midnight_utc - 1), 23);
  EXPECT_EQ(sg.weekday(local_midnight_utc - 1), 0u);  // Sunday night
  EXPECT_EQ(sg.local_midnight(local_midnight_utc + 5000), local_midnight_utc);
  EXPECT_EQ(sg.local_day(local_midnight_utc), 15068);
}

TEST(TimeZone, OffsetsAndErrors) {
  EXPECT_EQ(TimeZone::parse("+05:30").offset_s(), 19800);
  EXPECT_EQ(TimeZone::parse("-03:00").offset_s(), -10800);
  EXPECT_EQ(TimeZone::parse("UTC").offset_s(), 0);
  try {
    TimeZone::parse("Europe/Berlin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Dates, ParseDate) {
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(parse_date("2011-04-04"), 15068);
  EXPECT_FALSE(parse_date("2011-4-4").has_value());
}

TEST(LineReader, HandlesCrLfAndMissingFinalNewline) {
  std::istringstream in("a,b\r\nc,d\ne,f");
  LineReader r(in, 4);  // tiny block forces refills across lines
  std::string_view line;
  std::vector<std::string> got;
  while (r.next(line)) got.emplace_back(line);
  EXPECT_EQ(got, (std::vector<std::string>{"a,b", "c,d", "e,f"}));
  EXPECT_EQ(r.bytes(), 12u);
}

TEST(Fields, SplitExactCount) {
  std::array<std::string_view, 3> f;
  EXPECT_TRUE(split_fields("a,b,c", f));
  EXPECT_EQ(f[2], "c");
  EXPECT_FALSE(split_fields("a,b", f));
  EXPECT_FALSE(split_fields("a,b,c,d", f));
  EXPECT_TRUE(split_fields(",,", f));
}

TEST(Numbers, ParseRejectsJunk) {
  EXPECT_EQ(parse_double("1.25"), 1.25);
  EXPECT_EQ(parse_double("-0.5e1"), -5.0);
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_FALSE(parse_double("1.2.3").has_value());
  EXPECT_FALSE(parse_double("abc").has_value());
  EXPECT_FALSE(parse_double("nan").has_value());
  EXPECT_EQ(parse_int<int>("42"), 42);
  EXPECT_FALSE(parse_int<int>("4x").has_value());
}

TEST(Numbers, ShortestAndSeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 450.88, 1e-300, 123456789.123456789}) {
    std::string a, b;
    append_double(a, v);
    append_double17(b, v);
    EXPECT_EQ(parse_double(a), v);
    EXPECT_EQ(parse_double(b), v);
  }
}

TEST(Tokens, InternIsStable) {
  TokenTable t;
  EXPECT_EQ(t.intern("u1"), 0u);
  EXPECT_EQ(t.intern("u2"), 1u);
  EXPECT_EQ(t.intern("u1"), 0u);
  EXPECT_EQ(t.find("u2"), 1u);
  EXPECT_FALSE(t.find("u3").has_value());
  EXPECT_EQ(t.name(1), "u2");
}

TEST(Hash, Fnv1aPublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Parallel, OrderIndependentOfWorkers) {
  auto f = [](std::size_t i) { return i * i + 1; };
  const auto a = parallel_map(1000, 1, f);
  const auto b = parallel_map(1000, 7, f);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[999], 999u * 999u + 1);
  EXPECT_TRUE(parallel_map(0, 4, f).empty());
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_map(100, 4,
                            [](std::size_t i) -> int {
                              if (i == 57) throw std::runtime_error("boom");
                              return 0;
                            }),
               std::runtime_error);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorKind::internal), 1);
  EXPECT_EQ(exit_code_for(ErrorKind::input), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::input_missing), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::config), 3);
  EXPECT_EQ(error_kind_name(ErrorKind::input_missing), "input-missing");
}
