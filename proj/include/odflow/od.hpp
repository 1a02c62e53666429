#pragma once

// Origin-destination matrices: binning by trip end time, time-of-day
// aggregation, frequent-user bias correction and population upscaling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odflow/cdr.hpp"
#include "odflow/error.hpp"
#include "odflow/io.hpp"
#include "odflow/places.hpp"
#include "odflow/time.hpp"

namespace odflow {

enum class MatrixKind { count, estimate };

inline std::string_view matrix_kind_name(MatrixKind k) {
  return k == MatrixKind::count ? "COUNT" : "ESTIMATE";
}

inline MatrixKind parse_matrix_kind(std::string_view s) {
  if (s == "COUNT") return MatrixKind::count;
  if (s == "ESTIMATE") return MatrixKind::estimate;
  fail(ErrorKind::input, "unknown matrix kind '" + std::string(s) + "'");
}

/// Half-open [start, end).
struct TimeWindow {
  Timestamp start = 0;
  Timestamp end = 1;

  bool contains(Timestamp t) const { return t >= start && t < end; }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Dense D x D matrix, row = origin, column = destination.
class ODMatrix {
 public:
  ODMatrix() = default;
  ODMatrix(std::size_t d, TimeWindow window, std::string label = {},
           MatrixKind kind = MatrixKind::count)
      : d_(d), window_(window), label_(std::move(label)), kind_(kind),
        cells_(d * d, 0.0) {
    if (!(window.start < window.end))
      fail(ErrorKind::internal, "OD window must satisfy start < end");
  }

  std::size_t dim() const { return d_; }
  const TimeWindow& window() const { return window_; }
  const std::string& label() const { return label_; }
  MatrixKind kind() const { return kind_; }
  void set_label(std::string label) { label_ = std::move(label); }
  void set_kind(MatrixKind k) { kind_ = k; }
  void set_window(TimeWindow w) { window_ = w; }

  double& operator()(std::size_t i, std::size_t k) { return cells_[i * d_ + k]; }
  double operator()(std::size_t i, std::size_t k) const { return cells_[i * d_ + k]; }
  std::span<double> cells() { return cells_; }
  std::span<const double> cells() const { return cells_; }

  double total() const {
    double s = 0.0;
    for (double v : cells_) s += v;
    return s;
  }
  double diagonal_total() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i) s += (*this)(i, i);
    return s;
  }
  /// Off-diagonal sum; intra-district cells are excluded from analyses.
  double inter_district_total() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t k = 0; k < d_; ++k)
        if (i != k) s += (*this)(i, k);
    return s;
  }

  ODMatrix& operator+=(const ODMatrix& o) {
    if (o.d_ != d_) fail(ErrorKind::internal, "OD dimension mismatch");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += o.cells_[i];
    return *this;
  }
  void scale(double c) {
    for (double& v : cells_) v *= c;
  }

 private:
  std::size_t d_ = 0;
  TimeWindow window_;
  std::string label_;
  MatrixKind kind_ = MatrixKind::count;
  std::vector<double> cells_;
};

/// Contiguous equal-width windows starting at `start`.
struct WindowGrid {
  Timestamp start = 0;
  Timestamp step = kSecondsPerHour;
  std::size_t count = 0;

  Timestamp end() const { return start + step * static_cast<Timestamp>(count); }
  TimeWindow window(std::size_t i) const {
    const Timestamp s = start + step * static_cast<Timestamp>(i);
    return {s, s + step};
  }
  std::optional<std::size_t> index_of(Timestamp t) const {
    if (t < start || t >= end()) return std::nullopt;
    return static_cast<std::size_t>((t - start) / step);
  }

  /// Whole local days covering [t_min, t_max].
  static WindowGrid covering_days(Timestamp t_min, Timestamp t_max,
                                  Timestamp step, const TimeZone& tz) {
    check_step(step);
    const Timestamp s = tz.local_midnight(t_min);
    const Timestamp e = tz.local_midnight(t_max) + kSecondsPerDay;
    return {s, step, static_cast<std::size_t>((e - s) / step)};
  }

  /// [t_start, t_end) which must both sit on step boundaries of local time.
  static WindowGrid between(Timestamp t_start, Timestamp t_end, Timestamp step,
                            const TimeZone& tz) {
    check_step(step);
    if (!(t_start < t_end)) fail(ErrorKind::config, "study window must satisfy start < end");
    if (tz.seconds_of_day(t_start) % step != 0 || tz.seconds_of_day(t_end) % step != 0)
      fail(ErrorKind::config, "study window must align with the OD granularity");
    return {t_start, step, static_cast<std::size_t>((t_end - t_start) / step)};
  }

  static void check_step(Timestamp step) {
    if (step <= 0 || kSecondsPerDay % step != 0)
      fail(ErrorKind::config, "granularity must divide 24 hours");
  }
};

struct BinResult {
  std::vector<ODMatrix> matrices;
  std::size_t binned = 0;
  std::size_t none_district = 0;
  std::size_t out_of_window = 0;
};

/// Counts each item in the window containing its end time. `endpoints(item)`
/// yields {origin, dest, end_t}.
template <typename Item, typename Endpoints>
BinResult bin_by_end_time(std::span<const Item> items, std::size_t d,
                          const WindowGrid& grid, const std::string& label,
                          Endpoints&& endpoints) {
  BinResult r;
  r.matrices.reserve(grid.count);
  for (std::size_t w = 0; w < grid.count; ++w)
    r.matrices.emplace_back(d, grid.window(w), label, MatrixKind::count);
  for (const Item& it : items) {
    const auto [o, dst, end_t] = endpoints(it);
    if (o == kNoDistrict || dst == kNoDistrict) {
      ++r.none_district;
      continue;
    }
    if (o < 0 || dst < 0 || static_cast<std::size_t>(o) >= d ||
        static_cast<std::size_t>(dst) >= d)
      fail(ErrorKind::input, "district id out of range while binning");
    const auto w = grid.index_of(end_t);
    if (!w) {
      ++r.out_of_window;
      continue;
    }
    r.matrices[*w](o, dst) += 1.0;
    ++r.binned;
  }
  return r;
}

inline BinResult bin_trips(std::span<const Trip> trips, std::size_t d,
                           const WindowGrid& grid,
                           const std::string& label = "cdr-raw") {
  return bin_by_end_time(trips, d, grid, label, [](const Trip& t) {
    return std::tuple{t.origin_district, t.dest_district, t.end_t};
  });
}

// Aggregation ------------------------------------------------------------------

enum class Normalization { total, per_day };

/// Selects windows by the local hour of their start, optionally workdays only.
struct WindowFilter {
  int start_hour = 0;  // inclusive
  int end_hour = 24;   // exclusive
  bool workdays_only = false;
  std::set<std::int64_t> holidays;  // local days since epoch

  bool selects(const TimeWindow& w, const TimeZone& tz) const {
    const int h = tz.hour_of_day(w.start);
    if (h < start_hour || h >= end_hour) return false;
    if (!workdays_only) return true;
    return tz.is_weekday(w.start) && !holidays.contains(tz.local_day(w.start));
  }
};

inline std::size_t count_selected_days(std::span<const ODMatrix> ms,
                                       const WindowFilter& f, const TimeZone& tz) {
  std::set<std::int64_t> days;
  for (const auto& m : ms)
    if (f.selects(m.window(), tz)) days.insert(tz.local_day(m.window().start));
  return days.size();
}

/// Elementwise sum over selected windows; PER_DAY divides by the number of
/// distinct local days among them.
inline ODMatrix aggregate(std::span<const ODMatrix> ms, const WindowFilter& f,
                          Normalization norm, const TimeZone& tz = {}) {
  if (ms.empty()) fail(ErrorKind::input, "nothing to aggregate");
  const MatrixKind kind = ms.front().kind();
  const std::size_t d = ms.front().dim();
  Timestamp lo = ms.front().window().start, hi = ms.back().window().end;
  bool any = false;
  for (const auto& m : ms) {
    if (m.kind() != kind) fail(ErrorKind::input, "cannot aggregate COUNT with ESTIMATE");
    if (m.dim() != d) fail(ErrorKind::input, "cannot aggregate matrices of different size");
    if (f.selects(m.window(), tz)) {
      if (!any) lo = m.window().start;
      hi = any ? std::max(hi, m.window().end) : m.window().end;
      any = true;
    }
  }
  ODMatrix out(d, {lo, hi}, ms.front().label(), kind);
  for (const auto& m : ms)
    if (f.selects(m.window(), tz)) out += m;
  if (norm == Normalization::per_day) {
    const std::size_t days = count_selected_days(ms, f, tz);
    if (days > 0) out.scale(1.0 / static_cast<double>(days));
  }
  return out;
}

// Bias correction ----------------------------------------------------------------

struct CorrectionFactors {
  double phi = 0.0;
  std::vector<double> phi_effective;
  std::vector<DistrictId> substituted;  // districts where phi_i := phi

  double factor(std::size_t i, std::size_t k) const {
    return std::sqrt((phi * phi) / (phi_effective[i] * phi_effective[k]));
  }
};

/// Districts with phi_i = 0 (including n_i = 0) fall back to the overall
/// share, which makes their factor neutral.
inline CorrectionFactors correction_factors(const DistrictShares& s) {
  if (!(s.phi_overall > 0.0))
    fail(ErrorKind::input, "bias correction impossible: no frequent-user places (phi = 0)");
  CorrectionFactors f;
  f.phi = s.phi_overall;
  f.phi_effective = s.phi;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.empty[i] || !(s.phi[i] > 0.0)) {
      f.phi_effective[i] = f.phi;
      f.substituted.push_back(static_cast<DistrictId>(i));
    }
  }
  return f;
}

/// A'_ik = A_ik * sqrt(phi^2 / (phi_i * phi_k)).
inline ODMatrix correct_bias(const ODMatrix& a, const CorrectionFactors& f) {
  if (f.phi_effective.size() != a.dim())
    fail(ErrorKind::internal, "correction factors do not match matrix size");
  ODMatrix out = a;
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t k = 0; k < a.dim(); ++k) out(i, k) = a(i, k) * f.factor(i, k);
  return out;
}

inline ODMatrix correct_bias(const ODMatrix& a, const DistrictShares& s) {
  return correct_bias(a, correction_factors(s));
}

struct ScalingConfig {
  double market_share = 0.453;
  double penetration = 1.44;
  double frequent_share = 0.34;

  void validate() const {
    for (double v : {market_share, penetration, frequent_share})
      if (!(v > 0.0 && v <= 3.0))
        fail(ErrorKind::config, "scaling factors must lie in (0, 3]");
  }
  double divisor() const { return market_share * penetration * frequent_share; }
};

/// Divides by market share x penetration x frequent share; result is ESTIMATE.
inline ODMatrix upscale(const ODMatrix& a, const ScalingConfig& cfg) {
  cfg.validate();
  ODMatrix out = a;
  out.scale(1.0 / cfg.divisor());
  out.set_kind(MatrixKind::estimate);
  return out;
}

/// Subscriber base and penetration implied by one provider's subscriber count.
struct SubscriberArithmetic {
  double total_subscribers = 0.0;
  double penetration = 0.0;
};

inline SubscriberArithmetic subscriber_arithmetic(double provider_subscribers,
                                                  double market_share,
                                                  double population) {
  if (!(market_share > 0.0) || !(population > 0.0))
    fail(ErrorKind::config, "market share and population must be positive");
  const double total = provider_subscribers / market_share;
  return {total, total / population};
}

// Files ---------------------------------------------------------------------------

inline std::string_view normalization_name(std::optional<Normalization> n) {
  if (!n) return "none";
  return *n == Normalization::total ? "total" : "per_day";
}

/// Sidecar path: same stem, `.json` extension.
inline std::filesystem::path od_sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline constexpr std::string_view kOdHeader =
    "origin_district,dest_district,window_start,window_end,count";

/// Writes nonzero cells of every matrix (17 significant digits) plus a JSON
/// sidecar with label, kind, D, normalization and the full window list.
inline void write_od_series(const std::filesystem::path& csv,
                            std::span<const ODMatrix> ms,
                            std::optional<Normalization> norm = std::nullopt,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  if (ms.empty()) fail(ErrorKind::internal, "no matrices to write");
  {
    FileWriter w(csv);
    auto& b = w.buffer();
    b.append(kOdHeader).push_back('\n');
    for (const auto& m : ms) {
      for (std::size_t i = 0; i < m.dim(); ++i)
        for (std::size_t k = 0; k < m.dim(); ++k) {
          const double v = m(i, k);
          if (v == 0.0) continue;
          append_int(b, i);
          b += ',';
          append_int(b, k);
          b += ',';
          append_int(b, m.window().start);
          b += ',';
          append_int(b, m.window().end);
          b += ',';
          append_double17(b, v);
          b += '\n';
        }
      w.maybe_flush();
    }
    w.close();
  }
  nlohmann::json meta = extra;
  meta["label"] = ms.front().label();
  meta["kind"] = matrix_kind_name(ms.front().kind());
  meta["D"] = ms.front().dim();
  meta["normalization"] = normalization_name(norm);
  auto windows = nlohmann::json::array();
  for (const auto& m : ms) windows.push_back({m.window().start, m.window().end});
  meta["windows"] = windows;
  write_text_file(od_sidecar_path(csv), meta.dump(2) + "\n");
}

struct ODSeries {
  std::vector<ODMatrix> matrices;
  nlohmann::json meta;
};

inline ODSeries read_od_series(const std::filesystem::path& csv) {
  ODSeries s;
  {
    std::ifstream in(od_sidecar_path(csv));
    if (!in)
      fail(ErrorKind::input_missing,
           "missing OD sidecar " + od_sidecar_path(csv).string());
    try {
      in >> s.meta;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::input, std::string("malformed OD sidecar: ") + e.what());
    }
  }
  std::size_t d = 0;
  MatrixKind kind{};
  std::string label;
  try {
    d = s.meta.at("D").get<std::size_t>();
    kind = parse_matrix_kind(s.meta.at("kind").get<std::string>());
    label = s.meta.at("label").get<std::string>();
    for (const auto& w : s.meta.at("windows"))
      s.matrices.emplace_back(d, TimeWindow{w.at(0).get<Timestamp>(), w.at(1).get<Timestamp>()},
                              label, kind);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, std::string("malformed OD sidecar: ") + e.what());
  }
  auto in = open_input(csv.string(), "OD");
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) || line != kOdHeader)
    fail(ErrorKind::input, "OD file header mismatch in " + csv.string());
  std::array<std::string_view, 5> f;
  std::size_t lineno = 1, cursor = 0;
  while (reader.next(line)) {
    ++lineno;
    std::optional<std::size_t> i, k;
    std::optional<Timestamp> ws, we;
    std::optional<double> v;
    if (!split_fields(line, f) || !(i = parse_int<std::size_t>(f[0])) ||
        !(k = parse_int<std::size_t>(f[1])) || !(ws = parse_int<Timestamp>(f[2])) ||
        !(we = parse_int<Timestamp>(f[3])) || !(v = parse_double(f[4])) || *i >= d ||
        *k >= d)
      fail(ErrorKind::input, "malformed OD line " + std::to_string(lineno));
    if (kind == MatrixKind::count && *v < 0.0)
      fail(ErrorKind::input, "negative cell in COUNT matrix at line " + std::to_string(lineno));
    const TimeWindow w{*ws, *we};
    // Rows are grouped by window in file order; fall back to a search.
    if (cursor >= s.matrices.size() || !(s.matrices[cursor].window() == w)) {
      auto it = std::find_if(s.matrices.begin(), s.matrices.end(),
                             [&](const ODMatrix& m) { return m.window() == w; });
      if (it == s.matrices.end())
        fail(ErrorKind::input, "OD line " + std::to_string(lineno) + " has unknown window");
      cursor = static_cast<std::size_t>(it - s.matrices.begin());
    }
    s.matrices[cursor](*i, *k) += *v;
  }
  return s;
}

}  // namespace odflow
