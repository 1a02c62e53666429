#pragma once

// Call-detail-record ingest, per-user inter-event statistics, frequent-user
// selection and trip extraction from dwell clusters.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odflow/error.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"
#include "odflow/time.hpp"

namespace odflow {

using UserIndex = std::uint32_t;

struct EventRecord {
  UserIndex user = 0;
  Timestamp t = 0;
  GeoPoint pos;
};

// Towers ----------------------------------------------------------------------

/// `tower_id,lon,lat` lookup used by tower-mode CDR files.
struct TowerTable {
  TokenTable ids;
  std::vector<GeoPoint> positions;

  std::optional<GeoPoint> find(std::string_view id) const {
    auto i = ids.find(id);
    if (!i) return std::nullopt;
    return positions[*i];
  }
};

inline TowerTable parse_towers(std::istream& in) {
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) || line != "tower_id,lon,lat")
    fail(ErrorKind::input, "tower file header must be 'tower_id,lon,lat'");
  TowerTable table;
  std::array<std::string_view, 3> f;
  std::size_t lineno = 1;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    std::optional<double> lon, lat;
    if (!split_fields(line, f) || f[0].empty() || !(lon = parse_double(f[1])) ||
        !(lat = parse_double(f[2])) || !is_valid({*lon, *lat}))
      fail(ErrorKind::input, "malformed tower line " + std::to_string(lineno));
    if (table.ids.find(f[0]))
      fail(ErrorKind::input, "duplicate tower_id " + std::string(f[0]));
    table.ids.intern(f[0]);
    table.positions.push_back({*lon, *lat});
  }
  return table;
}

inline TowerTable load_towers(const std::string& path) {
  auto in = open_input(path, "tower");
  return parse_towers(in);
}

// Parsing ---------------------------------------------------------------------

struct CdrSchema {
  TimestampFormat ts_format = TimestampFormat::unix_seconds;
  double max_malformed_fraction = 0.01;
  const TowerTable* towers = nullptr;
};

struct CdrDiagnostics {
  std::uint64_t data_lines = 0;
  std::uint64_t records = 0;
  std::uint64_t malformed = 0;
  std::uint64_t bytes = 0;
  bool tower_mode = false;
};

struct CdrLog {
  TokenTable users;
  std::vector<EventRecord> events;  // file order
  CdrDiagnostics diag;
};

/// Header `user_id,timestamp,lon,lat`, or `user_id,timestamp,tower_id` when
/// the schema carries a tower table. Malformed lines are counted and skipped;
/// exceeding the configured fraction is fatal.
inline CdrLog parse_cdr(std::istream& in, const CdrSchema& schema) {
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line)) fail(ErrorKind::input, "CDR file has no header");
  CdrLog log;
  if (line == "user_id,timestamp,tower_id") {
    if (!schema.towers)
      fail(ErrorKind::input, "tower-mode CDR file requires a tower file");
    log.diag.tower_mode = true;
  } else if (line != "user_id,timestamp,lon,lat") {
    fail(ErrorKind::input, "unreadable CDR header '" + std::string(line) + "'");
  }

  std::array<std::string_view, 4> f4;
  std::array<std::string_view, 3> f3;
  while (reader.next(line)) {
    ++log.diag.data_lines;
    std::optional<Timestamp> t;
    GeoPoint pos;
    std::string_view user;
    bool ok = false;
    if (log.diag.tower_mode) {
      if (split_fields(line, f3) && !f3[0].empty() &&
          (t = parse_timestamp(f3[1], schema.ts_format))) {
        if (auto p = schema.towers->find(f3[2])) {
          pos = *p;
          user = f3[0];
          ok = true;
        }
      }
    } else if (split_fields(line, f4) && !f4[0].empty() &&
               (t = parse_timestamp(f4[1], schema.ts_format))) {
      auto lon = parse_double(f4[2]);
      auto lat = parse_double(f4[3]);
      if (lon && lat && is_valid({*lon, *lat})) {
        pos = {*lon, *lat};
        user = f4[0];
        ok = true;
      }
    }
    if (!ok) {
      ++log.diag.malformed;
      continue;
    }
    log.events.push_back({log.users.intern(user), *t, pos});
  }
  log.diag.records = log.events.size();
  log.diag.bytes = reader.bytes();
  if (log.diag.data_lines > 0 &&
      static_cast<double>(log.diag.malformed) >
          schema.max_malformed_fraction * static_cast<double>(log.diag.data_lines))
    fail(ErrorKind::input,
         "too many malformed CDR lines: " + std::to_string(log.diag.malformed) +
             " of " + std::to_string(log.diag.data_lines));
  return log;
}

inline CdrLog read_cdr_file(const std::string& path, const CdrSchema& schema) {
  auto in = open_input(path, "CDR");
  return parse_cdr(in, schema);
}

// Per-user grouping -------------------------------------------------------------

/// Events bucketed by user (first-seen order), each bucket sorted by time with
/// ties kept in file order.
struct UserEvents {
  TokenTable users;
  std::vector<EventRecord> events;
  std::vector<std::size_t> offsets;  // users.size() + 1 entries

  std::size_t user_count() const { return users.size(); }
  std::span<const EventRecord> of(UserIndex u) const {
    return std::span<const EventRecord>(events).subspan(
        offsets[u], offsets[u + 1] - offsets[u]);
  }
};

inline UserEvents group_by_user(TokenTable users,
                                std::vector<EventRecord> events) {
  UserEvents g;
  const std::size_t n_users = users.size();
  g.users = std::move(users);
  g.offsets.assign(n_users + 1, 0);
  for (const auto& e : events) ++g.offsets[e.user + 1];
  for (std::size_t u = 0; u < n_users; ++u) g.offsets[u + 1] += g.offsets[u];
  g.events.resize(events.size());
  {
    std::vector<std::size_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
    for (const auto& e : events) g.events[cursor[e.user]++] = e;
  }
  events.clear();
  events.shrink_to_fit();
  for (std::size_t u = 0; u < n_users; ++u) {
    auto b = g.events.begin() + static_cast<std::ptrdiff_t>(g.offsets[u]);
    auto e = g.events.begin() + static_cast<std::ptrdiff_t>(g.offsets[u + 1]);
    if (!std::is_sorted(b, e, [](const EventRecord& a, const EventRecord& c) {
          return a.t < c.t;
        }))
      std::stable_sort(b, e, [](const EventRecord& a, const EventRecord& c) {
        return a.t < c.t;
      });
  }
  return g;
}

inline UserEvents group_by_user(CdrLog log) {
  return group_by_user(std::move(log.users), std::move(log.events));
}

// Inter-event statistics --------------------------------------------------------

struct UserStats {
  UserIndex user = 0;
  std::size_t n_events = 0;
  std::optional<double> inter_event_mean_min;           // needs n >= 2
  std::optional<std::array<double, 3>> quartiles_min;   // t25, t50, t75
};

/// Linear interpolation between order statistics (position q * (m - 1)).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// The mean gap telescopes to (t_n - t_1) / (n - 1).
inline UserStats user_stats(UserIndex user, std::span<const EventRecord> events) {
  UserStats s;
  s.user = user;
  s.n_events = events.size();
  if (events.size() < 2) return s;
  const double n_gaps = static_cast<double>(events.size() - 1);
  s.inter_event_mean_min =
      static_cast<double>(events.back().t - events.front().t) / n_gaps / 60.0;
  std::vector<double> gaps;
  gaps.reserve(events.size() - 1);
  for (std::size_t i = 1; i < events.size(); ++i)
    gaps.push_back(static_cast<double>(events[i].t - events[i - 1].t) / 60.0);
  std::sort(gaps.begin(), gaps.end());
  s.quartiles_min = std::array<double, 3>{quantile_sorted(gaps, 0.25),
                                          quantile_sorted(gaps, 0.50),
                                          quantile_sorted(gaps, 0.75)};
  return s;
}

/// Users whose mean inter-event time is strictly below the threshold, in
/// ascending user order. Users without a defined mean are never selected.
inline std::vector<UserIndex> filter_frequent(std::span<const UserStats> stats,
                                              double threshold_min = 60.0) {
  if (!(threshold_min > 0.0))
    fail(ErrorKind::config, "frequent threshold must be positive");
  std::vector<UserIndex> out;
  for (const auto& s : stats)
    if (s.inter_event_mean_min && *s.inter_event_mean_min < threshold_min)
      out.push_back(s.user);
  std::sort(out.begin(), out.end());
  return out;
}

// Virtual locations, dwell clusters and trips -------------------------------------

struct VirtualLocation {
  GeoPoint centroid;
  Timestamp t_first = 0;
  Timestamp t_last = 0;
  std::size_t n_records = 0;

  Timestamp dwell_s() const { return t_last - t_first; }
};

/// A virtual location that qualifies as a trip endpoint.
using DwellCluster = VirtualLocation;

/// Greedy left-to-right runs: a run opens at the first unconsumed event and
/// absorbs following events while they stay strictly within delta_d_m of
/// that opening event. Centroids are member means in the local projection.
inline std::vector<VirtualLocation> extract_virtual_locations(
    std::span<const EventRecord> events, const Projection& proj,
    double delta_d_m = 2000.0) {
  std::vector<VirtualLocation> out;
  std::size_t k = 0;
  while (k < events.size()) {
    const LocalXY anchor = proj.project(events[k].pos);
    double sx = anchor.x, sy = anchor.y;
    std::size_t i = k + 1;
    for (; i < events.size(); ++i) {
      const LocalXY q = proj.project(events[i].pos);
      if (!(norm(anchor, q) < delta_d_m)) break;
      sx += q.x;
      sy += q.y;
    }
    const auto n = static_cast<double>(i - k);
    out.push_back({i - k == 1 ? events[k].pos : proj.unproject({sx / n, sy / n}),
                   events[k].t, events[i - 1].t, i - k});
    k = i;
  }
  return out;
}

/// Keeps virtual locations with at least two records and a record span
/// strictly longer than delta_t_min.
inline std::vector<DwellCluster> extract_clusters(
    std::span<const VirtualLocation> vlocs, double delta_t_min = 20.0) {
  std::vector<DwellCluster> out;
  for (const auto& v : vlocs)
    if (v.n_records >= 2 && static_cast<double>(v.dwell_s()) > delta_t_min * 60.0)
      out.push_back(v);
  return out;
}

struct Trip {
  UserIndex user = 0;
  DwellCluster origin;
  DwellCluster dest;
  Timestamp start_t = 0;  // origin.t_last
  Timestamp end_t = 0;    // dest.t_first
  DistrictId origin_district = kNoDistrict;
  DistrictId dest_district = kNoDistrict;
};

/// One trip per consecutive cluster pair. Pairs without a positive duration
/// (identical timestamps) cannot satisfy start < end and are skipped.
inline std::vector<Trip> extract_trips(UserIndex user,
                                       std::span<const DwellCluster> clusters,
                                       const DistrictMap* map = nullptr) {
  std::vector<Trip> out;
  for (std::size_t k = 0; k + 1 < clusters.size(); ++k) {
    Trip t;
    t.user = user;
    t.origin = clusters[k];
    t.dest = clusters[k + 1];
    t.start_t = t.origin.t_last;
    t.end_t = t.dest.t_first;
    if (t.start_t >= t.end_t) continue;
    if (map) {
      t.origin_district = map->district_of(t.origin.centroid);
      t.dest_district = map->district_of(t.dest.centroid);
    }
    out.push_back(t);
  }
  return out;
}

struct CdrParams {
  double delta_d_m = 2000.0;
  double delta_t_min = 20.0;
  double frequent_threshold_min = 60.0;
};

inline std::vector<Trip> extract_user_trips(UserIndex user,
                                            std::span<const EventRecord> events,
                                            const DistrictMap& map,
                                            const CdrParams& params) {
  const auto vlocs = extract_virtual_locations(events, map.projection(), params.delta_d_m);
  const auto clusters = extract_clusters(vlocs, params.delta_t_min);
  return extract_trips(user, clusters, &map);
}

// Trip and statistics files -------------------------------------------------------

inline void append_district(std::string& out, DistrictId d) {
  if (d == kNoDistrict)
    out += "NONE";
  else
    append_int(out, d);
}

inline std::optional<DistrictId> parse_district(std::string_view s) {
  if (s == "NONE") return kNoDistrict;
  return parse_int<DistrictId>(s);
}

inline constexpr std::string_view kTripsHeader =
    "user_id,start_t,end_t,origin_lon,origin_lat,dest_lon,dest_lat,"
    "origin_district,dest_district";

inline void write_trips_csv(const std::filesystem::path& path,
                            std::span<const Trip> trips, const TokenTable& users) {
  FileWriter w(path);
  auto& b = w.buffer();
  b.append(kTripsHeader).push_back('\n');
  for (const auto& t : trips) {
    b += users.name(t.user);
    b += ',';
    append_int(b, t.start_t);
    b += ',';
    append_int(b, t.end_t);
    for (double v : {t.origin.centroid.lon, t.origin.centroid.lat,
                     t.dest.centroid.lon, t.dest.centroid.lat}) {
      b += ',';
      append_double(b, v);
    }
    b += ',';
    append_district(b, t.origin_district);
    b += ',';
    append_district(b, t.dest_district);
    b += '\n';
    w.maybe_flush();
  }
  w.close();
}

struct TripFile {
  TokenTable users;
  std::vector<Trip> trips;
};

inline TripFile read_trips_csv(const std::string& path) {
  auto in = open_input(path, "trips");
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) || line != kTripsHeader)
    fail(ErrorKind::input, "trips file header mismatch in " + path);
  TripFile tf;
  std::array<std::string_view, 9> f;
  std::size_t lineno = 1;
  while (reader.next(line)) {
    ++lineno;
    Trip t;
    std::optional<Timestamp> s, e;
    std::optional<double> ol, oa, dl, da;
    std::optional<DistrictId> od, dd;
    if (!split_fields(line, f) || f[0].empty() || !(s = parse_int<Timestamp>(f[1])) ||
        !(e = parse_int<Timestamp>(f[2])) || !(ol = parse_double(f[3])) ||
        !(oa = parse_double(f[4])) || !(dl = parse_double(f[5])) ||
        !(da = parse_double(f[6])) || !(od = parse_district(f[7])) ||
        !(dd = parse_district(f[8])))
      fail(ErrorKind::input, "malformed trips line " + std::to_string(lineno));
    t.user = tf.users.intern(f[0]);
    t.start_t = *s;
    t.end_t = *e;
    t.origin.centroid = {*ol, *oa};
    t.origin.t_last = *s;
    t.dest.centroid = {*dl, *da};
    t.dest.t_first = *e;
    t.origin_district = *od;
    t.dest_district = *dd;
    tf.trips.push_back(t);
  }
  return tf;
}

inline void write_user_stats_csv(const std::filesystem::path& path,
                                 std::span<const UserStats> stats,
                                 const TokenTable& users, double threshold_min) {
  FileWriter w(path);
  auto& b = w.buffer();
  b += "user_id,n_events,inter_event_mean_min,t25_min,t50_min,t75_min,frequent\n";
  for (const auto& s : stats) {
    b += users.name(s.user);
    b += ',';
    append_int(b, s.n_events);
    if (s.inter_event_mean_min) {
      b += ',';
      append_double(b, *s.inter_event_mean_min);
      for (double q : *s.quartiles_min) {
        b += ',';
        append_double(b, q);
      }
      b += *s.inter_event_mean_min < threshold_min ? ",1\n" : ",0\n";
    } else {
      b += ",,,,,0\n";
    }
    w.maybe_flush();
  }
  w.close();
}

}  // namespace odflow
