#pragma once

// Smart-card legs chained into journeys with a transfer-time rule, binned into
// exact public-transport OD matrices.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "odflow/error.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"
#include "odflow/od.hpp"
#include "odflow/time.hpp"

namespace odflow {

using StationId = std::uint32_t;
using CardIndex = std::uint32_t;

/// station_id -> position -> district. Every station must fall in a district.
class StationIndex {
 public:
  StationIndex() = default;

  StationId add(std::string_view id, GeoPoint pos, const DistrictMap& map) {
    if (ids_.find(id)) fail(ErrorKind::input, "duplicate station_id " + std::string(id));
    const DistrictId d = map.district_of(pos);
    if (d == kNoDistrict)
      fail(ErrorKind::input, "station " + std::string(id) + " lies outside all districts");
    const StationId s = ids_.intern(id);
    positions_.push_back(pos);
    districts_.push_back(d);
    return s;
  }

  std::optional<StationId> find(std::string_view id) const { return ids_.find(id); }
  const std::string& name(StationId s) const { return ids_.name(s); }
  GeoPoint position(StationId s) const { return positions_.at(s); }
  DistrictId district(StationId s) const {
    if (s >= districts_.size()) fail(ErrorKind::input, "unknown station index");
    return districts_[s];
  }
  std::size_t size() const { return positions_.size(); }

 private:
  TokenTable ids_;
  std::vector<GeoPoint> positions_;
  std::vector<DistrictId> districts_;
};

inline StationIndex parse_stations(std::istream& in, const DistrictMap& map) {
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) || line != "station_id,lon,lat")
    fail(ErrorKind::input, "stations header must be 'station_id,lon,lat'");
  StationIndex idx;
  std::array<std::string_view, 3> f;
  std::size_t lineno = 1;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    std::optional<double> lon, lat;
    if (!split_fields(line, f) || f[0].empty() || !(lon = parse_double(f[1])) ||
        !(lat = parse_double(f[2])) || !is_valid({*lon, *lat}))
      fail(ErrorKind::input, "malformed stations line " + std::to_string(lineno));
    idx.add(f[0], {*lon, *lat}, map);
  }
  return idx;
}

inline StationIndex load_stations(const std::string& path, const DistrictMap& map) {
  auto in = open_input(path, "stations");
  return parse_stations(in, map);
}

struct SmartCardLeg {
  CardIndex card = 0;
  Timestamp board_t = 0;
  Timestamp alight_t = 0;
  StationId board_station = 0;
  StationId alight_station = 0;
};

struct LegDiagnostics {
  std::uint64_t data_lines = 0;
  std::uint64_t malformed = 0;
  std::uint64_t bytes = 0;
};

struct LegLog {
  TokenTable cards;
  std::vector<SmartCardLeg> legs;  // file order
  LegDiagnostics diag;
};

/// `card_id,board_time,alight_time,board_station,alight_station`. Unknown
/// stations are fatal; unparsable lines or board >= alight are malformed.
inline LegLog parse_legs(std::istream& in, const StationIndex& stations,
                         TimestampFormat ts_format = TimestampFormat::unix_seconds,
                         double max_malformed_fraction = 0.01) {
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) ||
      line != "card_id,board_time,alight_time,board_station,alight_station")
    fail(ErrorKind::input, "unreadable smart-card legs header");
  LegLog log;
  std::array<std::string_view, 5> f;
  while (reader.next(line)) {
    ++log.diag.data_lines;
    std::optional<Timestamp> b, a;
    if (!split_fields(line, f) || f[0].empty() ||
        !(b = parse_timestamp(f[1], ts_format)) ||
        !(a = parse_timestamp(f[2], ts_format)) || !(*b < *a)) {
      ++log.diag.malformed;
      continue;
    }
    const auto bs = stations.find(f[3]);
    const auto as = stations.find(f[4]);
    if (!bs || !as)
      fail(ErrorKind::input, "unknown station_id '" + std::string(bs ? f[4] : f[3]) +
                                 "' in legs file");
    log.legs.push_back({log.cards.intern(f[0]), *b, *a, *bs, *as});
  }
  log.diag.bytes = reader.bytes();
  if (log.diag.data_lines > 0 &&
      static_cast<double>(log.diag.malformed) >
          max_malformed_fraction * static_cast<double>(log.diag.data_lines))
    fail(ErrorKind::input, "too many malformed smart-card lines: " +
                               std::to_string(log.diag.malformed));
  return log;
}

inline LegLog read_legs_file(const std::string& path, const StationIndex& stations,
                             TimestampFormat ts_format = TimestampFormat::unix_seconds,
                             double max_malformed_fraction = 0.01) {
  auto in = open_input(path, "smart-card legs");
  return parse_legs(in, stations, ts_format, max_malformed_fraction);
}

/// Legs bucketed by card (first-seen order), sorted by boarding time.
struct CardLegs {
  std::vector<SmartCardLeg> legs;
  std::vector<std::size_t> offsets;

  std::size_t card_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const SmartCardLeg> of(CardIndex c) const {
    return std::span<const SmartCardLeg>(legs).subspan(offsets[c],
                                                       offsets[c + 1] - offsets[c]);
  }
};

inline CardLegs group_by_card(std::span<const SmartCardLeg> legs, std::size_t n_cards) {
  CardLegs g;
  g.offsets.assign(n_cards + 1, 0);
  for (const auto& l : legs) ++g.offsets[l.card + 1];
  for (std::size_t c = 0; c < n_cards; ++c) g.offsets[c + 1] += g.offsets[c];
  g.legs.resize(legs.size());
  std::vector<std::size_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& l : legs) g.legs[cursor[l.card]++] = l;
  for (std::size_t c = 0; c < n_cards; ++c)
    std::stable_sort(g.legs.begin() + static_cast<std::ptrdiff_t>(g.offsets[c]),
                     g.legs.begin() + static_cast<std::ptrdiff_t>(g.offsets[c + 1]),
                     [](const SmartCardLeg& a, const SmartCardLeg& b) {
                       return a.board_t < b.board_t;
                     });
  return g;
}

struct Journey {
  CardIndex card = 0;
  StationId origin_station = 0;
  StationId dest_station = 0;
  Timestamp start_t = 0;
  Timestamp end_t = 0;
  std::size_t n_legs = 0;
};

struct ChainResult {
  std::vector<Journey> journeys;
  std::size_t accepted_legs = 0;
  std::size_t overlaps_dropped = 0;
};

/// Consecutive legs merge when the alight-to-board gap is strictly below
/// transfer_min. A leg boarding before the previous one alights replaces it.
inline ChainResult chain_journeys(CardIndex card, std::span<const SmartCardLeg> legs,
                                  double transfer_min = 45.0) {
  ChainResult r;
  std::vector<SmartCardLeg> kept;
  kept.reserve(legs.size());
  for (const auto& l : legs) {
    while (!kept.empty() && l.board_t < kept.back().alight_t) {
      kept.pop_back();
      ++r.overlaps_dropped;
    }
    kept.push_back(l);
  }
  r.accepted_legs = kept.size();
  const double transfer_s = transfer_min * 60.0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const bool merge = !r.journeys.empty() &&
                       static_cast<double>(kept[i].board_t - kept[i - 1].alight_t) < transfer_s;
    if (merge) {
      Journey& j = r.journeys.back();
      j.dest_station = kept[i].alight_station;
      j.end_t = kept[i].alight_t;
      ++j.n_legs;
    } else {
      r.journeys.push_back({card, kept[i].board_station, kept[i].alight_station,
                            kept[i].board_t, kept[i].alight_t, 1});
    }
  }
  return r;
}

/// Exact public OD: journeys binned by end time, districts via the station
/// index. Matrices are COUNT.
inline BinResult public_od(std::span<const Journey> journeys, const StationIndex& stations,
                           std::size_t d, const WindowGrid& grid,
                           const std::string& label = "public") {
  return bin_by_end_time(journeys, d, grid, label, [&](const Journey& j) {
    return std::tuple{stations.district(j.origin_station),
                      stations.district(j.dest_station), j.end_t};
  });
}

inline void write_journeys_csv(const std::filesystem::path& path,
                               std::span<const Journey> journeys,
                               const TokenTable& cards, const StationIndex& stations) {
  FileWriter w(path);
  auto& b = w.buffer();
  b += "card_id,origin_station,dest_station,start_t,end_t,n_legs,origin_district,dest_district\n";
  for (const auto& j : journeys) {
    b += cards.name(j.card);
    b += ',';
    b += stations.name(j.origin_station);
    b += ',';
    b += stations.name(j.dest_station);
    b += ',';
    append_int(b, j.start_t);
    b += ',';
    append_int(b, j.end_t);
    b += ',';
    append_int(b, j.n_legs);
    b += ',';
    append_int(b, stations.district(j.origin_station));
    b += ',';
    append_int(b, stations.district(j.dest_station));
    b += '\n';
    w.maybe_flush();
  }
  w.close();
}

}  // namespace odflow
