#pragma once

// Synthetic city: a rectangular district grid, a tower lattice, commuting
// agents with home/work/errand schedules and per-trip mode choices. Emits
// CDR and smart-card logs plus the exact ground-truth OD matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odflow/analysis.hpp"
#include "odflow/error.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"
#include "odflow/od.hpp"
#include "odflow/parallel.hpp"
#include "odflow/time.hpp"

namespace odflow {

enum class SynthRegime {
  detectable,    // forced events at every stay boundary, none while moving
  naturalistic,  // Poisson events everywhere, including en route
};

struct WorldSpec {
  std::uint64_t seed = 1;
  int cols = 5;
  int rows = 5;
  double cell_w_m = 3600.0;
  double cell_h_m = 3600.0;
  GeoPoint center{103.82, 1.35};
  double tower_spacing_m = 400.0;
  int stations_per_district = 4;
  std::size_t n_agents = 1000;
  int n_days = 5;
  std::string start_date = "2011-04-04";
  std::string timezone = "Asia/Singapore";
  SynthRegime regime = SynthRegime::detectable;
  double frequent_fraction = 0.3;
  double frequent_gap_min = 10.0;
  double infrequent_gap_min = 300.0;
  double market_share = 1.0;
  double public_share_morning = 0.38;
  double public_share_midday = 0.44;
  double public_share_evening = 0.52;
  double midday_trip_prob = 0.3;
  double transfer_prob = 0.3;
  double neighbor_tower_prob = 0.0;
  double boundary_case_prob = 0.05;
  double min_place_separation_m = 2500.0;
  bool tower_mode = false;
  TimestampFormat ts_format = TimestampFormat::unix_seconds;

  std::size_t district_count() const { return static_cast<std::size_t>(cols) * rows; }
  int towers_x() const { return static_cast<int>(std::lround(cols * cell_w_m / tower_spacing_m)); }
  int towers_y() const { return static_cast<int>(std::lround(rows * cell_h_m / tower_spacing_m)); }
  int towers_per_cell_x() const { return static_cast<int>(std::lround(cell_w_m / tower_spacing_m)); }
  int towers_per_cell_y() const { return static_cast<int>(std::lround(cell_h_m / tower_spacing_m)); }

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0))
        fail(ErrorKind::config, std::string(what) + " must lie in [0, 1]");
    };
    prob(frequent_fraction, "frequent_fraction");
    prob(market_share, "market_share");
    prob(public_share_morning, "public_share.morning");
    prob(public_share_midday, "public_share.midday");
    prob(public_share_evening, "public_share.evening");
    prob(midday_trip_prob, "midday_trip_prob");
    prob(transfer_prob, "transfer_prob");
    prob(neighbor_tower_prob, "neighbor_tower_prob");
    prob(boundary_case_prob, "boundary_case_prob");
    if (cols < 1 || rows < 1 || district_count() < 2)
      fail(ErrorKind::config, "world needs at least two districts");
    if (!(cell_w_m > 0 && cell_h_m > 0 && tower_spacing_m > 0))
      fail(ErrorKind::config, "grid sizes must be positive");
    if (std::abs(cell_w_m / tower_spacing_m - towers_per_cell_x()) > 1e-9 ||
        std::abs(cell_h_m / tower_spacing_m - towers_per_cell_y()) > 1e-9 ||
        towers_per_cell_x() < 3 || towers_per_cell_y() < 3)
      fail(ErrorKind::config,
           "tower spacing must divide the cell size into at least 3 towers per side");
    if (n_days < 1) fail(ErrorKind::config, "n_days must be >= 1");
    if (!(frequent_gap_min > 0 && infrequent_gap_min > 0))
      fail(ErrorKind::config, "event gaps must be positive");
    if (!(min_place_separation_m > 0)) fail(ErrorKind::config, "place separation must be positive");
    if (stations_per_district < 0 ||
        stations_per_district > (towers_per_cell_x() - 2) * (towers_per_cell_y() - 2))
      fail(ErrorKind::config, "stations_per_district exceeds interior tower sites");
    const bool any_public = public_share_morning > 0 || public_share_midday > 0 ||
                            public_share_evening > 0;
    if (stations_per_district == 0 && any_public && n_agents > 0)
      fail(ErrorKind::config, "infeasible world: public trips requested but districts have no stations");
    if (!parse_date(start_date)) fail(ErrorKind::config, "start_date must be YYYY-MM-DD");
    TimeZone::parse(timezone);
  }
};

inline WorldSpec world_spec_from_json(const nlohmann::json& j) {
  WorldSpec s;
  static const std::set<std::string> known = {
      "seed", "grid", "tower_spacing_m", "stations_per_district", "n_agents", "n_days",
      "start_date", "timezone", "regime", "frequent_fraction", "frequent_gap_min",
      "infrequent_gap_min", "market_share", "public_share", "midday_trip_prob",
      "transfer_prob", "neighbor_tower_prob", "boundary_case_prob",
      "min_place_separation_m", "cdr_mode", "ts_format"};
  if (!j.is_object()) fail(ErrorKind::config, "world spec must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) fail(ErrorKind::config, "unknown world spec key '" + k + "'");
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      for (const auto& [k, v] : g.items())
        if (k != "cols" && k != "rows" && k != "cell_w_m" && k != "cell_h_m" &&
            k != "center_lon" && k != "center_lat")
          fail(ErrorKind::config, "unknown grid key '" + k + "'");
      s.cols = g.value("cols", s.cols);
      s.rows = g.value("rows", s.rows);
      s.cell_w_m = g.value("cell_w_m", s.cell_w_m);
      s.cell_h_m = g.value("cell_h_m", s.cell_h_m);
      s.center.lon = g.value("center_lon", s.center.lon);
      s.center.lat = g.value("center_lat", s.center.lat);
    }
    s.tower_spacing_m = j.value("tower_spacing_m", s.tower_spacing_m);
    s.stations_per_district = j.value("stations_per_district", s.stations_per_district);
    s.n_agents = j.value("n_agents", s.n_agents);
    s.n_days = j.value("n_days", s.n_days);
    s.start_date = j.value("start_date", s.start_date);
    s.timezone = j.value("timezone", s.timezone);
    const std::string regime = j.value("regime", std::string("detectable"));
    if (regime == "detectable")
      s.regime = SynthRegime::detectable;
    else if (regime == "naturalistic")
      s.regime = SynthRegime::naturalistic;
    else
      fail(ErrorKind::config, "regime must be detectable or naturalistic");
    s.frequent_fraction = j.value("frequent_fraction", s.frequent_fraction);
    s.frequent_gap_min = j.value("frequent_gap_min", s.frequent_gap_min);
    s.infrequent_gap_min = j.value("infrequent_gap_min", s.infrequent_gap_min);
    s.market_share = j.value("market_share", s.market_share);
    if (j.contains("public_share")) {
      const auto& p = j["public_share"];
      for (const auto& [k, v] : p.items())
        if (k != "morning" && k != "midday" && k != "evening")
          fail(ErrorKind::config, "unknown public_share window '" + k + "'");
      s.public_share_morning = p.value("morning", s.public_share_morning);
      s.public_share_midday = p.value("midday", s.public_share_midday);
      s.public_share_evening = p.value("evening", s.public_share_evening);
    }
    s.midday_trip_prob = j.value("midday_trip_prob", s.midday_trip_prob);
    s.transfer_prob = j.value("transfer_prob", s.transfer_prob);
    s.neighbor_tower_prob = j.value("neighbor_tower_prob", s.neighbor_tower_prob);
    s.boundary_case_prob = j.value("boundary_case_prob", s.boundary_case_prob);
    s.min_place_separation_m = j.value("min_place_separation_m", s.min_place_separation_m);
    const std::string mode = j.value("cdr_mode", std::string("lonlat"));
    if (mode != "lonlat" && mode != "tower")
      fail(ErrorKind::config, "cdr_mode must be lonlat or tower");
    s.tower_mode = mode == "tower";
    s.ts_format = parse_timestamp_format(j.value("ts_format", std::string("unix")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("bad world spec value: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const WorldSpec& s) {
  return {{"seed", s.seed},
          {"grid",
           {{"cols", s.cols},
            {"rows", s.rows},
            {"cell_w_m", s.cell_w_m},
            {"cell_h_m", s.cell_h_m},
            {"center_lon", s.center.lon},
            {"center_lat", s.center.lat}}},
          {"tower_spacing_m", s.tower_spacing_m},
          {"stations_per_district", s.stations_per_district},
          {"n_agents", s.n_agents},
          {"n_days", s.n_days},
          {"start_date", s.start_date},
          {"timezone", s.timezone},
          {"regime", s.regime == SynthRegime::detectable ? "detectable" : "naturalistic"},
          {"frequent_fraction", s.frequent_fraction},
          {"frequent_gap_min", s.frequent_gap_min},
          {"infrequent_gap_min", s.infrequent_gap_min},
          {"market_share", s.market_share},
          {"public_share",
           {{"morning", s.public_share_morning},
            {"midday", s.public_share_midday},
            {"evening", s.public_share_evening}}},
          {"midday_trip_prob", s.midday_trip_prob},
          {"transfer_prob", s.transfer_prob},
          {"neighbor_tower_prob", s.neighbor_tower_prob},
          {"boundary_case_prob", s.boundary_case_prob},
          {"min_place_separation_m", s.min_place_separation_m},
          {"cdr_mode", s.tower_mode ? "tower" : "lonlat"},
          {"ts_format", timestamp_format_name(s.ts_format)}};
}

enum class TravelMode : std::uint8_t { public_transport, private_transport };

struct TruthTrip {
  std::uint32_t agent = 0;
  Timestamp depart_t = 0;
  Timestamp arrive_t = 0;
  DistrictId origin_district = 0;
  DistrictId dest_district = 0;
  TravelMode mode = TravelMode::private_transport;
  int n_legs = 0;  // smart-card legs; 0 for private trips
};

struct AgentInfo {
  std::uint32_t index = 0;
  bool frequent = false;
  bool subscriber = false;
  DistrictId home_district = 0;
  DistrictId work_district = 0;
};

struct GroundTruth {
  WindowGrid grid;
  std::vector<ODMatrix> overall;
  std::vector<ODMatrix> pub;
  std::vector<ODMatrix> priv;
  std::vector<TruthTrip> trips;  // agent order, then time
  std::vector<AgentInfo> agents;
};

struct SynthEvent {
  std::uint32_t agent = 0;
  Timestamp t = 0;
  std::uint32_t tower = 0;
};

struct SynthLeg {
  std::uint32_t agent = 0;
  Timestamp board_t = 0;
  Timestamp alight_t = 0;
  std::uint32_t board_station = 0;
  std::uint32_t alight_station = 0;
};

struct SyntheticWorld {
  WorldSpec spec;
  TimeZone tz;
  DistrictMap map;
  std::vector<GeoPoint> towers;          // index = iy * towers_x + ix
  std::vector<std::uint32_t> stations;   // tower index of each station
  std::vector<DistrictId> station_district;
  std::vector<SynthEvent> events;        // sorted by (t, agent)
  std::vector<SynthLeg> legs;            // sorted by (board_t, agent)
  GroundTruth truth;

  Timestamp study_start() const { return truth.grid.start; }
  Timestamp study_end() const { return truth.grid.end(); }

  static std::string user_id(std::uint32_t agent) { return "u" + std::to_string(agent); }
  static std::string card_id(std::uint32_t agent) { return "c" + std::to_string(agent); }
  std::string tower_id(std::uint32_t t) const {
    const int tx = spec.towers_x();
    return "T" + std::to_string(static_cast<int>(t) % tx) + "_" +
           std::to_string(static_cast<int>(t) / tx);
  }
  std::string station_id(std::size_t s) const {
    return "S" + std::to_string(station_district[s]) + "_" + std::to_string(s);
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Tower lattice over the grid, in local coordinates centred on the grid.
struct Lattice {
  int nx = 0, ny = 0, per_x = 0, per_y = 0;
  double spacing = 0, half_w = 0, half_h = 0;

  explicit Lattice(const WorldSpec& s)
      : nx(s.towers_x()), ny(s.towers_y()), per_x(s.towers_per_cell_x()),
        per_y(s.towers_per_cell_y()), spacing(s.tower_spacing_m),
        half_w(s.cols * s.cell_w_m / 2), half_h(s.rows * s.cell_h_m / 2) {}

  LocalXY xy(int ix, int iy) const {
    return {-half_w + (ix + 0.5) * spacing, -half_h + (iy + 0.5) * spacing};
  }
  LocalXY xy(std::uint32_t t) const { return xy(static_cast<int>(t) % nx, static_cast<int>(t) / nx); }
  std::uint32_t index(int ix, int iy) const { return static_cast<std::uint32_t>(iy * nx + ix); }
  std::uint32_t nearest(const LocalXY& p) const {
    int ix = static_cast<int>(std::floor((p.x + half_w) / spacing));
    int iy = static_cast<int>(std::floor((p.y + half_h) / spacing));
    return index(std::clamp(ix, 0, nx - 1), std::clamp(iy, 0, ny - 1));
  }
  DistrictId district(std::uint32_t t, int cols) const {
    const int ix = static_cast<int>(t) % nx, iy = static_cast<int>(t) / nx;
    return (iy / per_y) * cols + ix / per_x;
  }
  /// Towers of a district that are not on its outer tower ring.
  std::vector<std::uint32_t> interior(DistrictId d, int cols) const {
    const int cx = d % cols, cy = d / cols;
    std::vector<std::uint32_t> v;
    for (int j = 1; j + 1 < per_y; ++j)
      for (int i = 1; i + 1 < per_x; ++i) v.push_back(index(cx * per_x + i, cy * per_y + j));
    return v;
  }
};

struct Stay {
  std::uint32_t tower;
  Timestamp t_in, t_out;
};

struct PlannedTrip {
  std::uint32_t from, to;  // towers
  Timestamp depart, arrive;
  TravelMode mode;
  std::vector<SynthLeg> legs;
};

struct AgentOutput {
  AgentInfo info;
  std::vector<SynthEvent> events;
  std::vector<SynthLeg> legs;
  std::vector<TruthTrip> trips;
};

}  // namespace detail

namespace detail {

class AgentSimulator {
 public:
  AgentSimulator(const WorldSpec& spec, const Lattice& lat, const TimeZone& tz,
                 Timestamp t0, std::span<const std::vector<std::uint32_t>> interior,
                 std::span<const std::vector<std::uint32_t>> stations_by_district,
                 std::size_t n_stations)
      : spec_(spec), lat_(lat), tz_(tz), t0_(t0), interior_(interior),
        stations_by_district_(stations_by_district), n_stations_(n_stations) {}

  AgentOutput run(std::uint32_t agent) const {
    std::mt19937_64 rng(splitmix64(spec_.seed ^ splitmix64(agent + 1)));
    AgentOutput out;
    out.info.index = agent;
    out.info.frequent = uniform(rng) < spec_.frequent_fraction;
    out.info.subscriber = uniform(rng) < spec_.market_share;

    const std::uint32_t home = random_place(rng);
    const std::uint32_t work = place_apart(rng, {home});
    out.info.home_district = lat_.district(home, spec_.cols);
    out.info.work_district = lat_.district(work, spec_.cols);

    std::vector<PlannedTrip> trips;
    for (int day = 0; day < spec_.n_days; ++day) {
      const Timestamp midnight = t0_ + static_cast<Timestamp>(day) * kSecondsPerDay;
      if (!tz_.is_weekday(midnight)) continue;
      Timestamp dep = midnight + hm(6, 30) + uniform_s(rng, 0, 60 * 60);
      trips.push_back(plan(rng, home, work, dep, spec_.public_share_morning, agent));
      if (uniform(rng) < spec_.midday_trip_prob) {
        const std::uint32_t errand = place_apart(rng, {work}, kErrandMaxDistanceM);
        dep = midnight + hm(11, 0) + uniform_s(rng, 0, 30 * 60);
        trips.push_back(plan(rng, work, errand, dep, spec_.public_share_midday, agent));
        const Timestamp dwell = uniform(rng) < spec_.boundary_case_prob
                                    ? 45 * 60
                                    : uniform_s(rng, 45 * 60, 100 * 60);
        trips.push_back(plan(rng, errand, work, trips.back().arrive + dwell,
                             spec_.public_share_midday, agent));
      }
      dep = midnight + hm(17, 0) + uniform_s(rng, 0, 120 * 60);
      trips.push_back(plan(rng, work, home, dep, spec_.public_share_evening, agent));
    }

    std::vector<Stay> stays;
    Timestamp t_in = t0_;
    std::uint32_t at = home;
    for (const auto& tr : trips) {
      stays.push_back({at, t_in, tr.depart});
      at = tr.to;
      t_in = tr.arrive;
    }
    const Timestamp t_end = t0_ + static_cast<Timestamp>(spec_.n_days) * kSecondsPerDay;
    stays.push_back({at, t_in, t_end - 1});

    for (const auto& tr : trips) {
      out.trips.push_back({agent, tr.depart, tr.arrive, lat_.district(tr.from, spec_.cols),
                           lat_.district(tr.to, spec_.cols), tr.mode,
                           static_cast<int>(tr.legs.size())});
      out.legs.insert(out.legs.end(), tr.legs.begin(), tr.legs.end());
    }
    if (out.info.subscriber) emit_events(rng, out, stays, trips, t_end);
    return out;
  }

 private:
  static constexpr double kErrandMaxDistanceM = 6000.0;
  static constexpr double kMinSpeed = 300.0;  // m/min
  static constexpr double kMaxSpeed = 600.0;

  static Timestamp hm(int h, int m) { return h * 3600 + m * 60; }
  static double uniform(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  static Timestamp uniform_s(std::mt19937_64& rng, Timestamp lo, Timestamp hi) {
    return std::uniform_int_distribution<Timestamp>(lo, hi)(rng);
  }
  template <typename T>
  static const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  }

  std::uint32_t random_place(std::mt19937_64& rng) const {
    const auto d = std::uniform_int_distribution<std::size_t>(0, interior_.size() - 1)(rng);
    return pick(rng, interior_[d]);
  }

  std::uint32_t place_apart(std::mt19937_64& rng, std::initializer_list<std::uint32_t> others,
                            double max_m = std::numeric_limits<double>::infinity()) const {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const std::uint32_t p = random_place(rng);
      bool ok = true;
      for (auto o : others) {
        const double d = norm(lat_.xy(p), lat_.xy(o));
        ok = ok && d >= spec_.min_place_separation_m && d <= max_m;
      }
      if (ok) return p;
    }
    fail(ErrorKind::config, "infeasible world: cannot separate places by min_place_separation_m");
  }

  // In-vehicle time from straight-line distance at a random speed, at most an hour.
  Timestamp ride_s(std::mt19937_64& rng, std::uint32_t from, std::uint32_t to) const {
    const double dist = norm(lat_.xy(from), lat_.xy(to));
    const double v = std::max(std::uniform_real_distribution<double>(kMinSpeed, kMaxSpeed)(rng),
                              dist / 60.0);
    return std::max<Timestamp>(300, std::llround(60.0 * dist / v));
  }

  PlannedTrip plan(std::mt19937_64& rng, std::uint32_t from, std::uint32_t to,
                   Timestamp depart, double p_public, std::uint32_t agent) const {
    PlannedTrip t{from, to, depart, depart, TravelMode::private_transport, {}};
    const Timestamp ride = ride_s(rng, from, to);
    if (uniform(rng) >= p_public) {
      t.arrive = depart + ride;
      return t;
    }
    t.mode = TravelMode::public_transport;
    const auto& so = stations_by_district_[lat_.district(from, spec_.cols)];
    const auto& sd = stations_by_district_[lat_.district(to, spec_.cols)];
    const std::uint32_t board = pick(rng, so), alight = pick(rng, sd);
    if (uniform(rng) < spec_.transfer_prob) {
      const auto via = static_cast<std::uint32_t>(
          std::uniform_int_distribution<std::size_t>(0, n_stations_ - 1)(rng));
      const Timestamp a = std::clamp<Timestamp>(
          std::llround(ride * std::uniform_real_distribution<double>(0.3, 0.7)(rng)), 60,
          ride - 60);
      // 44:59 is the longest wait that still counts as a transfer.
      const Timestamp gap = uniform(rng) < spec_.boundary_case_prob
                                ? 45 * 60 - 1
                                : uniform_s(rng, 60, 10 * 60);
      t.arrive = depart + ride + gap;
      t.legs.push_back({agent, depart, depart + a, board, via});
      t.legs.push_back({agent, depart + a + gap, t.arrive, via, alight});
    } else {
      t.arrive = depart + ride;
      t.legs.push_back({agent, depart, t.arrive, board, alight});
    }
    return t;
  }

  std::uint32_t jitter(std::mt19937_64& rng, std::uint32_t tower) const {
    if (spec_.neighbor_tower_prob <= 0 || uniform(rng) >= spec_.neighbor_tower_prob)
      return tower;
    static constexpr std::array<std::array<int, 2>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    const auto& s = kSteps[std::uniform_int_distribution<int>(0, 3)(rng)];
    const int ix = std::clamp(static_cast<int>(tower) % lat_.nx + s[0], 0, lat_.nx - 1);
    const int iy = std::clamp(static_cast<int>(tower) / lat_.nx + s[1], 0, lat_.ny - 1);
    return lat_.index(ix, iy);
  }

  void emit_events(std::mt19937_64& rng, AgentOutput& out, std::span<const Stay> stays,
                   std::span<const PlannedTrip> trips, Timestamp t_end) const {
    const double mean_s =
        60.0 * (out.info.frequent ? spec_.frequent_gap_min : spec_.infrequent_gap_min);
    std::exponential_distribution<double> gap(1.0 / mean_s);
    const std::uint32_t a = out.info.index;
    if (spec_.regime == SynthRegime::detectable) {
      const bool forced = out.info.frequent;
      for (const auto& st : stays) {
        if (forced) out.events.push_back({a, st.t_in, st.tower});
        double t = static_cast<double>(st.t_in) + gap(rng);
        for (; t < static_cast<double>(st.t_out); t += gap(rng))
          out.events.push_back({a, static_cast<Timestamp>(t), st.tower});
        if (forced) out.events.push_back({a, st.t_out, st.tower});
      }
      return;
    }
    // Naturalistic: one Poisson stream over the whole period.
    std::size_t si = 0, ti = 0;
    for (double t = static_cast<double>(t0_) + gap(rng); t < static_cast<double>(t_end);
         t += gap(rng)) {
      const auto ts = static_cast<Timestamp>(t);
      while (si + 1 < stays.size() && ts > stays[si].t_out) ++si;
      std::uint32_t tower;
      if (ts >= stays[si].t_in && ts <= stays[si].t_out) {
        tower = stays[si].tower;
      } else {
        while (ti + 1 < trips.size() && ts > trips[ti].arrive) ++ti;
        const auto& tr = trips[ti];
        const double f = static_cast<double>(ts - tr.depart) /
                         static_cast<double>(std::max<Timestamp>(1, tr.arrive - tr.depart));
        const LocalXY p = lat_.xy(tr.from), q = lat_.xy(tr.to);
        tower = lat_.nearest({p.x + f * (q.x - p.x), p.y + f * (q.y - p.y)});
      }
      out.events.push_back({a, ts, jitter(rng, tower)});
    }
  }

  const WorldSpec& spec_;
  const Lattice& lat_;
  const TimeZone& tz_;
  Timestamp t0_;
  std::span<const std::vector<std::uint32_t>> interior_;
  std::span<const std::vector<std::uint32_t>> stations_by_district_;
  std::size_t n_stations_;
};

}  // namespace detail

/// Deterministic for a given spec; the worker count only affects speed.
inline SyntheticWorld generate(const WorldSpec& spec, unsigned workers = 1) {
  spec.validate();
  SyntheticWorld w;
  w.spec = spec;
  w.tz = TimeZone::parse(spec.timezone);
  const detail::Lattice lat(spec);
  const Projection proj(spec.center);

  std::vector<District> districts;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const double x0 = -lat.half_w + c * spec.cell_w_m, x1 = x0 + spec.cell_w_m;
      const double y0 = -lat.half_h + r * spec.cell_h_m, y1 = y0 + spec.cell_h_m;
      District d;
      d.id = r * spec.cols + c;
      d.name = "D" + std::to_string(r) + "_" + std::to_string(c);
      d.polygon.outer = {proj.unproject({x0, y0}), proj.unproject({x1, y0}),
                         proj.unproject({x1, y1}), proj.unproject({x0, y1}),
                         proj.unproject({x0, y0})};
      districts.push_back(std::move(d));
    }
  w.map = DistrictMap(std::move(districts), spec.center);

  w.towers.resize(static_cast<std::size_t>(lat.nx) * lat.ny);
  for (std::uint32_t t = 0; t < w.towers.size(); ++t) w.towers[t] = proj.unproject(lat.xy(t));

  const std::size_t n_d = spec.district_count();
  std::vector<std::vector<std::uint32_t>> interior(n_d), stations_by_d(n_d);
  std::mt19937_64 world_rng(detail::splitmix64(spec.seed));
  for (std::size_t d = 0; d < n_d; ++d) {
    interior[d] = lat.interior(static_cast<DistrictId>(d), spec.cols);
    std::vector<std::uint32_t> sites = interior[d];
    std::shuffle(sites.begin(), sites.end(), world_rng);
    for (int k = 0; k < spec.stations_per_district; ++k) {
      stations_by_d[d].push_back(static_cast<std::uint32_t>(w.stations.size()));
      w.stations.push_back(sites[k]);
      w.station_district.push_back(static_cast<DistrictId>(d));
    }
  }

  const Timestamp t0 = w.tz.to_utc(*parse_date(spec.start_date) * kSecondsPerDay);
  const detail::AgentSimulator sim(spec, lat, w.tz, t0, interior, stations_by_d,
                                   w.stations.size());
  auto agents = parallel_map(spec.n_agents, workers, [&](std::size_t a) {
    return sim.run(static_cast<std::uint32_t>(a));
  });

  GroundTruth& gt = w.truth;
  gt.grid = WindowGrid{t0, kSecondsPerHour, static_cast<std::size_t>(spec.n_days) * 24};
  std::size_t n_events = 0, n_legs = 0;
  for (const auto& a : agents) {
    n_events += a.events.size();
    n_legs += a.legs.size();
  }
  w.events.reserve(n_events);
  w.legs.reserve(n_legs);
  for (auto& a : agents) {
    gt.agents.push_back(a.info);
    gt.trips.insert(gt.trips.end(), a.trips.begin(), a.trips.end());
    w.events.insert(w.events.end(), a.events.begin(), a.events.end());
    w.legs.insert(w.legs.end(), a.legs.begin(), a.legs.end());
    a = {};
  }
  std::stable_sort(w.events.begin(), w.events.end(),
                   [](const SynthEvent& x, const SynthEvent& y) { return x.t < y.t; });
  std::stable_sort(w.legs.begin(), w.legs.end(), [](const SynthLeg& x, const SynthLeg& y) {
    return x.board_t < y.board_t;
  });

  const std::size_t d = n_d;
  std::vector<TruthTrip> pub, priv;
  for (const auto& t : gt.trips)
    (t.mode == TravelMode::public_transport ? pub : priv).push_back(t);
  auto bin = [&](std::span<const TruthTrip> trips, const std::string& label) {
    return bin_by_end_time(trips, d, gt.grid, label, [](const TruthTrip& t) {
             return std::tuple{t.origin_district, t.dest_district, t.arrive_t};
           }).matrices;
  };
  gt.overall = bin(gt.trips, "truth-overall");
  gt.pub = bin(pub, "truth-public");
  gt.priv = bin(priv, "truth-private");
  return w;
}

/// Ground-truth overall OD restricted to one set of agents.
inline std::vector<ODMatrix> truth_od_for(const SyntheticWorld& w,
                                          const std::function<bool(const AgentInfo&)>& keep,
                                          const std::string& label = "truth-subset") {
  std::vector<TruthTrip> sel;
  for (const auto& t : w.truth.trips)
    if (keep(w.truth.agents[t.agent])) sel.push_back(t);
  return bin_by_end_time(std::span<const TruthTrip>(sel), w.map.size(), w.truth.grid, label,
                         [](const TruthTrip& t) {
                           return std::tuple{t.origin_district, t.dest_district, t.arrive_t};
                         })
      .matrices;
}

/// Mode shares the pipeline should report, from the true public and private
/// matrices aggregated the same way (workdays, per day).
inline ModeShareReport truth_mode_share(
    const SyntheticWorld& w,
    std::span<const TimeOfDayWindow> windows = default_time_windows()) {
  std::vector<ODMatrix> pub, priv;
  for (const auto& tw : windows) {
    WindowFilter f{tw.start_hour, tw.end_hour, true, {}};
    pub.push_back(aggregate(w.truth.pub, f, Normalization::per_day, w.tz));
    priv.push_back(aggregate(w.truth.priv, f, Normalization::per_day, w.tz));
  }
  return mode_share(pub, priv, windows);
}

// Output ----------------------------------------------------------------------------

namespace detail {

inline void append_ts(std::string& b, Timestamp t, TimestampFormat f) {
  if (f == TimestampFormat::unix_seconds)
    append_int(b, t);
  else
    b += format_rfc3339(t);
}

}  // namespace detail

inline void write_world(const SyntheticWorld& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& spec = w.spec;
  write_text_file(dir / "districts.geojson", district_map_to_geojson(w.map).dump(1) + "\n");

  {
    FileWriter f(dir / "towers.csv");
    auto& b = f.buffer();
    b += "tower_id,lon,lat\n";
    for (std::uint32_t t = 0; t < w.towers.size(); ++t) {
      b += w.tower_id(t);
      b += ',';
      append_double(b, w.towers[t].lon);
      b += ',';
      append_double(b, w.towers[t].lat);
      b += '\n';
    }
    f.close();
  }
  {
    FileWriter f(dir / "stations.csv");
    auto& b = f.buffer();
    b += "station_id,lon,lat\n";
    for (std::size_t s = 0; s < w.stations.size(); ++s) {
      b += w.station_id(s);
      b += ',';
      append_double(b, w.towers[w.stations[s]].lon);
      b += ',';
      append_double(b, w.towers[w.stations[s]].lat);
      b += '\n';
    }
    f.close();
  }
  {
    // Position text is precomputed per tower.
    std::vector<std::string> pos(w.towers.size());
    for (std::uint32_t t = 0; t < w.towers.size(); ++t) {
      if (spec.tower_mode) {
        pos[t] = w.tower_id(t);
      } else {
        append_double(pos[t], w.towers[t].lon);
        pos[t] += ',';
        append_double(pos[t], w.towers[t].lat);
      }
    }
    FileWriter f(dir / "cdr.csv");
    auto& b = f.buffer();
    b += spec.tower_mode ? "user_id,timestamp,tower_id\n" : "user_id,timestamp,lon,lat\n";
    for (const auto& e : w.events) {
      b += 'u';
      append_int(b, e.agent);
      b += ',';
      detail::append_ts(b, e.t, spec.ts_format);
      b += ',';
      b += pos[e.tower];
      b += '\n';
      f.maybe_flush();
    }
    f.close();
  }
  {
    FileWriter f(dir / "legs.csv");
    auto& b = f.buffer();
    b += "card_id,board_time,alight_time,board_station,alight_station\n";
    for (const auto& l : w.legs) {
      b += 'c';
      append_int(b, l.agent);
      b += ',';
      detail::append_ts(b, l.board_t, spec.ts_format);
      b += ',';
      detail::append_ts(b, l.alight_t, spec.ts_format);
      b += ',';
      b += w.station_id(l.board_station);
      b += ',';
      b += w.station_id(l.alight_station);
      b += '\n';
      f.maybe_flush();
    }
    f.close();
  }
  {
    FileWriter f(dir / "truth_trips.csv");
    auto& b = f.buffer();
    b += "user_id,card_id,frequent,subscriber,depart_t,arrive_t,origin_district,dest_district,mode,n_legs\n";
    for (const auto& t : w.truth.trips) {
      const auto& a = w.truth.agents[t.agent];
      b += SyntheticWorld::user_id(t.agent) + ',' + SyntheticWorld::card_id(t.agent);
      b += a.frequent ? ",1" : ",0";
      b += a.subscriber ? ",1," : ",0,";
      append_int(b, t.depart_t);
      b += ',';
      append_int(b, t.arrive_t);
      b += ',';
      append_int(b, t.origin_district);
      b += ',';
      append_int(b, t.dest_district);
      b += t.mode == TravelMode::public_transport ? ",public," : ",private,";
      append_int(b, t.n_legs);
      b += '\n';
      f.maybe_flush();
    }
    f.close();
  }
  {
    FileWriter f(dir / "agents.csv");
    auto& b = f.buffer();
    b += "user_id,card_id,frequent,subscriber,home_district,work_district\n";
    for (const auto& a : w.truth.agents) {
      b += SyntheticWorld::user_id(a.index) + ',' + SyntheticWorld::card_id(a.index);
      b += a.frequent ? ",1" : ",0";
      b += a.subscriber ? ",1," : ",0,";
      append_int(b, a.home_district);
      b += ',';
      append_int(b, a.work_district);
      b += '\n';
      f.maybe_flush();
    }
    f.close();
  }
  const nlohmann::json gen = {{"generator", "odflow synth"}, {"world", to_json(spec)}};
  write_od_series(dir / "truth_overall.csv", w.truth.overall, std::nullopt, gen);
  write_od_series(dir / "truth_public.csv", w.truth.pub, std::nullopt, gen);
  write_od_series(dir / "truth_private.csv", w.truth.priv, std::nullopt, gen);

  const auto windows = default_time_windows();
  write_text_file(dir / "truth_mode_share.json",
                  nlohmann::json({{"mode_share", to_json(truth_mode_share(w, windows))}}).dump(2) +
                      "\n");

  nlohmann::json summary = to_json(spec);
  summary["study_start"] = format_rfc3339(w.study_start());
  summary["study_end"] = format_rfc3339(w.study_end());
  summary["counts"] = {{"events", w.events.size()},
                       {"legs", w.legs.size()},
                       {"trips", w.truth.trips.size()},
                       {"stations", w.stations.size()},
                       {"towers", w.towers.size()}};
  write_text_file(dir / "world.json", summary.dump(2) + "\n");

  nlohmann::json run = {{"cdr", "cdr.csv"},
                        {"districts", "districts.geojson"},
                        {"legs", "legs.csv"},
                        {"stations", "stations.csv"},
                        {"ts_format", timestamp_format_name(spec.ts_format)},
                        {"timezone", spec.timezone},
                        {"study_start", format_rfc3339(w.study_start())},
                        {"study_end", format_rfc3339(w.study_end())},
                        {"market_share", spec.market_share > 0 ? spec.market_share : 1.0},
                        {"penetration", 1.0},
                        {"out_dir", "run"}};
  if (spec.tower_mode) run["towers"] = "towers.csv";
  write_text_file(dir / "run_config.json", run.dump(2) + "\n");
}

// Comparison ---------------------------------------------------------------------------

struct CompareResult {
  double total_inferred = 0.0;
  double total_truth = 0.0;
  double total_relative_error = 0.0;  // |inferred - truth| / truth
  double cellwise_l1 = 0.0;
  double max_abs_cell_error = 0.0;
};

inline CompareResult compare(std::span<const ODMatrix> inferred, std::span<const ODMatrix> truth) {
  if (inferred.size() != truth.size())
    fail(ErrorKind::input, "compare: different number of windows");
  CompareResult r;
  for (std::size_t w = 0; w < inferred.size(); ++w) {
    const auto& a = inferred[w];
    const auto& b = truth[w];
    if (a.dim() != b.dim() || !(a.window() == b.window()))
      fail(ErrorKind::input, "compare: matrix shape or window mismatch");
    auto ca = a.cells();
    auto cb = b.cells();
    for (std::size_t c = 0; c < ca.size(); ++c) {
      const double e = std::abs(ca[c] - cb[c]);
      r.cellwise_l1 += e;
      r.max_abs_cell_error = std::max(r.max_abs_cell_error, e);
      r.total_inferred += ca[c];
      r.total_truth += cb[c];
    }
  }
  if (r.total_truth != 0.0)
    r.total_relative_error = std::abs(r.total_inferred - r.total_truth) / r.total_truth;
  else
    r.total_relative_error = r.total_inferred == 0.0 ? 0.0 : 1.0;
  return r;
}

inline CompareResult compare(const ODMatrix& inferred, const ODMatrix& truth) {
  return compare(std::span<const ODMatrix>(&inferred, 1), std::span<const ODMatrix>(&truth, 1));
}

/// Absolute public-share difference per window (NaN when either is undefined).
inline std::vector<std::pair<std::string, double>> mode_share_error(
    const ModeShareReport& inferred, const ModeShareReport& truth) {
  if (inferred.windows.size() != truth.windows.size())
    fail(ErrorKind::input, "mode_share_error: window lists differ");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < inferred.windows.size(); ++i) {
    const auto& a = inferred.windows[i];
    const auto& b = truth.windows[i];
    out.emplace_back(a.name, a.public_share && b.public_share
                                 ? std::abs(*a.public_share - *b.public_share)
                                 : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

inline nlohmann::json to_json(const CompareResult& r) {
  return {{"total_inferred", r.total_inferred},
          {"total_truth", r.total_truth},
          {"total_relative_error", r.total_relative_error},
          {"cellwise_l1", r.cellwise_l1},
          {"max_abs_cell_error", r.max_abs_cell_error}};
}

}  // namespace odflow
