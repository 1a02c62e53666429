#pragma once

// End-to-end run: ingest, frequent filter, trips, places, binning, bias
// correction, upscaling, public OD, subtraction and reports.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "odflow/analysis.hpp"
#include "odflow/cdr.hpp"
#include "odflow/error.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"
#include "odflow/od.hpp"
#include "odflow/parallel.hpp"
#include "odflow/places.hpp"
#include "odflow/time.hpp"
#include "odflow/transit.hpp"

namespace odflow {

struct RunConfig {
  std::string cdr;
  std::string towers;  // empty unless the CDR file is in tower mode
  std::string districts;
  std::string legs;
  std::string stations;
  std::string out_dir = "odflow-out";
  TimestampFormat ts_format = TimestampFormat::unix_seconds;
  CdrParams cdr_params;
  PlaceParams place_params;
  double transfer_min = 45.0;
  double market_share = 0.453;
  double penetration = 1.44;
  std::optional<double> frequent_share;  // unset: measured phi
  int granularity_min = 60;
  std::vector<TimeOfDayWindow> windows = default_time_windows();
  std::string timezone = "Asia/Singapore";
  bool workdays_only = true;
  std::vector<std::string> holidays;
  std::optional<std::string> study_start;
  std::optional<std::string> study_end;
  Normalization normalization = Normalization::per_day;
  double max_malformed_fraction = 0.01;
  std::size_t top_k = 50;
  bool write_flows = true;
  unsigned workers = 1;  // 0 = all hardware threads
};

namespace detail {

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "cdr", "towers", "districts", "legs", "stations", "out_dir", "ts_format",
      "delta_d_m", "delta_t_min", "frequent_threshold_min", "place_radius_m",
      "place_min_share", "place_max_iter", "transfer_min", "market_share", "penetration",
      "frequent_share", "granularity_min", "windows", "timezone", "workdays_only",
      "holidays", "study_start", "study_end", "normalization", "max_malformed_fraction",
      "top_k", "write_flows", "workers"};
  return keys;
}

inline bool valid_window_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace detail

/// Relative input/output paths are resolved against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) fail(ErrorKind::config, "run config must be a JSON object");
  const auto& keys = detail::run_config_keys();
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      fail(ErrorKind::config, "unknown config key '" + k + "'");
  RunConfig c;
  auto path = [&](const char* key, std::string& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    std::filesystem::path p = j[key].get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    out = p.lexically_normal().string();
  };
  try {
    path("cdr", c.cdr);
    path("towers", c.towers);
    path("districts", c.districts);
    path("legs", c.legs);
    path("stations", c.stations);
    path("out_dir", c.out_dir);
    if (j.contains("ts_format"))
      c.ts_format = parse_timestamp_format(j["ts_format"].get<std::string>());
    c.cdr_params.delta_d_m = j.value("delta_d_m", c.cdr_params.delta_d_m);
    c.cdr_params.delta_t_min = j.value("delta_t_min", c.cdr_params.delta_t_min);
    c.cdr_params.frequent_threshold_min =
        j.value("frequent_threshold_min", c.cdr_params.frequent_threshold_min);
    c.place_params.radius_m = j.value("place_radius_m", c.place_params.radius_m);
    c.place_params.min_share = j.value("place_min_share", c.place_params.min_share);
    c.place_params.max_iter = j.value("place_max_iter", c.place_params.max_iter);
    c.transfer_min = j.value("transfer_min", c.transfer_min);
    c.market_share = j.value("market_share", c.market_share);
    c.penetration = j.value("penetration", c.penetration);
    if (j.contains("frequent_share") && !j["frequent_share"].is_null())
      c.frequent_share = j["frequent_share"].get<double>();
    c.granularity_min = j.value("granularity_min", c.granularity_min);
    if (j.contains("windows")) {
      c.windows.clear();
      for (const auto& w : j["windows"])
        c.windows.push_back({w.at("name").get<std::string>(), w.at("start_hour").get<int>(),
                             w.at("end_hour").get<int>()});
    }
    c.timezone = j.value("timezone", c.timezone);
    c.workdays_only = j.value("workdays_only", c.workdays_only);
    if (j.contains("holidays")) c.holidays = j["holidays"].get<std::vector<std::string>>();
    if (j.contains("study_start") && !j["study_start"].is_null())
      c.study_start = j["study_start"].get<std::string>();
    if (j.contains("study_end") && !j["study_end"].is_null())
      c.study_end = j["study_end"].get<std::string>();
    if (j.contains("normalization")) {
      const auto n = j["normalization"].get<std::string>();
      if (n == "per_day")
        c.normalization = Normalization::per_day;
      else if (n == "total")
        c.normalization = Normalization::total;
      else
        fail(ErrorKind::config, "normalization must be per_day or total");
    }
    c.max_malformed_fraction = j.value("max_malformed_fraction", c.max_malformed_fraction);
    c.top_k = j.value("top_k", c.top_k);
    c.write_flows = j.value("write_flows", c.write_flows);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("bad config value: ") + e.what());
  }
  return c;
}

/// Everything that determines results. Execution settings (out_dir, workers)
/// are left out so runs that differ only in those produce identical files.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : c.windows)
    windows.push_back({{"name", w.name}, {"start_hour", w.start_hour}, {"end_hour", w.end_hour}});
  auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  return {{"cdr", c.cdr},
          {"towers", c.towers},
          {"districts", c.districts},
          {"legs", c.legs},
          {"stations", c.stations},
          {"ts_format", timestamp_format_name(c.ts_format)},
          {"delta_d_m", c.cdr_params.delta_d_m},
          {"delta_t_min", c.cdr_params.delta_t_min},
          {"frequent_threshold_min", c.cdr_params.frequent_threshold_min},
          {"place_radius_m", c.place_params.radius_m},
          {"place_min_share", c.place_params.min_share},
          {"place_max_iter", c.place_params.max_iter},
          {"transfer_min", c.transfer_min},
          {"market_share", c.market_share},
          {"penetration", c.penetration},
          {"frequent_share", opt(c.frequent_share)},
          {"granularity_min", c.granularity_min},
          {"windows", windows},
          {"timezone", c.timezone},
          {"workdays_only", c.workdays_only},
          {"holidays", c.holidays},
          {"study_start", opt(c.study_start)},
          {"study_end", opt(c.study_end)},
          {"normalization", normalization_name(c.normalization)},
          {"max_malformed_fraction", c.max_malformed_fraction},
          {"top_k", c.top_k},
          {"write_flows", c.write_flows}};
}

inline void validate(const RunConfig& c) {
  if (c.cdr.empty()) fail(ErrorKind::config, "config: 'cdr' is required");
  if (c.districts.empty()) fail(ErrorKind::config, "config: 'districts' is required");
  if (c.legs.empty()) fail(ErrorKind::config, "config: 'legs' is required");
  if (c.stations.empty()) fail(ErrorKind::config, "config: 'stations' is required");
  if (!(c.cdr_params.delta_d_m > 0)) fail(ErrorKind::config, "delta_d_m must be positive");
  if (!(c.cdr_params.delta_t_min >= 0)) fail(ErrorKind::config, "delta_t_min must be >= 0");
  if (!(c.cdr_params.frequent_threshold_min > 0))
    fail(ErrorKind::config, "frequent_threshold_min must be positive");
  if (!(c.place_params.radius_m > 0)) fail(ErrorKind::config, "place_radius_m must be positive");
  if (!(c.place_params.min_share >= 0 && c.place_params.min_share <= 1))
    fail(ErrorKind::config, "place_min_share must lie in [0, 1]");
  if (c.place_params.max_iter < 1) fail(ErrorKind::config, "place_max_iter must be >= 1");
  if (!(c.transfer_min >= 0)) fail(ErrorKind::config, "transfer_min must be >= 0");
  if (!(c.max_malformed_fraction >= 0 && c.max_malformed_fraction <= 1))
    fail(ErrorKind::config, "max_malformed_fraction must lie in [0, 1]");
  ScalingConfig{c.market_share, c.penetration, c.frequent_share.value_or(1.0)}.validate();
  WindowGrid::check_step(static_cast<Timestamp>(c.granularity_min) * 60);
  std::set<std::string> names;
  for (const auto& w : c.windows) {
    if (!detail::valid_window_name(w.name))
      fail(ErrorKind::config, "window names must be [A-Za-z0-9_-]+");
    if (!names.insert(w.name).second) fail(ErrorKind::config, "duplicate window " + w.name);
    if (!(0 <= w.start_hour && w.start_hour < w.end_hour && w.end_hour <= 24))
      fail(ErrorKind::config, "window " + w.name + " needs 0 <= start_hour < end_hour <= 24");
  }
  for (const auto& h : c.holidays)
    if (!parse_date(h)) fail(ErrorKind::config, "holiday '" + h + "' is not YYYY-MM-DD");
  if (c.study_start.has_value() != c.study_end.has_value())
    fail(ErrorKind::config, "study_start and study_end must be given together");
  for (const auto* s : {&c.study_start, &c.study_end})
    if (*s && !parse_timestamp_any(**s))
      fail(ErrorKind::config, "study window bound '" + **s + "' is not a timestamp");
  TimeZone::parse(c.timezone);
}

inline unsigned effective_workers(unsigned w) {
  if (w > 0) return w;
  return std::max(1u, std::thread::hardware_concurrency());
}

struct WindowReport {
  TimeOfDayWindow window;
  std::size_t selected_days = 0;
  ODMatrix overall;
  ODMatrix pub;
  PrivateResult priv;
};

struct RunResult {
  TokenTable users;
  std::vector<UserStats> stats;
  std::vector<UserIndex> frequent;
  std::vector<Trip> trips;  // frequent users only
  std::vector<SignificantPlace> places;
  DistrictShares shares;
  CorrectionFactors factors;
  ScalingConfig scaling;
  WindowGrid grid;
  BinResult raw;
  std::vector<ODMatrix> corrected;
  std::vector<ODMatrix> estimate;
  TokenTable cards;
  std::vector<Journey> journeys;
  BinResult pub;
  std::vector<WindowReport> reports;
  ModeShareReport mode_share;
  std::vector<std::pair<std::string, RankingResult>> rankings;
  nlohmann::json manifest;
};

namespace detail {

struct UserOutput {
  UserStats stats;
  bool frequent = false;
  std::vector<Trip> trips;
  std::vector<SignificantPlace> places;
};

}  // namespace detail

/// Runs every stage in memory; `write_outputs` persists the result.
inline RunResult run_pipeline_in_memory(const RunConfig& cfg) {
  validate(cfg);
  const unsigned workers = effective_workers(cfg.workers);
  const TimeZone tz = TimeZone::parse(cfg.timezone);
  const DistrictMap map = load_district_map(cfg.districts);
  const std::size_t d = map.size();
  RunResult r;

  std::optional<TowerTable> towers;
  if (!cfg.towers.empty()) towers = load_towers(cfg.towers);
  CdrSchema schema{cfg.ts_format, cfg.max_malformed_fraction, towers ? &*towers : nullptr};
  CdrLog log = read_cdr_file(cfg.cdr, schema);
  const CdrDiagnostics cdr_diag = log.diag;
  const UserEvents ue = group_by_user(std::move(log));
  r.users = ue.users;

  const StationIndex stations = load_stations(cfg.stations, map);
  LegLog legs = read_legs_file(cfg.legs, stations, cfg.ts_format, cfg.max_malformed_fraction);

  // Per-user stages.
  auto outputs = parallel_map(ue.user_count(), workers, [&](std::size_t u) {
    detail::UserOutput o;
    const auto user = static_cast<UserIndex>(u);
    const auto ev = ue.of(user);
    o.stats = user_stats(user, ev);
    o.frequent = o.stats.inter_event_mean_min &&
                 *o.stats.inter_event_mean_min < cfg.cdr_params.frequent_threshold_min;
    if (o.frequent) o.trips = extract_user_trips(user, ev, map, cfg.cdr_params);
    o.places = significant_places(user, ev, map, cfg.place_params);
    return o;
  });
  std::vector<SignificantPlace> frequent_places;
  for (auto& o : outputs) {
    r.stats.push_back(o.stats);
    if (o.frequent) {
      r.frequent.push_back(o.stats.user);
      r.trips.insert(r.trips.end(), o.trips.begin(), o.trips.end());
      frequent_places.insert(frequent_places.end(), o.places.begin(), o.places.end());
    }
    r.places.insert(r.places.end(), o.places.begin(), o.places.end());
    o = {};
  }
  if (!std::is_sorted(r.frequent.begin(), r.frequent.end()))
    fail(ErrorKind::internal, "frequent users out of order");
  r.shares = district_shares(frequent_places, r.places, d);

  // Study window.
  const Timestamp step = static_cast<Timestamp>(cfg.granularity_min) * 60;
  if (cfg.study_start) {
    r.grid = WindowGrid::between(*parse_timestamp_any(*cfg.study_start),
                                 *parse_timestamp_any(*cfg.study_end), step, tz);
  } else {
    Timestamp lo = std::numeric_limits<Timestamp>::max();
    Timestamp hi = std::numeric_limits<Timestamp>::min();
    for (const auto& e : ue.events) {
      lo = std::min(lo, e.t);
      hi = std::max(hi, e.t);
    }
    for (const auto& l : legs.legs) {
      lo = std::min(lo, l.board_t);
      hi = std::max(hi, l.alight_t);
    }
    if (lo > hi) fail(ErrorKind::input, "no events or legs to derive a study window from");
    r.grid = WindowGrid::covering_days(lo, hi, step, tz);
  }

  // Overall mobility: bin, correct, upscale.
  r.raw = bin_trips(r.trips, d, r.grid, "cdr-raw");
  r.factors = correction_factors(r.shares);
  r.scaling = {cfg.market_share, cfg.penetration,
               cfg.frequent_share.value_or(r.shares.phi_overall)};
  r.scaling.validate();
  for (const auto& m : r.raw.matrices) {
    r.corrected.push_back(correct_bias(m, r.factors));
    r.corrected.back().set_label("cdr-corrected");
    r.estimate.push_back(upscale(r.corrected.back(), r.scaling));
    r.estimate.back().set_label("overall-est");
  }

  // Public transport.
  const CardLegs by_card = group_by_card(legs.legs, legs.cards.size());
  auto chained = parallel_map(by_card.card_count(), workers, [&](std::size_t c) {
    return chain_journeys(static_cast<CardIndex>(c), by_card.of(static_cast<CardIndex>(c)),
                          cfg.transfer_min);
  });
  std::size_t overlaps = 0;
  for (const auto& c : chained) {
    r.journeys.insert(r.journeys.end(), c.journeys.begin(), c.journeys.end());
    overlaps += c.overlaps_dropped;
  }
  r.cards = std::move(legs.cards);
  r.pub = public_od(r.journeys, stations, d, r.grid, "public");

  // Time-of-day reports. The upscaled overall matrices are ESTIMATE and the
  // public ones COUNT, so each is aggregated separately before subtraction.
  WindowFilter filter;
  filter.workdays_only = cfg.workdays_only;
  for (const auto& h : cfg.holidays) filter.holidays.insert(*parse_date(h));
  std::vector<ODMatrix> pub_aggs, priv_aggs;
  for (const auto& w : cfg.windows) {
    filter.start_hour = w.start_hour;
    filter.end_hour = w.end_hour;
    WindowReport wr;
    wr.window = w;
    wr.selected_days = count_selected_days(r.estimate, filter, tz);
    wr.overall = aggregate(r.estimate, filter, cfg.normalization, tz);
    wr.pub = aggregate(r.pub.matrices, filter, cfg.normalization, tz);
    wr.priv = private_od(wr.overall, wr.pub);
    pub_aggs.push_back(wr.pub);
    priv_aggs.push_back(wr.priv.matrix);
    r.rankings.emplace_back(w.name, underserved_ranking(wr.pub, wr.priv.matrix, cfg.top_k));
    r.reports.push_back(std::move(wr));
  }
  r.mode_share = mode_share(pub_aggs, priv_aggs, cfg.windows);

  // Manifest.
  const nlohmann::json echo = to_json(cfg);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(echo.dump())));
  nlohmann::json& m = r.manifest;
  m["config"] = echo;
  m["config_hash"] = hash;
  m["inputs"] = {{"cdr",
                  {{"data_lines", cdr_diag.data_lines},
                   {"records", cdr_diag.records},
                   {"malformed_lines", cdr_diag.malformed},
                   {"bytes", cdr_diag.bytes},
                   {"tower_mode", cdr_diag.tower_mode}}},
                 {"legs",
                  {{"data_lines", legs.diag.data_lines},
                   {"records", legs.legs.size()},
                   {"malformed_lines", legs.diag.malformed},
                   {"bytes", legs.diag.bytes}}},
                 {"districts", d},
                 {"stations", stations.size()}};
  std::size_t with_stats = 0;
  for (const auto& s : r.stats) with_stats += s.inter_event_mean_min.has_value();
  m["users"] = {{"total", r.stats.size()},
                {"with_inter_event_time", with_stats},
                {"frequent", r.frequent.size()}};
  m["trips"] = {{"extracted", r.trips.size()},
                {"none_district", r.raw.none_district},
                {"out_of_window", r.raw.out_of_window},
                {"binned", r.raw.binned}};
  m["places"] = {{"all", r.places.size()},
                 {"frequent", frequent_places.size()},
                 {"without_district", r.shares.places_without_district}};
  m["correction"] = {{"phi", r.factors.phi}, {"substituted_districts", r.factors.substituted}};
  m["scaling"] = {{"market_share", r.scaling.market_share},
                  {"penetration", r.scaling.penetration},
                  {"frequent_share", r.scaling.frequent_share},
                  {"frequent_share_source", cfg.frequent_share ? "config" : "measured"},
                  {"divisor", r.scaling.divisor()}};
  m["public"] = {{"legs", legs.legs.size()},
                 {"accepted_legs", legs.legs.size() - overlaps},
                 {"overlapping_legs_dropped", overlaps},
                 {"journeys", r.journeys.size()},
                 {"none_district", r.pub.none_district},
                 {"out_of_window", r.pub.out_of_window},
                 {"binned", r.pub.binned}};
  m["study_window"] = {{"start", format_rfc3339(r.grid.start)},
                       {"end", format_rfc3339(r.grid.end())},
                       {"granularity_s", r.grid.step},
                       {"windows", r.grid.count}};
  double residual = 0.0;
  nlohmann::json reports = nlohmann::json::object();
  for (const auto& wr : r.reports) {
    residual += wr.priv.clamped_residual;
    reports[wr.window.name] = {{"selected_days", wr.selected_days},
                               {"overall_inter_district", wr.overall.inter_district_total()},
                               {"public_inter_district", wr.pub.inter_district_total()},
                               {"private_inter_district", wr.priv.matrix.inter_district_total()},
                               {"clamped_cells", wr.priv.clamped_cells},
                               {"clamped_residual", wr.priv.clamped_residual}};
  }
  m["reports"] = reports;
  m["clamped_residual_total"] = residual;
  return r;
}

inline void write_outputs(const RunResult& r, const RunConfig& cfg, const DistrictMap& map) {
  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const nlohmann::json extra = {{"config", r.manifest.at("config")},
                                {"config_hash", r.manifest.at("config_hash")}};
  std::vector<std::string> files;
  auto od = [&](const std::string& name, std::span<const ODMatrix> ms,
                std::optional<Normalization> norm) {
    write_od_series(out / name, ms, norm, extra);
    files.push_back(name);
    files.push_back(od_sidecar_path(name).string());
  };
  write_user_stats_csv(out / "user_stats.csv", r.stats, r.users,
                       cfg.cdr_params.frequent_threshold_min);
  files.push_back("user_stats.csv");
  write_trips_csv(out / "trips.csv", r.trips, r.users);
  files.push_back("trips.csv");
  write_places_csv(out / "places.csv", r.places, r.users);
  files.push_back("places.csv");
  write_district_shares_csv(out / "district_shares.csv", r.shares);
  files.push_back("district_shares.csv");
  od("od_raw.csv", r.raw.matrices, std::nullopt);
  od("od_corrected.csv", r.corrected, std::nullopt);
  od("od_overall.csv", r.estimate, std::nullopt);
  od("od_public.csv", r.pub.matrices, std::nullopt);
  for (const auto& wr : r.reports) {
    const std::string n = wr.window.name;
    od("od_" + n + "_overall.csv", std::span(&wr.overall, 1), cfg.normalization);
    od("od_" + n + "_public.csv", std::span(&wr.pub, 1), cfg.normalization);
    od("od_" + n + "_private.csv", std::span(&wr.priv.matrix, 1), cfg.normalization);
  }

  write_text_file(out / "mode_share.json",
                  nlohmann::json({{"mode_share", to_json(r.mode_share)},
                                  {"config_hash", extra["config_hash"]}})
                          .dump(2) +
                      "\n");
  write_mode_share_csv(out / "mode_share.csv", r.mode_share);
  files.insert(files.end(), {"mode_share.json", "mode_share.csv"});

  write_text_file(out / "underserved.json",
                  nlohmann::json({{"underserved", to_json(std::span(r.rankings))},
                                  {"config_hash", extra["config_hash"]}})
                          .dump(2) +
                      "\n");
  write_ranking_csv(out / "underserved.csv", r.rankings);
  files.insert(files.end(), {"underserved.json", "underserved.csv"});
  if (cfg.write_flows) {
    write_text_file(out / "flows.geojson", flows_geojson(r.rankings, map).dump(1) + "\n");
    files.push_back("flows.geojson");
  }

  nlohmann::json manifest = r.manifest;
  std::sort(files.begin(), files.end());
  manifest["outputs"] = files;
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
}

inline RunResult run_pipeline(const RunConfig& cfg) {
  RunResult r = run_pipeline_in_memory(cfg);
  write_outputs(r, cfg, load_district_map(cfg.districts));
  return r;
}

}  // namespace odflow
