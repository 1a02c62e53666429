#pragma once

// `odflow` command line: one subcommand per pipeline stage plus `run` for the
// whole chain. Failures print a JSON error record on stderr.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "odflow/analysis.hpp"
#include "odflow/cdr.hpp"
#include "odflow/error.hpp"
#include "odflow/od.hpp"
#include "odflow/pipeline.hpp"
#include "odflow/places.hpp"
#include "odflow/synth.hpp"
#include "odflow/transit.hpp"

namespace odflow {

namespace cli_detail {

namespace fs = std::filesystem;

/// "1h", "30m", "30min", "900s" or bare minutes.
inline Timestamp parse_duration_s(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  const auto n = parse_int<Timestamp>(std::string_view(s).substr(0, i));
  const std::string unit = s.substr(i);
  if (!n || *n <= 0) fail(ErrorKind::config, "bad duration '" + s + "'");
  if (unit == "h") return *n * 3600;
  if (unit.empty() || unit == "m" || unit == "min") return *n * 60;
  if (unit == "s") return *n;
  fail(ErrorKind::config, "bad duration unit in '" + s + "'");
}

inline nlohmann::json load_json(const std::string& path, ErrorKind bad_kind) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input_missing, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(bad_kind, "invalid JSON in " + path + ": " + e.what());
  }
}

inline WindowGrid make_grid(const std::optional<std::string>& start,
                            const std::optional<std::string>& end, Timestamp step,
                            const TimeZone& tz, Timestamp lo, Timestamp hi) {
  if (start.has_value() != end.has_value())
    fail(ErrorKind::config, "--study-start and --study-end go together");
  if (start) {
    const auto s = parse_timestamp_any(*start), e = parse_timestamp_any(*end);
    if (!s || !e) fail(ErrorKind::config, "study window bounds must be timestamps");
    return WindowGrid::between(*s, *e, step, tz);
  }
  if (lo > hi) fail(ErrorKind::input, "no records to derive a study window from");
  return WindowGrid::covering_days(lo, hi, step, tz);
}

inline void emit(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

inline void write_or_print(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text_file(path, text);
}

/// Parses district_shares.csv back into counts.
inline DistrictShares read_district_shares(const std::string& path) {
  auto in = open_input(path, "district shares");
  LineReader reader(in);
  std::string_view line;
  if (!reader.next(line) || line != "district_id,m,n,phi,no_places")
    fail(ErrorKind::input, "district shares header mismatch in " + path);
  std::vector<std::pair<std::size_t, std::size_t>> mn;
  std::array<std::string_view, 5> f;
  while (reader.next(line)) {
    std::optional<std::size_t> id, m, n;
    if (!split_fields(line, f) || !(id = parse_int<std::size_t>(f[0])) ||
        !(m = parse_int<std::size_t>(f[1])) || !(n = parse_int<std::size_t>(f[2])) ||
        *id != mn.size())
      fail(ErrorKind::input, "malformed district shares line in " + path);
    mn.emplace_back(*m, *n);
  }
  // Rebuild through district_shares so phi and the empty flags are derived once.
  std::vector<SignificantPlace> freq, all;
  for (std::size_t i = 0; i < mn.size(); ++i) {
    SignificantPlace p;
    p.district = static_cast<DistrictId>(i);
    freq.insert(freq.end(), mn[i].first, p);
    all.insert(all.end(), mn[i].second, p);
  }
  return district_shares(freq, all, mn.size());
}

struct CdrInput {
  std::string cdr;
  std::string towers;
  std::string ts_format = "unix";
  double max_malformed = 0.01;

  void add(CLI::App* app) {
    app->add_option("--cdr", cdr, "CDR CSV file")->required();
    app->add_option("--towers", towers, "tower file for tower-mode CDR");
    app->add_option("--ts-format", ts_format, "unix or rfc3339")->capture_default_str();
    app->add_option("--max-malformed", max_malformed, "tolerated malformed line fraction")
        ->capture_default_str();
  }
  UserEvents load(CdrDiagnostics* diag = nullptr) const {
    std::optional<TowerTable> towers_table;
    if (!towers.empty()) towers_table = load_towers(towers);
    CdrSchema schema{parse_timestamp_format(ts_format), max_malformed,
                     towers_table ? &*towers_table : nullptr};
    CdrLog log = read_cdr_file(cdr, schema);
    if (diag) *diag = log.diag;
    return group_by_user(std::move(log));
  }
};

struct GridOptions {
  std::string granularity = "1h";
  std::string timezone = "Asia/Singapore";
  std::optional<std::string> study_start, study_end;

  void add(CLI::App* app) {
    app->add_option("--granularity", granularity, "window width, e.g. 1h or 30m")
        ->capture_default_str();
    app->add_option("--timezone", timezone, "UTC, Asia/Singapore or +HH:MM")
        ->capture_default_str();
    app->add_option("--study-start", study_start, "first instant of the study window");
    app->add_option("--study-end", study_end, "end (exclusive) of the study window");
  }
};

inline std::vector<TimeOfDayWindow> parse_windows(const std::vector<std::string>& specs) {
  if (specs.empty()) return default_time_windows();
  std::vector<TimeOfDayWindow> out;
  for (const auto& s : specs) {
    // name:start-end, hours
    const auto colon = s.find(':');
    const auto dash = s.find('-', colon == std::string::npos ? 0 : colon);
    std::optional<int> a, b;
    if (colon == std::string::npos || dash == std::string::npos ||
        !(a = parse_int<int>(std::string_view(s).substr(colon + 1, dash - colon - 1))) ||
        !(b = parse_int<int>(std::string_view(s).substr(dash + 1))) || !(0 <= *a && *a < *b && *b <= 24))
      fail(ErrorKind::config, "window must look like name:START-END with hours, got '" + s + "'");
    out.push_back({s.substr(0, colon), *a, *b});
  }
  return out;
}

}  // namespace cli_detail

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"odflow: OD matrices and mode shares from CDR and smart-card logs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "odflow 1.0.0");
  unsigned workers = 1;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic city with ground truth");
  std::string spec_path, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_agents;
  synth->add_option("--spec", spec_path, "WorldSpec JSON (defaults when omitted)");
  synth->add_option("--out-dir", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the world seed");
  synth->add_option("--n-agents", synth_agents, "override the agent count");
  synth->add_option("--workers", workers, "worker threads (0 = all)");

  // stats
  auto* stats = app.add_subcommand("stats", "per-user inter-event statistics");
  CdrInput stats_in;
  stats_in.add(stats);
  double stats_threshold = 60.0;
  std::string stats_out;
  stats->add_option("--frequent-threshold-min", stats_threshold)->capture_default_str();
  stats->add_option("--out", stats_out, "user statistics CSV")->required();

  // trips
  auto* trips = app.add_subcommand("trips", "extract trips of frequent users");
  CdrInput trips_in;
  trips_in.add(trips);
  std::string trips_districts, trips_out;
  CdrParams cdr_params;
  bool all_users = false;
  trips->add_option("--districts", trips_districts, "district GeoJSON")->required();
  trips->add_option("--delta-d-m", cdr_params.delta_d_m)->capture_default_str();
  trips->add_option("--delta-t-min", cdr_params.delta_t_min)->capture_default_str();
  trips->add_option("--frequent-threshold-min", cdr_params.frequent_threshold_min)
      ->capture_default_str();
  trips->add_flag("--all-users", all_users, "skip the frequent-user filter");
  trips->add_option("--out", trips_out, "trips CSV")->required();
  trips->add_option("--workers", workers, "worker threads (0 = all)");

  // places
  auto* places = app.add_subcommand("places", "significant places per user");
  CdrInput places_in;
  places_in.add(places);
  std::string places_districts, places_out, shares_out;
  PlaceParams place_params;
  double places_threshold = 60.0;
  places->add_option("--districts", places_districts, "district GeoJSON")->required();
  places->add_option("--radius-m", place_params.radius_m)->capture_default_str();
  places->add_option("--min-share", place_params.min_share)->capture_default_str();
  places->add_option("--max-iter", place_params.max_iter)->capture_default_str();
  places->add_option("--frequent-threshold-min", places_threshold)->capture_default_str();
  places->add_option("--out", places_out, "places CSV")->required();
  places->add_option("--shares-out", shares_out, "per-district m/n/phi CSV");
  places->add_option("--workers", workers, "worker threads (0 = all)");

  // od
  auto* od = app.add_subcommand("od", "bin trips into OD matrices");
  std::string od_trips, od_districts, od_out, od_shares;
  GridOptions od_grid;
  bool od_upscale = false;
  ScalingConfig scaling;
  od->add_option("--trips", od_trips, "trips CSV")->required();
  od->add_option("--districts", od_districts, "district GeoJSON")->required();
  od_grid.add(od);
  od->add_option("--shares", od_shares, "district shares CSV: apply the bias correction");
  od->add_flag("--upscale", od_upscale, "divide by market share x penetration x frequent share");
  od->add_option("--market-share", scaling.market_share)->capture_default_str();
  od->add_option("--penetration", scaling.penetration)->capture_default_str();
  od->add_option("--frequent-share", scaling.frequent_share)->capture_default_str();
  od->add_option("--out", od_out, "OD CSV (sidecar JSON written next to it)")->required();

  // public-od
  auto* pod = app.add_subcommand("public-od", "chain smart-card legs into a public OD");
  std::string pod_legs, pod_stations, pod_districts, pod_out, pod_journeys, pod_ts = "unix";
  double transfer_min = 45.0, pod_malformed = 0.01;
  GridOptions pod_grid;
  pod->add_option("--legs", pod_legs, "smart-card legs CSV")->required();
  pod->add_option("--stations", pod_stations, "stations CSV")->required();
  pod->add_option("--districts", pod_districts, "district GeoJSON")->required();
  pod->add_option("--transfer-min", transfer_min)->capture_default_str();
  pod->add_option("--ts-format", pod_ts)->capture_default_str();
  pod->add_option("--max-malformed", pod_malformed)->capture_default_str();
  pod_grid.add(pod);
  pod->add_option("--out", pod_out, "OD CSV")->required();
  pod->add_option("--journeys-out", pod_journeys, "journeys CSV");

  // report
  auto* report = app.add_subcommand("report", "mode shares and underserved connections");
  std::string rep_overall, rep_public, rep_districts, rep_out, rep_format = "json",
                                                               rep_tz = "Asia/Singapore",
                                                               rep_norm = "per_day";
  std::vector<std::string> rep_windows;
  std::size_t top_k = 50, intra_samples = 0;
  bool rep_all_days = false;
  report->add_option("--overall", rep_overall, "overall OD series (estimate)")->required();
  report->add_option("--public", rep_public, "public OD series")->required();
  report->add_option("--districts", rep_districts, "district GeoJSON (geojson, intra-district)");
  report->add_option("--window", rep_windows, "name:START-END in local hours, repeatable");
  report->add_option("--timezone", rep_tz)->capture_default_str();
  report->add_flag("--all-days", rep_all_days, "include weekends");
  report->add_option("--normalization", rep_norm, "per_day or total")->capture_default_str();
  report->add_option("--top-k", top_k)->capture_default_str();
  report->add_option("--format", rep_format, "json, csv or geojson")
      ->check(CLI::IsMember({"json", "csv", "geojson"}))
      ->capture_default_str();
  report->add_option("--intra-district-samples", intra_samples,
                     "Monte Carlo sample pairs per district (json only)");
  report->add_option("--out", rep_out, "output file (stdout when omitted)");

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a JSON config");
  std::string config_path;
  run->add_option("--config", config_path, "RunConfig JSON");
  std::map<std::string, std::string> str_over;
  std::map<std::string, double> num_over;
  std::optional<unsigned> run_workers;
  for (const char* k : {"cdr", "towers", "districts", "legs", "stations", "out-dir", "ts-format",
                        "timezone", "study-start", "study-end", "normalization"}) {
    run->add_option_function<std::string>(
        std::string("--") + k, [&str_over, k](const std::string& v) { str_over[k] = v; });
  }
  for (const char* k : {"delta-d-m", "delta-t-min", "frequent-threshold-min", "place-radius-m",
                        "place-min-share", "place-max-iter", "transfer-min", "market-share",
                        "penetration", "frequent-share", "granularity-min", "top-k"}) {
    run->add_option_function<double>(std::string("--") + k,
                                     [&num_over, k](double v) { num_over[k] = v; });
  }
  run->add_option("--workers", run_workers, "worker threads (0 = all)");

  // compare
  auto* cmp = app.add_subcommand("compare", "error metrics between two OD series");
  std::string cmp_inferred, cmp_truth, cmp_ms_inferred, cmp_ms_truth, cmp_out;
  cmp->add_option("--inferred", cmp_inferred, "inferred OD series")->required();
  cmp->add_option("--truth", cmp_truth, "ground-truth OD series")->required();
  cmp->add_option("--inferred-mode-share", cmp_ms_inferred, "mode_share.json from a run");
  cmp->add_option("--truth-mode-share", cmp_ms_truth, "truth_mode_share.json from synth");
  cmp->add_option("--out", cmp_out, "output file (stdout when omitted)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      const auto subs = app.get_subcommands();
      out << (subs.empty() ? app.help() : subs.front()->help());
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion&) {
      out << app.version() << '\n';
      return 0;
    } catch (const CLI::ParseError& e) {
      fail(ErrorKind::config, e.what());
    }

    if (*synth) {
      nlohmann::json j = spec_path.empty() ? nlohmann::json::object()
                                           : load_json(spec_path, ErrorKind::config);
      if (synth_seed) j["seed"] = *synth_seed;
      if (synth_agents) j["n_agents"] = *synth_agents;
      const WorldSpec spec = world_spec_from_json(j);
      const SyntheticWorld w = generate(spec, effective_workers(workers));
      write_world(w, synth_out);
      emit(out, {{"out_dir", synth_out},
                 {"events", w.events.size()},
                 {"legs", w.legs.size()},
                 {"trips", w.truth.trips.size()},
                 {"study_start", format_rfc3339(w.study_start())},
                 {"study_end", format_rfc3339(w.study_end())}});
    } else if (*stats) {
      CdrDiagnostics diag;
      const UserEvents ue = stats_in.load(&diag);
      std::vector<UserStats> s;
      for (std::size_t u = 0; u < ue.user_count(); ++u)
        s.push_back(user_stats(static_cast<UserIndex>(u), ue.of(static_cast<UserIndex>(u))));
      const auto freq = filter_frequent(s, stats_threshold);
      write_user_stats_csv(stats_out, s, ue.users, stats_threshold);
      emit(out, {{"users", s.size()},
                 {"frequent", freq.size()},
                 {"records", diag.records},
                 {"malformed_lines", diag.malformed}});
    } else if (*trips) {
      const DistrictMap map = load_district_map(trips_districts);
      CdrDiagnostics diag;
      const UserEvents ue = trips_in.load(&diag);
      auto per_user = parallel_map(ue.user_count(), effective_workers(workers), [&](std::size_t u) {
        const auto user = static_cast<UserIndex>(u);
        const auto ev = ue.of(user);
        const UserStats s = user_stats(user, ev);
        const bool frequent = s.inter_event_mean_min &&
                              *s.inter_event_mean_min < cdr_params.frequent_threshold_min;
        return (all_users || frequent) ? extract_user_trips(user, ev, map, cdr_params)
                                       : std::vector<Trip>{};
      });
      std::vector<Trip> all;
      std::size_t none = 0;
      for (const auto& v : per_user)
        for (const auto& t : v) {
          all.push_back(t);
          none += t.origin_district == kNoDistrict || t.dest_district == kNoDistrict;
        }
      write_trips_csv(trips_out, all, ue.users);
      emit(out, {{"users", ue.user_count()},
                 {"trips", all.size()},
                 {"none_district", none},
                 {"malformed_lines", diag.malformed}});
    } else if (*places) {
      const DistrictMap map = load_district_map(places_districts);
      const UserEvents ue = places_in.load();
      struct PerUser {
        bool frequent;
        std::vector<SignificantPlace> places;
      };
      auto per_user = parallel_map(ue.user_count(), effective_workers(workers), [&](std::size_t u) {
        const auto user = static_cast<UserIndex>(u);
        const UserStats s = user_stats(user, ue.of(user));
        return PerUser{s.inter_event_mean_min && *s.inter_event_mean_min < places_threshold,
                       significant_places(user, ue.of(user), map, place_params)};
      });
      std::vector<SignificantPlace> all, freq;
      for (const auto& p : per_user) {
        all.insert(all.end(), p.places.begin(), p.places.end());
        if (p.frequent) freq.insert(freq.end(), p.places.begin(), p.places.end());
      }
      write_places_csv(places_out, all, ue.users);
      const DistrictShares sh = district_shares(freq, all, map.size());
      if (!shares_out.empty()) write_district_shares_csv(shares_out, sh);
      emit(out, {{"users", ue.user_count()},
                 {"places", all.size()},
                 {"frequent_places", freq.size()},
                 {"phi", sh.phi_overall}});
    } else if (*od) {
      const DistrictMap map = load_district_map(od_districts);
      const TripFile tf = read_trips_csv(od_trips);
      const TimeZone tz = TimeZone::parse(od_grid.timezone);
      Timestamp lo = std::numeric_limits<Timestamp>::max(), hi = std::numeric_limits<Timestamp>::min();
      for (const auto& t : tf.trips) {
        lo = std::min(lo, t.end_t);
        hi = std::max(hi, t.end_t);
      }
      const WindowGrid grid = make_grid(od_grid.study_start, od_grid.study_end,
                                        parse_duration_s(od_grid.granularity), tz, lo, hi);
      BinResult br = bin_trips(tf.trips, map.size(), grid);
      std::vector<ODMatrix> ms = std::move(br.matrices);
      nlohmann::json extra = {{"none_district", br.none_district},
                              {"out_of_window", br.out_of_window},
                              {"binned", br.binned}};
      if (!od_shares.empty()) {
        const auto f = correction_factors(read_district_shares(od_shares));
        if (f.phi_effective.size() != map.size())
          fail(ErrorKind::input, "district shares do not match the district map");
        for (auto& m : ms) {
          m = correct_bias(m, f);
          m.set_label("cdr-corrected");
        }
        extra["phi"] = f.phi;
      }
      if (od_upscale) {
        for (auto& m : ms) {
          m = upscale(m, scaling);
          m.set_label("overall-est");
        }
        extra["scaling_divisor"] = scaling.divisor();
      }
      write_od_series(od_out, ms, std::nullopt, extra);
      emit(out, extra);
    } else if (*pod) {
      const DistrictMap map = load_district_map(pod_districts);
      const StationIndex st = load_stations(pod_stations, map);
      LegLog log = read_legs_file(pod_legs, st, parse_timestamp_format(pod_ts), pod_malformed);
      const CardLegs by_card = group_by_card(log.legs, log.cards.size());
      std::vector<Journey> journeys;
      std::size_t overlaps = 0;
      for (std::size_t c = 0; c < by_card.card_count(); ++c) {
        auto r = chain_journeys(static_cast<CardIndex>(c), by_card.of(static_cast<CardIndex>(c)),
                                transfer_min);
        journeys.insert(journeys.end(), r.journeys.begin(), r.journeys.end());
        overlaps += r.overlaps_dropped;
      }
      const TimeZone tz = TimeZone::parse(pod_grid.timezone);
      Timestamp lo = std::numeric_limits<Timestamp>::max(), hi = std::numeric_limits<Timestamp>::min();
      for (const auto& j : journeys) {
        lo = std::min(lo, j.end_t);
        hi = std::max(hi, j.end_t);
      }
      const WindowGrid grid = make_grid(pod_grid.study_start, pod_grid.study_end,
                                        parse_duration_s(pod_grid.granularity), tz, lo, hi);
      const BinResult br = public_od(journeys, st, map.size(), grid);
      const nlohmann::json extra = {{"legs", log.legs.size()},
                                    {"malformed_lines", log.diag.malformed},
                                    {"overlapping_legs_dropped", overlaps},
                                    {"journeys", journeys.size()},
                                    {"out_of_window", br.out_of_window},
                                    {"binned", br.binned}};
      write_od_series(pod_out, br.matrices, std::nullopt, extra);
      if (!pod_journeys.empty()) write_journeys_csv(pod_journeys, journeys, log.cards, st);
      emit(out, extra);
    } else if (*report) {
      const ODSeries overall = read_od_series(rep_overall);
      const ODSeries pub = read_od_series(rep_public);
      const TimeZone tz = TimeZone::parse(rep_tz);
      if (rep_norm != "per_day" && rep_norm != "total")
        fail(ErrorKind::config, "normalization must be per_day or total");
      const Normalization norm =
          rep_norm == "per_day" ? Normalization::per_day : Normalization::total;
      const auto windows = parse_windows(rep_windows);
      WindowFilter filter;
      filter.workdays_only = !rep_all_days;
      std::vector<ODMatrix> pub_aggs, priv_aggs;
      std::vector<std::pair<std::string, RankingResult>> rankings;
      nlohmann::json clamped = nlohmann::json::object();
      for (const auto& w : windows) {
        filter.start_hour = w.start_hour;
        filter.end_hour = w.end_hour;
        const ODMatrix o = aggregate(overall.matrices, filter, norm, tz);
        const ODMatrix p = aggregate(pub.matrices, filter, norm, tz);
        PrivateResult pr = private_od(o, p);
        clamped[w.name] = {{"cells", pr.clamped_cells}, {"residual", pr.clamped_residual}};
        rankings.emplace_back(w.name, underserved_ranking(p, pr.matrix, top_k));
        pub_aggs.push_back(p);
        priv_aggs.push_back(std::move(pr.matrix));
      }
      const ModeShareReport ms = mode_share(pub_aggs, priv_aggs, windows);
      if (rep_format == "csv") {
        write_or_print(out, rep_out, ranking_csv(rankings));
      } else if (rep_format == "geojson") {
        if (rep_districts.empty()) fail(ErrorKind::config, "--format geojson needs --districts");
        write_or_print(out, rep_out,
                       flows_geojson(rankings, load_district_map(rep_districts)).dump(1) + "\n");
      } else {
        nlohmann::json j = {{"mode_share", to_json(ms)},
                            {"underserved", to_json(std::span(rankings))},
                            {"clamped", clamped}};
        if (intra_samples > 0) {
          if (rep_districts.empty())
            fail(ErrorKind::config, "--intra-district-samples needs --districts");
          j["intra_district"] =
              to_json(intra_district_mean_distance(load_district_map(rep_districts), intra_samples));
        }
        write_or_print(out, rep_out, j.dump(2) + "\n");
      }
    } else if (*run) {
      nlohmann::json j = nlohmann::json::object();
      fs::path base;
      if (!config_path.empty()) {
        j = load_json(config_path, ErrorKind::config);
        base = fs::path(config_path).parent_path();
        if (!j.is_object()) fail(ErrorKind::config, "run config must be a JSON object");
        // Resolve config-relative paths now so flag paths stay CWD-relative.
        for (const char* k : {"cdr", "towers", "districts", "legs", "stations", "out_dir"})
          if (j.contains(k) && j[k].is_string() && fs::path(j[k].get<std::string>()).is_relative())
            j[k] = (base / j[k].get<std::string>()).lexically_normal().string();
      }
      for (const auto& [k, v] : str_over) {
        std::string key = k;
        std::replace(key.begin(), key.end(), '-', '_');
        j[key] = v;
      }
      for (const auto& [k, v] : num_over) {
        std::string key = k;
        std::replace(key.begin(), key.end(), '-', '_');
        if (key == "place_max_iter" || key == "granularity_min" || key == "top_k")
          j[key] = static_cast<long long>(v);
        else
          j[key] = v;
      }
      if (run_workers) j["workers"] = *run_workers;
      const RunConfig cfg = run_config_from_json(j);
      const auto t0 = std::chrono::steady_clock::now();
      const RunResult r = run_pipeline(cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      emit(out, {{"out_dir", cfg.out_dir},
                 {"config_hash", r.manifest["config_hash"]},
                 {"trips", r.manifest["trips"]},
                 {"journeys", r.journeys.size()},
                 {"mode_share", to_json(r.mode_share)},
                 {"elapsed_s", secs}});
    } else if (*cmp) {
      const ODSeries a = read_od_series(cmp_inferred);
      const ODSeries b = read_od_series(cmp_truth);
      nlohmann::json j = to_json(compare(a.matrices, b.matrices));
      if (cmp_ms_inferred.empty() != cmp_ms_truth.empty())
        fail(ErrorKind::config, "give both --inferred-mode-share and --truth-mode-share");
      if (!cmp_ms_inferred.empty()) {
        auto load_ms = [](const std::string& path) {
          const auto doc = load_json(path, ErrorKind::input);
          ModeShareReport r;
          try {
            for (const auto& w : doc.at("mode_share")) {
              WindowShare s;
              s.name = w.at("window").get<std::string>();
              if (w.at("public_share").is_number())
                s.public_share = w["public_share"].get<double>();
              r.windows.push_back(s);
            }
          } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::input, "malformed mode share file " + path + ": " + e.what());
          }
          return r;
        };
        nlohmann::json errs = nlohmann::json::object();
        for (const auto& [name, e] : mode_share_error(load_ms(cmp_ms_inferred), load_ms(cmp_ms_truth)))
          errs[name] = std::isnan(e) ? nlohmann::json("N/A") : nlohmann::json(e);
        j["mode_share_abs_error"] = errs;
      }
      write_or_print(out, cmp_out, j.dump(2) + "\n");
    }
    return 0;
  } catch (const Error& e) {
    err << nlohmann::json({{"error", {{"kind", std::string(error_kind_name(e.kind()))}, {"message", e.what()}}}}).dump()
        << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << nlohmann::json({{"error", {{"kind", "internal"}, {"message", e.what()}}}}).dump() << '\n';
    return exit_code_for(ErrorKind::internal);
  }
}

}  // namespace odflow
