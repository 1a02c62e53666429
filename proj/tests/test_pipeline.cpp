#include <gtest/gtest.h>

#include <sstream>

#include "odflow/cli.hpp"
#include "odflow/pipeline.hpp"
#include "odflow/synth.hpp"
#include "support.hpp"

using namespace odflow;
using odflow::testing::read_file;
using odflow::testing::TempDir;
using odflow::testing::write_file;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "odflow");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = odflow::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

WorldSpec detectable_spec(std::size_t agents) {
  WorldSpec s;
  s.cols = 3;
  s.rows = 3;
  s.n_agents = agents;
  s.seed = 7;
  return s;
}

RunConfig config_for(const std::filesystem::path& dir) {
  return run_config_from_json(nlohmann::json::parse(read_file(dir / "run_config.json")), dir);
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    m[e.path().filename().string()] = read_file(e.path());
  return m;
}

}  // namespace

TEST(Pipeline, DetectableWorldRawOdEqualsTruth) {
  const SyntheticWorld w = generate(detectable_spec(300));
  TempDir dir;
  write_world(w, dir.path());
  const RunResult r = run_pipeline_in_memory(config_for(dir.path()));
  EXPECT_EQ(r.grid.start, w.truth.grid.start);
  EXPECT_EQ(r.grid.count, w.truth.grid.count);

  const auto truth = truth_od_for(w, [](const AgentInfo& a) { return a.frequent && a.subscriber; });
  const CompareResult c = compare(r.raw.matrices, truth);
  EXPECT_EQ(c.cellwise_l1, 0.0);
  EXPECT_GT(c.total_truth, 100.0);

  std::size_t expected = 0;
  for (const auto& t : w.truth.trips)
    expected += w.truth.agents[t.agent].frequent && w.truth.agents[t.agent].subscriber;
  EXPECT_EQ(r.trips.size(), expected);
  EXPECT_EQ(r.raw.none_district, 0u);
  EXPECT_EQ(r.raw.out_of_window, 0u);
}

TEST(Pipeline, PublicOdEqualsTruthExactly) {
  const SyntheticWorld w = generate(detectable_spec(300));
  TempDir dir;
  write_world(w, dir.path());
  const RunResult r = run_pipeline_in_memory(config_for(dir.path()));
  EXPECT_EQ(compare(r.pub.matrices, w.truth.pub).cellwise_l1, 0.0);
  std::size_t public_trips = 0;
  for (const auto& t : w.truth.trips) public_trips += t.mode == TravelMode::public_transport;
  EXPECT_EQ(r.journeys.size(), public_trips);
}

TEST(Pipeline, ManifestArithmetic) {
  const SyntheticWorld w = generate(detectable_spec(200));
  TempDir dir;
  write_world(w, dir.path());
  RunConfig cfg = config_for(dir.path());
  cfg.out_dir = dir.file("out");
  const RunResult r = run_pipeline(cfg);
  const auto m = nlohmann::json::parse(read_file(dir.path() / "out" / "manifest.json"));
  const auto& t = m["trips"];
  EXPECT_EQ(t["extracted"].get<std::size_t>(),
            t["none_district"].get<std::size_t>() + t["out_of_window"].get<std::size_t>() +
                t["binned"].get<std::size_t>());
  const auto& p = m["public"];
  EXPECT_EQ(p["journeys"].get<std::size_t>(),
            p["none_district"].get<std::size_t>() + p["out_of_window"].get<std::size_t>() +
                p["binned"].get<std::size_t>());
  EXPECT_EQ(m["inputs"]["cdr"]["records"].get<std::size_t>(), w.events.size());
  EXPECT_EQ(m["users"]["total"].get<std::size_t>(), r.users.size());
  EXPECT_EQ(m["scaling"]["frequent_share_source"], "measured");
  EXPECT_DOUBLE_EQ(m["scaling"]["frequent_share"].get<double>(), r.shares.phi_overall);
  for (const auto& f : m["outputs"])
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "out" / f.get<std::string>())) << f;
  // overall = public + private in every window where nothing was clamped
  for (const auto& wr : r.reports) {
    if (wr.priv.clamped_cells != 0) continue;
    for (std::size_t c = 0; c < wr.overall.cells().size(); ++c)
      EXPECT_NEAR(wr.overall.cells()[c], wr.pub.cells()[c] + wr.priv.matrix.cells()[c], 1e-9);
  }
}

TEST(Pipeline, WorkerCountDoesNotChangeOutputs) {
  WorldSpec s = detectable_spec(400);
  s.regime = SynthRegime::naturalistic;
  const SyntheticWorld w = generate(s);
  TempDir dir;
  write_world(w, dir.path());
  RunConfig cfg = config_for(dir.path());
  cfg.out_dir = dir.file("one");
  cfg.workers = 1;
  run_pipeline(cfg);
  cfg.out_dir = dir.file("four");
  cfg.workers = 4;
  run_pipeline(cfg);
  const auto a = snapshot(dir.path() / "one"), b = snapshot(dir.path() / "four");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) EXPECT_EQ(bytes, b.at(name)) << name;
}

TEST(Pipeline, ConfiguredFrequentShareUsed) {
  const SyntheticWorld w = generate(detectable_spec(100));
  TempDir dir;
  write_world(w, dir.path());
  RunConfig cfg = config_for(dir.path());
  cfg.frequent_share = 0.5;
  cfg.market_share = 0.25;
  const RunResult r = run_pipeline_in_memory(cfg);
  EXPECT_EQ(r.manifest["scaling"]["frequent_share_source"], "config");
  for (std::size_t k = 0; k < r.corrected.size(); ++k)
    for (std::size_t c = 0; c < r.corrected[k].cells().size(); ++c)
      EXPECT_NEAR(r.estimate[k].cells()[c], r.corrected[k].cells()[c] / (0.25 * 1.0 * 0.5), 1e-9);
}

TEST(RunConfigJson, UnknownKeyAndMissingInputs) {
  EXPECT_THROW(run_config_from_json({{"cdr_file", "x"}}), Error);
  RunConfig c = run_config_from_json({{"cdr", "a.csv"}, {"districts", "d.geojson"}});
  try {
    validate(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  EXPECT_THROW(run_config_from_json({{"normalization", "mean"}}), Error);
  EXPECT_THROW(run_config_from_json({{"top_k", "many"}}), Error);
}

TEST(RunConfigJson, RelativePathsResolveAgainstBase) {
  const RunConfig c = run_config_from_json({{"cdr", "in/cdr.csv"}, {"legs", "/abs/legs.csv"}},
                                           "/data/run");
  EXPECT_EQ(c.cdr, "/data/run/in/cdr.csv");
  EXPECT_EQ(c.legs, "/abs/legs.csv");
}

TEST(RunConfigJson, EchoHashIgnoresWorkersAndOutDir) {
  RunConfig a, b;
  b.workers = 8;
  b.out_dir = "elsewhere";
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  b.transfer_min = 30;
  EXPECT_NE(to_json(a).dump(), to_json(b).dump());
}

TEST(Cli, MissingDistrictsIsInputMissing) {
  const SyntheticWorld w = generate(detectable_spec(20));
  TempDir dir;
  write_world(w, dir.path());
  std::filesystem::remove(dir.path() / "districts.geojson");
  const auto r = cli({"run", "--config", dir.file("run_config.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("input-missing"), std::string::npos) << r.err;
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
  TempDir dir;
  write_file(dir.path() / "c.json", R"({"cdr": "x.csv", "colour": "blue"})");
  const auto r = cli({"run", "--config", dir.file("c.json")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("\"config\""), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({"frobnicate"}).code, 3);
  EXPECT_EQ(cli({"stats", "--cdr", "x.csv"}).code, 3);  // --out missing
  EXPECT_EQ(cli({"stats", "--help"}).code, 0);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"stats", "--cdr", "/nonexistent.csv", "--out", "/tmp/x.csv"}).code, 2);
}

TEST(Cli, StagedCommandsMatchFullRun) {
  TempDir dir;
  const auto p = [&](const char* f) { return dir.file(f); };
  ASSERT_EQ(cli({"synth", "--out-dir", dir.file("world"), "--n-agents", "150", "--seed", "3"}).code,
            0);
  const std::string world = dir.file("world");
  const auto wf = [&](const char* f) { return world + "/" + f; };
  const auto run = cli({"run", "--config", wf("run_config.json"), "--out-dir", p("run"),
                        "--workers", "2"});
  ASSERT_EQ(run.code, 0) << run.err;
  const auto summary = nlohmann::json::parse(run.out);
  EXPECT_TRUE(summary.contains("elapsed_s"));

  const auto cfg = nlohmann::json::parse(read_file(wf("run_config.json")));
  const std::string s0 = cfg["study_start"], s1 = cfg["study_end"];

  ASSERT_EQ(cli({"stats", "--cdr", wf("cdr.csv"), "--out", p("stats.csv")}).code, 0);
  EXPECT_EQ(read_file(p("stats.csv")), read_file(dir.path() / "run" / "user_stats.csv"));

  ASSERT_EQ(cli({"trips", "--cdr", wf("cdr.csv"), "--districts", wf("districts.geojson"),
                 "--out", p("trips.csv")})
                .code,
            0);
  EXPECT_EQ(read_file(p("trips.csv")), read_file(dir.path() / "run" / "trips.csv"));

  ASSERT_EQ(cli({"places", "--cdr", wf("cdr.csv"), "--districts", wf("districts.geojson"),
                 "--out", p("places.csv"), "--shares-out", p("shares.csv")})
                .code,
            0);
  EXPECT_EQ(read_file(p("places.csv")), read_file(dir.path() / "run" / "places.csv"));
  EXPECT_EQ(read_file(p("shares.csv")), read_file(dir.path() / "run" / "district_shares.csv"));

  ASSERT_EQ(cli({"od", "--trips", p("trips.csv"), "--districts", wf("districts.geojson"),
                 "--study-start", s0, "--study-end", s1, "--out", p("raw.csv")})
                .code,
            0);
  const auto raw = read_od_series(p("raw.csv"));
  EXPECT_EQ(compare(raw.matrices, read_od_series(dir.path() / "run" / "od_raw.csv").matrices)
                .cellwise_l1,
            0.0);

  const auto up = cli({"od", "--trips", p("trips.csv"), "--districts", wf("districts.geojson"),
                       "--study-start", s0, "--study-end", s1, "--shares", p("shares.csv"),
                       "--upscale", "--market-share", "1", "--penetration", "1",
                       "--frequent-share",
                       std::to_string(nlohmann::json::parse(read_file(dir.path() / "run" /
                                                                      "manifest.json"))
                                          ["scaling"]["frequent_share"]
                                              .get<double>()),
                       "--out", p("overall.csv")});
  ASSERT_EQ(up.code, 0) << up.err;
  const auto overall = read_od_series(p("overall.csv"));
  const auto full = read_od_series(dir.path() / "run" / "od_overall.csv");
  EXPECT_LT(compare(overall.matrices, full.matrices).total_relative_error, 1e-5);

  ASSERT_EQ(cli({"public-od", "--legs", wf("legs.csv"), "--stations", wf("stations.csv"),
                 "--districts", wf("districts.geojson"), "--study-start", s0, "--study-end", s1,
                 "--out", p("public.csv"), "--journeys-out", p("journeys.csv")})
                .code,
            0);
  EXPECT_EQ(compare(read_od_series(p("public.csv")).matrices,
                    read_od_series(wf("truth_public.csv")).matrices)
                .cellwise_l1,
            0.0);

  const auto rep = cli({"report", "--overall", dir.file("run/od_overall.csv"), "--public",
                        p("public.csv"), "--format", "json"});
  ASSERT_EQ(rep.code, 0) << rep.err;
  const auto rj = nlohmann::json::parse(rep.out);
  const auto ms = nlohmann::json::parse(read_file(dir.path() / "run" / "mode_share.json"));
  EXPECT_EQ(rj["mode_share"], ms["mode_share"]);

  const auto cmp = cli({"compare", "--inferred", dir.file("run/od_public.csv"), "--truth",
                        wf("truth_public.csv"), "--inferred-mode-share",
                        dir.file("run/mode_share.json"), "--truth-mode-share",
                        wf("truth_mode_share.json")});
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  EXPECT_EQ(nlohmann::json::parse(cmp.out)["cellwise_l1"], 0.0);
}
