#include <gtest/gtest.h>

#include <sstream>

#include "odflow/transit.hpp"
#include "support.hpp"

using namespace odflow;

namespace {

SmartCardLeg leg(Timestamp b, Timestamp a, StationId from, StationId to) {
  return {0, b, a, from, to};
}

// Two districts side by side; A, B in 0 and C in 1.
struct Fixture {
  DistrictMap map = odflow::testing::grid_map(2, 1, 4000);
  StationIndex stations;
  Fixture() {
    const Projection& p = map.projection();
    stations.add("A", p.unproject({-3000, 0}), map);
    stations.add("B", p.unproject({-1000, 0}), map);
    stations.add("C", p.unproject({2000, 0}), map);
  }
};

}  // namespace

TEST(Chaining, GapJustUnderThresholdMerges) {
  const std::vector<SmartCardLeg> legs{leg(0, 600, 0, 1), leg(600 + 44 * 60 + 59, 4000, 1, 2)};
  const auto r = chain_journeys(0, legs);
  ASSERT_EQ(r.journeys.size(), 1u);
  EXPECT_EQ(r.journeys[0].origin_station, 0u);
  EXPECT_EQ(r.journeys[0].dest_station, 2u);
  EXPECT_EQ(r.journeys[0].start_t, 0);
  EXPECT_EQ(r.journeys[0].end_t, 4000);
  EXPECT_EQ(r.journeys[0].n_legs, 2u);
}

TEST(Chaining, GapOfExactlyThresholdSplits) {
  const std::vector<SmartCardLeg> legs{leg(0, 600, 0, 1), leg(600 + 45 * 60, 4000, 1, 2)};
  const auto r = chain_journeys(0, legs);
  ASSERT_EQ(r.journeys.size(), 2u);
  EXPECT_EQ(r.journeys[1].origin_station, 1u);
}

TEST(Chaining, ThreeLegsMergeTransitively) {
  const std::vector<SmartCardLeg> legs{leg(0, 100, 0, 1), leg(200, 300, 1, 2), leg(400, 500, 2, 0)};
  const auto r = chain_journeys(0, legs);
  ASSERT_EQ(r.journeys.size(), 1u);
  EXPECT_EQ(r.journeys[0].n_legs, 3u);
  EXPECT_EQ(r.journeys[0].dest_station, 0u);
}

TEST(Chaining, OverlappingLegLaterWins) {
  const std::vector<SmartCardLeg> legs{leg(0, 1000, 0, 1), leg(500, 800, 2, 1)};
  const auto r = chain_journeys(0, legs);
  EXPECT_EQ(r.overlaps_dropped, 1u);
  EXPECT_EQ(r.accepted_legs, 1u);
  ASSERT_EQ(r.journeys.size(), 1u);
  EXPECT_EQ(r.journeys[0].origin_station, 2u);
}

TEST(Chaining, TouchingLegsAreNotOverlaps) {
  const std::vector<SmartCardLeg> legs{leg(0, 1000, 0, 1), leg(1000, 1800, 1, 2)};
  const auto r = chain_journeys(0, legs);
  EXPECT_EQ(r.overlaps_dropped, 0u);
  EXPECT_EQ(r.journeys.size(), 1u);
}

TEST(Chaining, CustomTransferMinutes) {
  const std::vector<SmartCardLeg> legs{leg(0, 100, 0, 1), leg(100 + 600, 900, 1, 2)};
  EXPECT_EQ(chain_journeys(0, legs, 10.0).journeys.size(), 2u);
  EXPECT_EQ(chain_journeys(0, legs, 10.01).journeys.size(), 1u);
}

TEST(Stations, OutsideDistrictsIsFatal) {
  Fixture fx;
  EXPECT_THROW(fx.stations.add("Z", {fx.map.projection().origin().lon + 1.0, 1.35}, fx.map), Error);
  EXPECT_THROW(fx.stations.add("A", fx.map.centroid(0), fx.map), Error);
  EXPECT_EQ(fx.stations.district(0), 0);
  EXPECT_EQ(fx.stations.district(2), 1);
}

TEST(Legs, UnknownStationIsFatal) {
  Fixture fx;
  std::istringstream in(
      "card_id,board_time,alight_time,board_station,alight_station\n"
      "c1,100,200,A,Q\n");
  try {
    parse_legs(in, fx.stations);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
    EXPECT_NE(std::string(e.what()).find("Q"), std::string::npos);
  }
}

TEST(Legs, NonPositiveDurationIsMalformed) {
  Fixture fx;
  std::istringstream in(
      "card_id,board_time,alight_time,board_station,alight_station\n"
      "c1,100,200,A,C\n"
      "c1,300,300,C,A\n");
  const LegLog log = parse_legs(in, fx.stations, TimestampFormat::unix_seconds, 0.5);
  EXPECT_EQ(log.legs.size(), 1u);
  EXPECT_EQ(log.diag.malformed, 1u);
}

TEST(PublicOd, BinsJourneysByDistrict) {
  Fixture fx;
  std::istringstream in(
      "card_id,board_time,alight_time,board_station,alight_station\n"
      "c2,5000,5400,C,A\n"
      "c1,100,500,A,B\n"
      "c1,900,1500,B,C\n");
  const LegLog log = parse_legs(in, fx.stations);
  const CardLegs g = group_by_card(log.legs, log.cards.size());
  std::vector<Journey> js;
  for (CardIndex c = 0; c < g.card_count(); ++c) {
    const auto r = chain_journeys(c, g.of(c));
    js.insert(js.end(), r.journeys.begin(), r.journeys.end());
  }
  ASSERT_EQ(js.size(), 2u);
  const BinResult r = public_od(js, fx.stations, 2, {0, 3600, 2});
  EXPECT_EQ(r.matrices[0](0, 1), 1.0);  // A -> C via B, ends at 1500
  EXPECT_EQ(r.matrices[1](1, 0), 1.0);
  EXPECT_EQ(r.binned, 2u);
}
