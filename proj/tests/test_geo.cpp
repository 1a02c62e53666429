#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "odflow/geo.hpp"
#include "support.hpp"

using namespace odflow;
using odflow::testing::kSingapore;

namespace {

// Independent oracle: winding number of a closed ring around p.
int winding_number(const GeoPoint& p, const Ring& ring) {
  int wn = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const GeoPoint& a = ring[i];
    const GeoPoint& b = ring[i + 1];
    const double side = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
    if (a.lat <= p.lat) {
      if (b.lat > p.lat && side > 0) ++wn;
    } else if (b.lat <= p.lat && side < 0) {
      --wn;
    }
  }
  return wn;
}

// Random star-shaped (hence simple) polygon around a centre.
Ring random_star(std::mt19937_64& rng, GeoPoint c, double r_deg, int n) {
  std::uniform_real_distribution<double> rad(0.3 * r_deg, r_deg);
  std::vector<double> angles(n);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  for (auto& a : angles) a = ang(rng);
  std::sort(angles.begin(), angles.end());
  Ring ring;
  for (double a : angles) {
    const double r = rad(rng);
    ring.push_back({c.lon + r * std::cos(a), c.lat + r * std::sin(a)});
  }
  ring.push_back(ring.front());
  return ring;
}

DistrictMap two_squares_sharing_an_edge() {
  // District 0 on the left, district 1 on the right; shared edge at lon 103.9.
  District a{0, "left", {{{103.8, 1.3}, {103.9, 1.3}, {103.9, 1.4}, {103.8, 1.4}, {103.8, 1.3}}, {}}};
  District b{1, "right", {{{103.9, 1.3}, {104.0, 1.3}, {104.0, 1.4}, {103.9, 1.4}, {103.9, 1.3}}, {}}};
  return DistrictMap({b, a});
}

}  // namespace

TEST(Projection, OriginMapsToZero) {
  const LocalXY q = project(kSingapore, kSingapore);
  EXPECT_EQ(q.x, 0.0);
  EXPECT_EQ(q.y, 0.0);
}

TEST(Projection, HundredthDegreeOfLatitude) {
  const LocalXY q = project({kSingapore.lon, kSingapore.lat + 0.01}, kSingapore);
  EXPECT_NEAR(q.y, 1111.9, 0.5);
  EXPECT_NEAR(q.x, 0.0, 1e-9);
}

TEST(Projection, HundredthDegreeOfLongitudeAtSingapore) {
  const GeoPoint origin{103.8, 1.35};
  const LocalXY q = project({origin.lon + 0.01, origin.lat}, origin);
  EXPECT_NEAR(q.x, 1111.6, 0.5);
  EXPECT_NEAR(q.y, 0.0, 1e-9);
}

TEST(Projection, RoundTripWithinHundredKilometres) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100000.0, 100000.0);
  const Projection proj(kSingapore);
  for (int i = 0; i < 10000; ++i) {
    const GeoPoint p = proj.unproject({u(rng), u(rng)});
    const GeoPoint back = proj.unproject(proj.project(p));
    EXPECT_LT(distance_m(p, back), 1.0);
  }
}

TEST(Distance, ZeroForSamePoint) { EXPECT_EQ(distance_m(kSingapore, kSingapore), 0.0); }

TEST(Distance, JustAboveTwoKilometres) {
  const double d = distance_m(kSingapore, {kSingapore.lon, kSingapore.lat + 0.018});
  EXPECT_NEAR(d, 6371000.0 * 0.018 * std::numbers::pi / 180.0, 1e-6);
  EXPECT_GT(d, 2000.0);
  EXPECT_NEAR(d, 2001.5, 0.5);
}

TEST(Distance, MetricOnRandomTriples) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lon(103.6, 104.0), lat(1.2, 1.5);
  const Projection proj(kSingapore);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a{lon(rng), lat(rng)}, b{lon(rng), lat(rng)}, c{lon(rng), lat(rng)};
    EXPECT_EQ(distance_m(a, b), distance_m(b, a));
    EXPECT_GT(distance_m(a, b), 0.0);
    EXPECT_LE(distance_m(a, c), distance_m(a, b) + distance_m(b, c));
    EXPECT_LE(proj.distance_m(a, c), proj.distance_m(a, b) + proj.distance_m(b, c));
  }
}

TEST(DistrictOf, ConvexCentroidAndOutside) {
  const DistrictMap map = odflow::testing::grid_map(3, 3, 3600);
  EXPECT_EQ(map.district_of(map.centroid(0)), 0);
  for (DistrictId d = 0; d < 9; ++d) EXPECT_EQ(map.district_of(map.centroid(d)), d);
  EXPECT_EQ(map.district_of({kSingapore.lon + 1.0, kSingapore.lat}), kNoDistrict);
}

TEST(DistrictOf, SharedEdgeGoesToLowestId) {
  const DistrictMap map = two_squares_sharing_an_edge();
  const GeoPoint on_edge{103.9, 1.35};
  EXPECT_EQ(map.district_of(on_edge), 0);
  // Both rings contain or touch the point; the oracle confirms neither has it strictly inside.
  EXPECT_EQ(winding_number({103.95, 1.35}, map.district(1).polygon.outer) != 0, true);
  EXPECT_EQ(map.district_of({103.95, 1.35}), 1);
  EXPECT_EQ(map.district_of({103.85, 1.35}), 0);
}

TEST(DistrictOf, SharedEdgeOnGridMatchesTieRule) {
  // 4 x 2 grid: districts 3 and 7 are vertically adjacent.
  const DistrictMap map = odflow::testing::grid_map(4, 2, 3600);
  const Ring& r3 = map.district(3).polygon.outer;
  // Top edge of district 3 runs from r3[2] to r3[3].
  const GeoPoint mid{(r3[2].lon + r3[3].lon) / 2, r3[2].lat};
  EXPECT_EQ(map.district_of(mid), 3);
}

TEST(DistrictOf, AgreesWithWindingNumberOracle) {
  std::mt19937_64 rng(2024);
  std::vector<District> ds;
  for (int i = 0; i < 6; ++i) {
    const GeoPoint c{103.7 + 0.1 * (i % 3), 1.3 + 0.1 * (i / 3)};
    ds.push_back({i, "star" + std::to_string(i), {random_star(rng, c, 0.06, 12), {}}});
  }
  std::vector<Ring> rings;
  for (const auto& d : ds) rings.push_back(d.polygon.outer);
  const DistrictMap map(ds);
  std::uniform_real_distribution<double> lon(103.6, 104.0), lat(1.2, 1.5);
  int inside = 0;
  for (int i = 0; i < 20000; ++i) {
    const GeoPoint p{lon(rng), lat(rng)};
    DistrictId expected = kNoDistrict;
    for (std::size_t k = 0; k < rings.size(); ++k)
      if (winding_number(p, rings[k]) != 0) {
        expected = static_cast<DistrictId>(k);
        break;
      }
    inside += expected != kNoDistrict;
    ASSERT_EQ(map.district_of(p), expected) << p.lon << "," << p.lat;
  }
  EXPECT_GT(inside, 2000);
}

TEST(DistrictOf, HoleIsOutside) {
  District d{0, "donut",
             {{{103.8, 1.3}, {104.0, 1.3}, {104.0, 1.5}, {103.8, 1.5}, {103.8, 1.3}},
              {{{103.85, 1.35}, {103.95, 1.35}, {103.95, 1.45}, {103.85, 1.45}, {103.85, 1.35}}}}};
  const DistrictMap map({d});
  EXPECT_EQ(map.district_of({103.9, 1.4}), kNoDistrict);
  EXPECT_EQ(map.district_of({103.81, 1.4}), 0);
}

TEST(DistrictMap, RejectsDuplicateAndGappedIds) {
  District a{0, "a", {{{103.8, 1.3}, {103.9, 1.3}, {103.9, 1.4}, {103.8, 1.3}}, {}}};
  District b = a;
  try {
    DistrictMap m({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
  b.id = 2;
  EXPECT_THROW(DistrictMap({a, b}), Error);
}

TEST(DistrictMap, RejectsOpenAndSelfIntersectingRings) {
  District open{0, "open", {{{103.8, 1.3}, {103.9, 1.3}, {103.9, 1.4}, {103.8, 1.4}}, {}}};
  EXPECT_THROW(DistrictMap({open}), Error);
  District bowtie{0, "bowtie",
                  {{{103.8, 1.3}, {103.9, 1.4}, {103.9, 1.3}, {103.8, 1.4}, {103.8, 1.3}}, {}}};
  EXPECT_THROW(DistrictMap({bowtie}), Error);
}

TEST(DistrictMap, AreaOfGridSquare) {
  const DistrictMap map = odflow::testing::grid_map(2, 2, 3600);
  for (DistrictId d = 0; d < 4; ++d) EXPECT_NEAR(map.area_m2(d), 3600.0 * 3600.0, 1e-3);
}

TEST(DistrictMap, GeoJsonRoundTrip) {
  const DistrictMap map = odflow::testing::grid_map(3, 2, 2000);
  const auto j = district_map_to_geojson(map);
  const DistrictMap back = district_map_from_geojson(j);
  ASSERT_EQ(back.size(), map.size());
  for (DistrictId d = 0; d < 6; ++d) {
    EXPECT_EQ(back.district(d).name, map.district(d).name);
    EXPECT_EQ(back.district(d).polygon.outer, map.district(d).polygon.outer);
  }
  EXPECT_EQ(back.projection().origin(), map.projection().origin());
}

TEST(DistrictMap, GeoJsonRequiresIdAndName) {
  auto j = district_map_to_geojson(odflow::testing::grid_map(1, 1, 1000));
  j["features"][0]["properties"].erase("name");
  EXPECT_THROW(district_map_from_geojson(j), Error);
}

TEST(DistrictMap, MissingFileIsInputMissing) {
  try {
    load_district_map("/nonexistent/districts.geojson");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input_missing);
    EXPECT_EQ(e.exit_code(), 2);
  }
}
