#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "odflow/analysis.hpp"
#include "support.hpp"

using namespace odflow;
using odflow::testing::kSingapore;

namespace {

ODMatrix filled(std::size_t d, std::initializer_list<double> cells) {
  ODMatrix m(d, {0, 3600});
  std::size_t c = 0;
  for (double v : cells) m.cells()[c++] = v;
  return m;
}

double shoelace(const std::vector<LocalXY>& pts) {
  double a = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& q = pts[(i + 1) % pts.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return std::abs(a) / 2.0;
}

bool inside_oracle(const LocalXY& p, const std::vector<LocalXY>& poly) {
  // crossing test on the open polygon
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > p.y) != (poly[j].y > p.y) &&
        p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x)
      in = !in;
  }
  return in;
}

Polygon to_polygon(const std::vector<LocalXY>& pts, const Projection& proj) {
  Polygon p;
  for (const auto& q : pts) p.outer.push_back(proj.unproject(q));
  p.outer.push_back(p.outer.front());
  return p;
}

}  // namespace

TEST(PrivateOd, Difference) {
  const ODMatrix o = filled(2, {0, 100, 5, 0});
  const ODMatrix p = filled(2, {0, 60, 0, 0});
  const PrivateResult r = private_od(o, p);
  EXPECT_EQ(r.matrix(0, 1), 40.0);
  EXPECT_EQ(r.matrix(1, 0), 5.0);
  EXPECT_EQ(r.clamped_residual, 0.0);
  EXPECT_EQ(r.matrix.kind(), MatrixKind::estimate);
}

TEST(PrivateOd, NegativeClampedAndReported) {
  const PrivateResult r = private_od(filled(2, {0, 50, 0, 0}), filled(2, {0, 60, 1, 0}));
  EXPECT_EQ(r.matrix(0, 1), 0.0);
  EXPECT_EQ(r.matrix(1, 0), 0.0);
  EXPECT_EQ(r.clamped_residual, 11.0);
  EXPECT_EQ(r.clamped_cells, 2u);
}

TEST(PrivateOd, WindowMismatchRejected) {
  ODMatrix a(2, {0, 3600}), b(2, {0, 7200});
  EXPECT_THROW(private_od(a, b), Error);
}

TEST(ModeShare, InterDistrictOnly) {
  // diagonal cells would change the answer if counted
  const WindowShare s = window_share("w", filled(2, {50, 30, 20, 70}), filled(2, {9, 10, 40, 9}));
  EXPECT_EQ(s.public_trips, 50.0);
  EXPECT_EQ(s.private_trips, 50.0);
  EXPECT_DOUBLE_EQ(*s.public_share, 0.5);
}

TEST(ModeShare, NoTripsIsUndefined) {
  const WindowShare s = window_share("w", filled(2, {3, 0, 0, 0}), filled(2, {0, 0, 0, 4}));
  EXPECT_FALSE(s.public_share.has_value());
  EXPECT_EQ(to_json(s)["public_share"], "N/A");
}

TEST(ModeShare, ScaleInvariant) {
  ODMatrix p = filled(3, {0, 1, 2, 3, 0, 4, 5, 6, 0});
  ODMatrix q = filled(3, {0, 7, 1, 1, 0, 2, 3, 1, 0});
  const double a = *window_share("w", p, q).public_share;
  p.scale(7.5);
  q.scale(7.5);
  EXPECT_NEAR(*window_share("w", p, q).public_share, a, 1e-12);
}

TEST(ModeShare, OnePairPerWindow) {
  const auto windows = default_time_windows();
  std::vector<ODMatrix> two(2, ODMatrix(2, {0, 1}));
  EXPECT_THROW(mode_share(two, two, windows), Error);
}

TEST(Ranking, CandidatePoolIsAllDirectedPairs) {
  EXPECT_EQ(candidate_pool_size(55), 2970u);
  const ODMatrix z(55, {0, 1});
  const RankingResult r = underserved_ranking(z, z, 5000);
  EXPECT_EQ(r.candidate_pool, 2970u);
  EXPECT_EQ(r.top.size(), 2970u);
  for (const auto& c : r.top) EXPECT_NE(c.origin, c.dest);
}

TEST(Ranking, OrderAndTies) {
  // totals: (0,1)=10, (0,2)=10, (1,0)=30, (2,1)=10, (1,2)=0, (2,0)=0; diagonal is huge but ignored
  const ODMatrix pub = filled(3, {900, 4, 10, 10, 0, 0, 0, 5, 900});
  const ODMatrix priv = filled(3, {900, 6, 0, 20, 0, 0, 0, 5, 900});
  const RankingResult r = underserved_ranking(pub, priv, 4);
  ASSERT_EQ(r.top.size(), 4u);
  EXPECT_EQ(std::pair(r.top[0].origin, r.top[0].dest), std::pair(1, 0));
  EXPECT_EQ(std::pair(r.top[1].origin, r.top[1].dest), std::pair(0, 1));
  EXPECT_EQ(std::pair(r.top[2].origin, r.top[2].dest), std::pair(0, 2));
  EXPECT_EQ(std::pair(r.top[3].origin, r.top[3].dest), std::pair(2, 1));
  EXPECT_TRUE(r.top[0].underserved);
  EXPECT_TRUE(r.top[1].underserved);
  EXPECT_FALSE(r.top[2].underserved);
  EXPECT_FALSE(r.top[3].underserved);  // 5 vs 5 is not strictly more private
  EXPECT_DOUBLE_EQ(r.top[1].private_share, 0.6);
}

TEST(Ranking, EightyPercentPrivateFlagged) {
  const RankingResult r = underserved_ranking(filled(2, {0, 20, 0, 0}), filled(2, {0, 80, 0, 0}));
  ASSERT_FALSE(r.top.empty());
  EXPECT_TRUE(r.top[0].underserved);
  EXPECT_DOUBLE_EQ(r.top[0].private_share, 0.8);
  EXPECT_THROW(underserved_ranking(ODMatrix(1, {0, 1}), ODMatrix(1, {0, 1})), Error);
}

TEST(IntraDistrict, ClosedFormConstant) {
  EXPECT_NEAR(kSquareMeanDistance, 0.52140543, 1e-8);
}

TEST(IntraDistrict, TriangulationPreservesArea) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> rad(300.0, 1000.0), ang(0.0, 2 * std::numbers::pi);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(10);
    for (auto& x : a) x = ang(rng);
    std::sort(a.begin(), a.end());
    std::vector<LocalXY> pts;
    for (double t : a) {
      const double r = rad(rng);
      pts.push_back({r * std::cos(t), r * std::sin(t)});
    }
    if (trial % 2) std::reverse(pts.begin(), pts.end());
    const auto tris = detail::triangulate(pts);
    EXPECT_EQ(tris.size(), pts.size() - 2);
    double sum = 0.0;
    for (const auto& t : tris) sum += std::abs(detail::tri_area2(t[0], t[1], t[2])) / 2.0;
    EXPECT_NEAR(sum, shoelace(pts), 1e-6 * shoelace(pts));
  }
}

TEST(IntraDistrict, SamplerAgreesWithRejectionOracle) {
  const Projection proj(kSingapore);
  // L-shaped, non-convex
  const std::vector<LocalXY> L{{0, 0}, {3000, 0}, {3000, 1000}, {1000, 1000}, {1000, 3000}, {0, 3000}};
  const PolygonSampler sampler(to_polygon(L, proj), proj);
  EXPECT_NEAR(sampler.area(), shoelace(L), 1.0);

  std::mt19937_64 rng(5);
  const std::size_t n = 200000;
  const MeanDistance got = polygon_mean_distance(sampler, n, rng);

  std::mt19937_64 orng(6);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  auto draw = [&] {
    for (;;) {
      const LocalXY p{u(orng), u(orng)};
      if (inside_oracle(p, L)) return p;
    }
  };
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = norm(draw(), draw());
    s += d;
    s2 += d * d;
  }
  const double om = s / n;
  const double ose = std::sqrt((s2 / n - om * om) / n);
  EXPECT_NEAR(got.mean, om, 3.0 * std::hypot(got.stderr_, ose));
}

TEST(IntraDistrict, UnitSquare) {
  const Projection proj(kSingapore);
  const PolygonSampler sq(to_polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, proj), proj);
  std::mt19937_64 rng(1);
  const MeanDistance md = polygon_mean_distance(sq, 200000, rng);
  EXPECT_NEAR(md.mean, kSquareMeanDistance, 0.002);
}

TEST(IntraDistrict, HoleUsesRejection) {
  const Projection proj(kSingapore);
  Polygon p = to_polygon({{0, 0}, {3000, 0}, {3000, 3000}, {0, 3000}}, proj);
  p.holes.push_back(to_polygon({{1000, 1000}, {2000, 1000}, {2000, 2000}, {1000, 2000}}, proj).outer);
  const PolygonSampler s(p, proj);
  EXPECT_NEAR(s.area(), 8e6, 10.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const LocalXY q = s.sample(rng);
    EXPECT_FALSE(q.x > 1000.5 && q.x < 1999.5 && q.y > 1000.5 && q.y < 1999.5);
  }
}

TEST(IntraDistrict, ReportOnGrid) {
  const DistrictMap map = odflow::testing::grid_map(2, 1, 3600);
  const IntraDistrictReport r = intra_district_mean_distance(map, 100000);
  ASSERT_EQ(r.districts.size(), 2u);
  EXPECT_NEAR(r.mean_side_m, 3600.0, 0.5);
  EXPECT_NEAR(r.square_estimate_m, 3600.0 * kSquareMeanDistance, 0.5);
  for (const auto& e : r.districts) EXPECT_NEAR(e.mc_mean_m, 1877.06, 4 * e.mc_stderr_m + 1.0);
  EXPECT_THROW(intra_district_mean_distance(map, 9999), Error);
}
