#pragma once

// Private OD by subtraction, time-of-day mode shares, underserved-connection
// ranking and the intra-district mean-distance check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odflow/error.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"
#include "odflow/od.hpp"

namespace odflow {

struct PrivateResult {
  ODMatrix matrix;
  double clamped_residual = 0.0;  // total magnitude removed by clamping
  std::size_t clamped_cells = 0;
};

/// overall - public, cellwise, with negative cells clamped to zero.
inline PrivateResult private_od(const ODMatrix& overall, const ODMatrix& pub) {
  if (overall.dim() != pub.dim())
    fail(ErrorKind::input, "private_od: dimension mismatch");
  if (!(overall.window() == pub.window()))
    fail(ErrorKind::input, "private_od: window mismatch");
  PrivateResult r{ODMatrix(overall.dim(), overall.window(), "private-est",
                           MatrixKind::estimate)};
  auto out = r.matrix.cells();
  auto o = overall.cells();
  auto p = pub.cells();
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double v = o[c] - p[c];
    if (v < 0.0) {
      r.clamped_residual += -v;
      ++r.clamped_cells;
      out[c] = 0.0;
    } else {
      out[c] = v;
    }
  }
  return r;
}

/// Half-open local-time window [start_hour, end_hour).
struct TimeOfDayWindow {
  std::string name;
  int start_hour = 0;
  int end_hour = 24;
};

inline std::vector<TimeOfDayWindow> default_time_windows() {
  return {{"morning", 6, 10}, {"midday", 10, 17}, {"evening", 17, 22}};
}

struct WindowShare {
  std::string name;
  double public_trips = 0.0;
  double private_trips = 0.0;
  std::optional<double> public_share;  // undefined when no trips
};

struct ModeShareReport {
  std::vector<WindowShare> windows;
};

/// Inter-district cells only.
inline WindowShare window_share(std::string name, const ODMatrix& pub,
                                const ODMatrix& priv) {
  if (pub.dim() != priv.dim()) fail(ErrorKind::input, "mode_share: dimension mismatch");
  WindowShare s{std::move(name), pub.inter_district_total(), priv.inter_district_total(), {}};
  const double total = s.public_trips + s.private_trips;
  if (total > 0.0) s.public_share = s.public_trips / total;
  return s;
}

/// `pub[w]` and `priv[w]` are the aggregated matrices of `windows[w]`.
inline ModeShareReport mode_share(std::span<const ODMatrix> pub,
                                  std::span<const ODMatrix> priv,
                                  std::span<const TimeOfDayWindow> windows) {
  if (pub.size() != windows.size() || priv.size() != windows.size())
    fail(ErrorKind::input, "mode_share: one matrix pair per window required");
  ModeShareReport r;
  for (std::size_t w = 0; w < windows.size(); ++w)
    r.windows.push_back(window_share(windows[w].name, pub[w], priv[w]));
  return r;
}

struct ConnectionRecord {
  DistrictId origin = 0;
  DistrictId dest = 0;
  double public_n = 0.0;
  double private_n = 0.0;
  double total_n = 0.0;
  double private_share = 0.0;
  bool underserved = false;  // private_n > public_n
};

struct RankingResult {
  std::size_t candidate_pool = 0;
  std::vector<ConnectionRecord> top;
};

inline std::size_t candidate_pool_size(std::size_t d) { return d < 2 ? 0 : d * (d - 1); }

/// Directed inter-district pairs by descending total, ties by (origin, dest).
inline RankingResult underserved_ranking(const ODMatrix& pub, const ODMatrix& priv,
                                         std::size_t top_k = 50) {
  const std::size_t d = pub.dim();
  if (priv.dim() != d) fail(ErrorKind::input, "underserved_ranking: dimension mismatch");
  if (d < 2) fail(ErrorKind::input, "underserved_ranking needs at least two districts");
  std::vector<ConnectionRecord> all;
  all.reserve(candidate_pool_size(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      if (i == k) continue;
      ConnectionRecord c;
      c.origin = static_cast<DistrictId>(i);
      c.dest = static_cast<DistrictId>(k);
      c.public_n = pub(i, k);
      c.private_n = priv(i, k);
      c.total_n = c.public_n + c.private_n;
      c.private_share = c.total_n > 0.0 ? c.private_n / c.total_n : 0.0;
      c.underserved = c.private_n > c.public_n;
      all.push_back(c);
    }
  RankingResult r;
  r.candidate_pool = all.size();
  std::sort(all.begin(), all.end(), [](const ConnectionRecord& a, const ConnectionRecord& b) {
    if (a.total_n != b.total_n) return a.total_n > b.total_n;
    if (a.origin != b.origin) return a.origin < b.origin;
    return a.dest < b.dest;
  });
  all.resize(std::min(top_k, all.size()));
  r.top = std::move(all);
  return r;
}

// Intra-district mean distance ---------------------------------------------------

/// Mean distance between two uniform points in a unit square.
inline const double kSquareMeanDistance =
    (2.0 + std::numbers::sqrt2 + 5.0 * std::log(1.0 + std::numbers::sqrt2)) / 15.0;

struct MeanDistance {
  double mean = 0.0;
  double stderr_ = 0.0;
};

namespace detail {

inline double tri_area2(const LocalXY& a, const LocalXY& b, const LocalXY& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline bool in_triangle(const LocalXY& p, const LocalXY& a, const LocalXY& b,
                        const LocalXY& c) {
  return tri_area2(a, b, p) >= 0 && tri_area2(b, c, p) >= 0 && tri_area2(c, a, p) >= 0;
}

/// Ear clipping for a simple polygon (open ring, any orientation).
inline std::vector<std::array<LocalXY, 3>> triangulate(std::vector<LocalXY> pts) {
  double area2 = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % pts.size()];
    area2 += a.x * b.y - b.x * a.y;
  }
  if (area2 < 0) std::reverse(pts.begin(), pts.end());
  std::vector<std::array<LocalXY, 3>> tris;
  std::vector<std::size_t> idx(pts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  while (idx.size() > 3) {
    bool clipped = false;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t ip = idx[(i + idx.size() - 1) % idx.size()];
      const std::size_t ic = idx[i];
      const std::size_t in = idx[(i + 1) % idx.size()];
      if (tri_area2(pts[ip], pts[ic], pts[in]) <= 0) continue;
      bool ear = true;
      for (std::size_t j : idx) {
        if (j == ip || j == ic || j == in) continue;
        if (in_triangle(pts[j], pts[ip], pts[ic], pts[in])) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({pts[ip], pts[ic], pts[in]});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
      break;
    }
    if (!clipped) break;  // degenerate remainder (collinear points)
  }
  if (idx.size() == 3 && tri_area2(pts[idx[0]], pts[idx[1]], pts[idx[2]]) > 0)
    tris.push_back({pts[idx[0]], pts[idx[1]], pts[idx[2]]});
  return tris;
}

}  // namespace detail

/// Uniform sampler over a polygon in local coordinates. Hole-free polygons are
/// triangulated; polygons with holes fall back to bounding-box rejection.
class PolygonSampler {
 public:
  PolygonSampler(const Polygon& poly, const Projection& proj) {
    auto to_local = [&](const Ring& r) {
      std::vector<LocalXY> v;
      for (std::size_t i = 0; i + 1 < r.size(); ++i) v.push_back(proj.project(r[i]));
      return v;
    };
    if (poly.holes.empty()) {
      tris_ = detail::triangulate(to_local(poly.outer));
      double acc = 0.0;
      for (const auto& t : tris_) {
        acc += std::abs(detail::tri_area2(t[0], t[1], t[2])) / 2.0;
        cumulative_.push_back(acc);
      }
      area_ = acc;
    } else {
      poly_ = poly;
      proj_ = proj;
      for (const auto& p : poly.outer) {
        const LocalXY q = proj.project(p);
        lo_.x = std::min(lo_.x, q.x);
        lo_.y = std::min(lo_.y, q.y);
        hi_.x = std::max(hi_.x, q.x);
        hi_.y = std::max(hi_.y, q.y);
      }
      area_ = std::abs(ring_area_m2(poly.outer, proj));
      for (const auto& h : poly.holes) area_ -= std::abs(ring_area_m2(h, proj));
    }
  }

  double area() const { return area_; }

  template <typename Rng>
  LocalXY sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (poly_) {
      for (;;) {
        const LocalXY q{lo_.x + u(rng) * (hi_.x - lo_.x), lo_.y + u(rng) * (hi_.y - lo_.y)};
        if (poly_->contains_even_odd(proj_.unproject(q))) return q;
      }
    }
    const double pick = u(rng) * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), pick);
    const auto& t = tris_[std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative_.begin()), tris_.size() - 1)];
    const double s = std::sqrt(u(rng));
    const double r2 = u(rng);
    const double wa = 1.0 - s, wb = s * (1.0 - r2), wc = s * r2;
    return {wa * t[0].x + wb * t[1].x + wc * t[2].x, wa * t[0].y + wb * t[1].y + wc * t[2].y};
  }

 private:
  std::vector<std::array<LocalXY, 3>> tris_;
  std::vector<double> cumulative_;
  std::optional<Polygon> poly_;
  Projection proj_;
  LocalXY lo_{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  LocalXY hi_{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  double area_ = 0.0;
};

template <typename Rng>
MeanDistance polygon_mean_distance(const PolygonSampler& sampler, std::size_t n_samples,
                                   Rng& rng) {
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double d = norm(sampler.sample(rng), sampler.sample(rng));
    sum += d;
    sum2 += d * d;
  }
  const auto n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

struct IntraDistrictEntry {
  DistrictId district = 0;
  double area_m2 = 0.0;
  double mc_mean_m = 0.0;
  double mc_stderr_m = 0.0;
  double square_estimate_m = 0.0;  // constant x sqrt(area)
};

struct IntraDistrictReport {
  std::vector<IntraDistrictEntry> districts;
  std::vector<DistrictId> skipped;  // zero-area polygons
  double mean_side_m = 0.0;         // sqrt(total area / D)
  double square_estimate_m = 0.0;   // constant x mean side
};

inline IntraDistrictReport intra_district_mean_distance(const DistrictMap& map,
                                                        std::size_t n_samples,
                                                        std::uint64_t seed = 1) {
  if (n_samples < 10000)
    fail(ErrorKind::config, "intra-district Monte Carlo needs at least 1e4 samples");
  IntraDistrictReport r;
  double total_area = 0.0;
  for (const auto& d : map.districts()) {
    PolygonSampler sampler(d.polygon, map.projection());
    if (!(sampler.area() > 0.0)) {
      r.skipped.push_back(d.id);
      continue;
    }
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(d.id));
    const MeanDistance md = polygon_mean_distance(sampler, n_samples, rng);
    r.districts.push_back({d.id, sampler.area(), md.mean, md.stderr_,
                           kSquareMeanDistance * std::sqrt(sampler.area())});
    total_area += sampler.area();
  }
  if (!r.districts.empty()) {
    r.mean_side_m = std::sqrt(total_area / static_cast<double>(map.size()));
    r.square_estimate_m = kSquareMeanDistance * r.mean_side_m;
  }
  return r;
}

// Report files ------------------------------------------------------------------------

inline nlohmann::json to_json(const WindowShare& s) {
  nlohmann::json j = {{"window", s.name},
                      {"public_trips", s.public_trips},
                      {"private_trips", s.private_trips}};
  j["public_share"] = s.public_share ? nlohmann::json(*s.public_share) : nlohmann::json("N/A");
  return j;
}

inline nlohmann::json to_json(const ConnectionRecord& c) {
  return {{"origin", c.origin},         {"dest", c.dest},
          {"public_n", c.public_n},     {"private_n", c.private_n},
          {"total_n", c.total_n},       {"private_share", c.private_share},
          {"underserved", c.underserved}};
}

inline std::string mode_share_csv(const ModeShareReport& r) {
  std::string b = "window,public_trips,private_trips,public_share\n";
  for (const auto& s : r.windows) {
    b += s.name + ',';
    append_double(b, s.public_trips);
    b += ',';
    append_double(b, s.private_trips);
    b += ',';
    if (s.public_share)
      append_double(b, *s.public_share);
    else
      b += "N/A";
    b += '\n';
  }
  return b;
}

inline void write_mode_share_csv(const std::filesystem::path& path, const ModeShareReport& r) {
  write_text_file(path, mode_share_csv(r));
}

inline std::string ranking_csv(std::span<const std::pair<std::string, RankingResult>> rankings) {
  std::string b = "window,rank,origin,dest,public_n,private_n,total_n,private_share,underserved\n";
  for (const auto& [name, r] : rankings) {
    for (std::size_t i = 0; i < r.top.size(); ++i) {
      const auto& c = r.top[i];
      b += name + ',';
      append_int(b, i + 1);
      b += ',';
      append_int(b, c.origin);
      b += ',';
      append_int(b, c.dest);
      for (double v : {c.public_n, c.private_n, c.total_n, c.private_share}) {
        b += ',';
        append_double(b, v);
      }
      b += c.underserved ? ",1\n" : ",0\n";
    }
  }
  return b;
}

inline void write_ranking_csv(const std::filesystem::path& path,
                              std::span<const std::pair<std::string, RankingResult>> rankings) {
  write_text_file(path, ranking_csv(rankings));
}

inline nlohmann::json to_json(const ModeShareReport& r) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : r.windows) a.push_back(to_json(s));
  return a;
}

inline nlohmann::json to_json(std::span<const std::pair<std::string, RankingResult>> rankings) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, rr] : rankings) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& c : rr.top) top.push_back(to_json(c));
    out[name] = {{"candidate_pool", rr.candidate_pool}, {"top", top}};
  }
  return out;
}

inline nlohmann::json to_json(const IntraDistrictReport& r) {
  nlohmann::json ds = nlohmann::json::array();
  for (const auto& e : r.districts)
    ds.push_back({{"district", e.district},
                  {"area_m2", e.area_m2},
                  {"mc_mean_m", e.mc_mean_m},
                  {"mc_stderr_m", e.mc_stderr_m},
                  {"square_estimate_m", e.square_estimate_m}});
  return {{"districts", ds},
          {"skipped", r.skipped},
          {"mean_side_m", r.mean_side_m},
          {"square_estimate_m", r.square_estimate_m},
          {"square_constant", kSquareMeanDistance}};
}

/// One LineString per ranked connection between district centroids.
inline nlohmann::json flows_geojson(std::span<const std::pair<std::string, RankingResult>> rankings,
                                    const DistrictMap& map) {
  nlohmann::json fc = {{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
  for (const auto& [name, r] : rankings) {
    for (std::size_t i = 0; i < r.top.size(); ++i) {
      const auto& c = r.top[i];
      const GeoPoint a = map.centroid(c.origin), b = map.centroid(c.dest);
      nlohmann::json props = to_json(c);
      props["window"] = name;
      props["rank"] = i + 1;
      fc["features"].push_back(
          {{"type", "Feature"},
           {"properties", props},
           {"geometry",
            {{"type", "LineString"},
             {"coordinates", {{a.lon, a.lat}, {b.lon, b.lat}}}}}});
    }
  }
  return fc;
}

}  // namespace odflow
