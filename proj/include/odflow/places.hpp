#pragma once

// Home/work place detection with a radius-gated K-means, and the per-district
// shares of frequent users that drive the bias correction.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "odflow/cdr.hpp"
#include "odflow/geo.hpp"
#include "odflow/io.hpp"

namespace odflow {

struct PlaceParams {
  double radius_m = 1000.0;
  double min_share = 0.15;
  int max_iter = 50;
};

struct SignificantPlace {
  UserIndex user = 0;
  GeoPoint centroid;
  double share = 0.0;  // of the user's total event count
  std::size_t n_events = 0;
  DistrictId district = kNoDistrict;
};

/// Internal state of one user's clustering, exposed for verification.
struct PlaceClustering {
  std::vector<LocalXY> centroids;
  std::vector<int> assignment;  // -1 = unassigned
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Nearest centroid strictly within the radius; ties go to the lowest index.
inline int nearest_within(const LocalXY& p, std::span<const LocalXY> centroids,
                          double radius_m) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = norm(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best_d < radius_m ? best : -1;
}

}  // namespace detail

/// Seeding: events in time order either join the nearest centroid within the
/// radius (centroid becomes the running member mean) or open a new one.
/// Lloyd phase: reassign within the radius, recompute means, stop at a fixed
/// point or after max_iter. On a max_iter exit the assignment is refreshed
/// against the final centroids so every member lies within the radius.
inline PlaceClustering cluster_places(std::span<const LocalXY> pts,
                                      const PlaceParams& params) {
  PlaceClustering st;
  std::vector<double> sx, sy;
  std::vector<std::size_t> cnt;
  st.assignment.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int c = detail::nearest_within(pts[i], st.centroids, params.radius_m);
    if (c < 0) {
      c = static_cast<int>(st.centroids.size());
      st.centroids.push_back(pts[i]);
      sx.push_back(0);
      sy.push_back(0);
      cnt.push_back(0);
    }
    sx[c] += pts[i].x;
    sy[c] += pts[i].y;
    ++cnt[c];
    st.centroids[c] = {sx[c] / static_cast<double>(cnt[c]),
                       sy[c] / static_cast<double>(cnt[c])};
    st.assignment[i] = c;
  }

  std::vector<int> next(pts.size());
  for (st.iterations = 0; st.iterations < params.max_iter; ++st.iterations) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      next[i] = detail::nearest_within(pts[i], st.centroids, params.radius_m);
    if (next == st.assignment) {
      st.converged = true;
      break;
    }
    st.assignment.swap(next);
    std::fill(sx.begin(), sx.end(), 0.0);
    std::fill(sy.begin(), sy.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (const int c = st.assignment[i]; c >= 0) {
        sx[c] += pts[i].x;
        sy[c] += pts[i].y;
        ++cnt[c];
      }
    }
    for (std::size_t c = 0; c < st.centroids.size(); ++c)
      if (cnt[c] > 0)
        st.centroids[c] = {sx[c] / static_cast<double>(cnt[c]),
                           sy[c] / static_cast<double>(cnt[c])};
  }
  if (!st.converged)
    for (std::size_t i = 0; i < pts.size(); ++i)
      st.assignment[i] = detail::nearest_within(pts[i], st.centroids, params.radius_m);
  return st;
}

/// Places holding at least min_share of all the user's events, by descending
/// share. Unassigned events still count in the denominator.
inline std::vector<SignificantPlace> significant_places(
    UserIndex user, std::span<const EventRecord> events, const Projection& proj,
    const DistrictMap* map = nullptr, const PlaceParams& params = {}) {
  std::vector<SignificantPlace> out;
  if (events.empty()) return out;
  std::vector<LocalXY> pts;
  pts.reserve(events.size());
  for (const auto& e : events) pts.push_back(proj.project(e.pos));
  const PlaceClustering st = cluster_places(pts, params);

  std::vector<std::size_t> members(st.centroids.size(), 0);
  for (int c : st.assignment)
    if (c >= 0) ++members[c];
  const auto total = static_cast<double>(events.size());
  for (std::size_t c = 0; c < st.centroids.size(); ++c) {
    const double share = static_cast<double>(members[c]) / total;
    if (members[c] == 0 || share < params.min_share) continue;
    SignificantPlace p;
    p.user = user;
    p.centroid = proj.unproject(st.centroids[c]);
    p.share = share;
    p.n_events = members[c];
    if (map) p.district = map->district_of(p.centroid);
    out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SignificantPlace& a, const SignificantPlace& b) {
                     return a.share > b.share;
                   });
  return out;
}

inline std::vector<SignificantPlace> significant_places(
    UserIndex user, std::span<const EventRecord> events, const DistrictMap& map,
    const PlaceParams& params = {}) {
  return significant_places(user, events, map.projection(), &map, params);
}

/// m_i, n_i count places (not users) per district.
struct DistrictShares {
  std::vector<std::size_t> m;
  std::vector<std::size_t> n;
  std::vector<double> phi;        // 0 where n_i = 0
  std::vector<bool> empty;        // n_i = 0
  double phi_overall = 0.0;
  std::size_t places_without_district = 0;

  std::size_t size() const { return m.size(); }
};

/// Frequent users' places must be a subset of all users' places.
inline DistrictShares district_shares(std::span<const SignificantPlace> frequent,
                                      std::span<const SignificantPlace> all,
                                      std::size_t district_count) {
  DistrictShares s;
  s.m.assign(district_count, 0);
  s.n.assign(district_count, 0);
  auto in_range = [&](DistrictId d) {
    return d >= 0 && static_cast<std::size_t>(d) < district_count;
  };
  for (const auto& p : frequent)
    if (in_range(p.district)) ++s.m[p.district];
  for (const auto& p : all) {
    if (in_range(p.district))
      ++s.n[p.district];
    else
      ++s.places_without_district;
  }
  std::size_t sm = 0, sn = 0;
  s.phi.assign(district_count, 0.0);
  s.empty.assign(district_count, false);
  for (std::size_t i = 0; i < district_count; ++i) {
    if (s.m[i] > s.n[i])
      fail(ErrorKind::internal, "frequent places exceed all places in district " +
                                    std::to_string(i));
    s.empty[i] = s.n[i] == 0;
    if (!s.empty[i])
      s.phi[i] = static_cast<double>(s.m[i]) / static_cast<double>(s.n[i]);
    sm += s.m[i];
    sn += s.n[i];
  }
  s.phi_overall = sn == 0 ? 0.0 : static_cast<double>(sm) / static_cast<double>(sn);
  return s;
}

inline void write_places_csv(const std::filesystem::path& path,
                             std::span<const SignificantPlace> places,
                             const TokenTable& users) {
  FileWriter w(path);
  auto& b = w.buffer();
  b += "user_id,rank,lon,lat,share,district_id\n";
  UserIndex prev = 0;
  int rank = 0;
  for (std::size_t i = 0; i < places.size(); ++i) {
    const auto& p = places[i];
    rank = (i > 0 && p.user == prev) ? rank + 1 : 1;
    prev = p.user;
    b += users.name(p.user);
    b += ',';
    append_int(b, rank);
    b += ',';
    append_double(b, p.centroid.lon);
    b += ',';
    append_double(b, p.centroid.lat);
    b += ',';
    append_double(b, p.share);
    b += ',';
    append_district(b, p.district);
    b += '\n';
    w.maybe_flush();
  }
  w.close();
}

inline void write_district_shares_csv(const std::filesystem::path& path,
                                      const DistrictShares& s) {
  FileWriter w(path);
  auto& b = w.buffer();
  b += "district_id,m,n,phi,no_places\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    append_int(b, i);
    b += ',';
    append_int(b, s.m[i]);
    b += ',';
    append_int(b, s.n[i]);
    b += ',';
    append_double(b, s.phi[i]);
    b += s.empty[i] ? ",1\n" : ",0\n";
  }
  w.close();
}

}  // namespace odflow
