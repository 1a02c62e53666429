#pragma once

// Positions, local planar projection, district polygons and point-to-district
// assignment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odflow/error.hpp"

namespace odflow {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 &&
         p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

/// Meters east (x) and north (y) of a projection origin.
struct LocalXY {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const LocalXY&, const LocalXY&) = default;
};

inline double norm(const LocalXY& a, const LocalXY& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Equirectangular projection about a fixed origin.
class Projection {
 public:
  Projection() : Projection(GeoPoint{}) {}
  explicit Projection(GeoPoint origin)
      : origin_(origin), cos_lat_(std::cos(origin.lat * kDegToRad)) {}

  const GeoPoint& origin() const { return origin_; }

  LocalXY project(const GeoPoint& p) const {
    return {kEarthRadiusM * (p.lon - origin_.lon) * kDegToRad * cos_lat_,
            kEarthRadiusM * (p.lat - origin_.lat) * kDegToRad};
  }

  GeoPoint unproject(const LocalXY& q) const {
    return {origin_.lon + q.x / (kEarthRadiusM * kDegToRad * cos_lat_),
            origin_.lat + q.y / (kEarthRadiusM * kDegToRad)};
  }

  /// Euclidean distance in this projection; a true metric on the plane.
  double distance_m(const GeoPoint& a, const GeoPoint& b) const {
    return norm(project(a), project(b));
  }

 private:
  GeoPoint origin_;
  double cos_lat_;
};

inline LocalXY project(const GeoPoint& p, const GeoPoint& origin) {
  return Projection(origin).project(p);
}

inline GeoPoint unproject(const LocalXY& q, const GeoPoint& origin) {
  return Projection(origin).unproject(q);
}

/// Planar distance with the projection centred on the pair's midpoint, so the
/// result is exactly symmetric.
inline double distance_m(const GeoPoint& a, const GeoPoint& b) {
  const GeoPoint mid{(a.lon + b.lon) / 2.0, (a.lat + b.lat) / 2.0};
  const Projection proj(mid);
  return norm(proj.project(a), proj.project(b));
}

using DistrictId = int;
inline constexpr DistrictId kNoDistrict = -1;

struct BoundingBox {
  double min_lon = std::numeric_limits<double>::infinity();
  double min_lat = std::numeric_limits<double>::infinity();
  double max_lon = -std::numeric_limits<double>::infinity();
  double max_lat = -std::numeric_limits<double>::infinity();

  void extend(const GeoPoint& p) {
    min_lon = std::min(min_lon, p.lon);
    min_lat = std::min(min_lat, p.lat);
    max_lon = std::max(max_lon, p.lon);
    max_lat = std::max(max_lat, p.lat);
  }
  bool contains(const GeoPoint& p) const {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat &&
           p.lat <= max_lat;
  }
};

using Ring = std::vector<GeoPoint>;

namespace detail {

inline double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

// Tolerance in degrees (~1e-7 m).
inline constexpr double kOnSegmentEps = 1e-12;

inline bool on_segment(const GeoPoint& p, const GeoPoint& a,
                       const GeoPoint& b) {
  const double len = std::hypot(b.lon - a.lon, b.lat - a.lat);
  if (len == 0.0) return p == a;
  if (std::abs(cross(a, b, p)) > kOnSegmentEps * len) return false;
  return p.lon >= std::min(a.lon, b.lon) - kOnSegmentEps &&
         p.lon <= std::max(a.lon, b.lon) + kOnSegmentEps &&
         p.lat >= std::min(a.lat, b.lat) - kOnSegmentEps &&
         p.lat <= std::max(a.lat, b.lat) + kOnSegmentEps;
}

inline int orientation(const GeoPoint& a, const GeoPoint& b,
                       const GeoPoint& c) {
  const double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

inline bool segments_intersect(const GeoPoint& p1, const GeoPoint& p2,
                               const GeoPoint& q1, const GeoPoint& q2) {
  const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(q1, p1, p2)) ||
         (o2 == 0 && on_segment(q2, p1, p2)) ||
         (o3 == 0 && on_segment(p1, q1, q2)) ||
         (o4 == 0 && on_segment(p2, q1, q2));
}

inline bool ring_is_simple(const Ring& r) {
  const std::size_t n = r.size() - 1;  // number of edges
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(r[i], r[i + 1], r[j], r[j + 1])) return false;
    }
  }
  return true;
}

}  // namespace detail

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;

  template <typename F>
  void for_each_ring(F&& f) const {
    f(outer);
    for (const auto& h : holes) f(h);
  }

  BoundingBox bbox() const {
    BoundingBox b;
    for (const auto& p : outer) b.extend(p);
    return b;
  }

  bool on_boundary(const GeoPoint& p) const {
    bool hit = false;
    for_each_ring([&](const Ring& r) {
      for (std::size_t i = 0; !hit && i + 1 < r.size(); ++i)
        hit = detail::on_segment(p, r[i], r[i + 1]);
    });
    return hit;
  }

  /// Even-odd rule over all rings.
  bool contains_even_odd(const GeoPoint& p) const {
    bool inside = false;
    for_each_ring([&](const Ring& r) {
      for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        const GeoPoint& a = r[i];
        const GeoPoint& b = r[i + 1];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
          const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) /
                                       (b.lat - a.lat);
          if (p.lon < x) inside = !inside;
        }
      }
    });
    return inside;
  }
};

/// Signed shoelace area of a ring in projected square meters.
inline double ring_area_m2(const Ring& r, const Projection& proj) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const LocalXY a = proj.project(r[i]);
    const LocalXY b = proj.project(r[i + 1]);
    acc += a.x * b.y - b.x * a.y;
  }
  return acc / 2.0;
}

struct District {
  DistrictId id = 0;
  std::string name;
  Polygon polygon;
};

/// Polygonal partition of a study area with ids 0..D-1.
class DistrictMap {
 public:
  DistrictMap() = default;

  /// Districts may arrive in any order; they are stored by id. Without an
  /// explicit origin the projection is centred on the bounding box.
  explicit DistrictMap(std::vector<District> districts,
                       std::optional<GeoPoint> projection_origin = {}) {
    if (districts.empty())
      fail(ErrorKind::input, "district map must contain at least one district");
    std::sort(districts.begin(), districts.end(),
              [](const District& a, const District& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < districts.size(); ++i) {
      if (districts[i].id != static_cast<DistrictId>(i)) {
        if (i > 0 && districts[i].id == districts[i - 1].id)
          fail(ErrorKind::input,
               "duplicate district_id " + std::to_string(districts[i].id));
        fail(ErrorKind::input, "district ids must be 0..D-1 without gaps; "
                               "missing " + std::to_string(i));
      }
      validate_polygon(districts[i]);
    }
    districts_ = std::move(districts);
    BoundingBox all;
    for (const auto& d : districts_) {
      BoundingBox b = d.polygon.bbox();
      boxes_.push_back(b);
      all.extend({b.min_lon, b.min_lat});
      all.extend({b.max_lon, b.max_lat});
    }
    projection_ = Projection(projection_origin.value_or(
        GeoPoint{(all.min_lon + all.max_lon) / 2, (all.min_lat + all.max_lat) / 2}));
  }

  std::size_t size() const { return districts_.size(); }
  const District& district(DistrictId id) const { return districts_.at(id); }
  std::span<const District> districts() const { return districts_; }
  const Projection& projection() const { return projection_; }

  /// Containing district; boundary points go to the lowest containing id.
  DistrictId district_of(const GeoPoint& p) const {
    for (std::size_t i = 0; i < districts_.size(); ++i) {
      if (!boxes_[i].contains(p)) continue;
      const Polygon& poly = districts_[i].polygon;
      if (poly.on_boundary(p) || poly.contains_even_odd(p))
        return static_cast<DistrictId>(i);
    }
    return kNoDistrict;
  }

  double area_m2(DistrictId id) const {
    const Polygon& poly = district(id).polygon;
    double a = std::abs(ring_area_m2(poly.outer, projection_));
    for (const auto& h : poly.holes) a -= std::abs(ring_area_m2(h, projection_));
    return a;
  }

  /// Area centroid of the outer ring.
  GeoPoint centroid(DistrictId id) const {
    const Ring& r = district(id).polygon.outer;
    double a2 = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
      const LocalXY p = projection_.project(r[i]);
      const LocalXY q = projection_.project(r[i + 1]);
      const double c = p.x * q.y - q.x * p.y;
      a2 += c;
      cx += (p.x + q.x) * c;
      cy += (p.y + q.y) * c;
    }
    if (a2 == 0.0) return r.front();
    return projection_.unproject({cx / (3.0 * a2), cy / (3.0 * a2)});
  }

 private:
  static void validate_ring(const Ring& r, const District& d) {
    const auto where = " (district " + std::to_string(d.id) + ")";
    if (r.size() < 4) fail(ErrorKind::input, "ring needs >= 4 points" + where);
    if (!(r.front() == r.back()))
      fail(ErrorKind::input, "ring is not closed" + where);
    for (const auto& p : r)
      if (!is_valid(p)) fail(ErrorKind::input, "invalid coordinate" + where);
    if (!detail::ring_is_simple(r))
      fail(ErrorKind::input, "ring self-intersects" + where);
  }
  static void validate_polygon(const District& d) {
    d.polygon.for_each_ring([&](const Ring& r) { validate_ring(r, d); });
  }

  std::vector<District> districts_;
  std::vector<BoundingBox> boxes_;
  Projection projection_;
};

// GeoJSON ---------------------------------------------------------------------

namespace detail {

inline Ring ring_from_json(const nlohmann::json& j) {
  Ring r;
  for (const auto& c : j) {
    if (!c.is_array() || c.size() < 2)
      fail(ErrorKind::input, "coordinate must be [lon, lat]");
    r.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return r;
}

inline nlohmann::json ring_to_json(const Ring& r) {
  auto a = nlohmann::json::array();
  for (const auto& p : r) a.push_back({p.lon, p.lat});
  return a;
}

}  // namespace detail

/// FeatureCollection of Polygon features with integer `district_id` and
/// string `name` properties. An optional top-level `projection_origin`
/// ([lon, lat]) fixes the planar projection.
inline DistrictMap district_map_from_geojson(const nlohmann::json& fc) {
  try {
    if (fc.value("type", "") != "FeatureCollection")
      fail(ErrorKind::input, "district file must be a GeoJSON FeatureCollection");
    std::vector<District> out;
    for (const auto& f : fc.at("features")) {
      const auto& geom = f.at("geometry");
      if (geom.at("type") != "Polygon")
        fail(ErrorKind::input, "district geometry must be a Polygon");
      const auto& props = f.at("properties");
      if (!props.contains("district_id") || !props["district_id"].is_number_integer())
        fail(ErrorKind::input, "feature lacks integer property district_id");
      if (!props.contains("name") || !props["name"].is_string())
        fail(ErrorKind::input, "feature lacks string property name");
      District d;
      d.id = props["district_id"].get<DistrictId>();
      d.name = props["name"].get<std::string>();
      const auto& rings = geom.at("coordinates");
      if (rings.empty()) fail(ErrorKind::input, "polygon without rings");
      d.polygon.outer = detail::ring_from_json(rings[0]);
      for (std::size_t i = 1; i < rings.size(); ++i)
        d.polygon.holes.push_back(detail::ring_from_json(rings[i]));
      out.push_back(std::move(d));
    }
    std::optional<GeoPoint> origin;
    if (fc.contains("projection_origin")) {
      const auto& o = fc["projection_origin"];
      origin = GeoPoint{o.at(0).get<double>(), o.at(1).get<double>()};
    }
    return DistrictMap(std::move(out), origin);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, std::string("malformed district GeoJSON: ") + e.what());
  }
}

inline nlohmann::json district_map_to_geojson(const DistrictMap& map) {
  nlohmann::json fc = {{"type", "FeatureCollection"},
                       {"features", nlohmann::json::array()}};
  const GeoPoint o = map.projection().origin();
  fc["projection_origin"] = {o.lon, o.lat};
  for (const auto& d : map.districts()) {
    auto coords = nlohmann::json::array();
    d.polygon.for_each_ring(
        [&](const Ring& r) { coords.push_back(detail::ring_to_json(r)); });
    fc["features"].push_back(
        {{"type", "Feature"},
         {"properties", {{"district_id", d.id}, {"name", d.name}}},
         {"geometry", {{"type", "Polygon"}, {"coordinates", coords}}}});
  }
  return fc;
}

inline DistrictMap load_district_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input_missing, "cannot open district file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, "district file " + path + " is not JSON: " + e.what());
  }
  return district_map_from_geojson(j);
}

}  // namespace odflow
