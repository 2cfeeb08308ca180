#ifndef GEOPULSE_GEO_HPP
#define GEOPULSE_GEO_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopulse/types.hpp"
#include "json.hpp"

namespace geopulse {

struct GeoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadGeometry : GeoError {
  using GeoError::GeoError;
};
struct MissingProperty : GeoError {
  using GeoError::GeoError;
};

struct BoundingBox {
  double min_lat = 0, min_lon = 0, max_lat = 0, max_lon = 0;
  bool contains(double lat, double lon) const {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon &&
           lon <= max_lon;
  }
  double area() const { return (max_lat - min_lat) * (max_lon - min_lon); }
};

// One ring, closed (front == back), at least 4 vertices.
using Ring = std::vector<LatLon>;

// Outer ring plus optional holes.
struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

namespace detail {

// Even-odd crossing test against one ring. Points exactly on an edge are
// reported separately so callers can apply the edge-is-inside rule.
inline bool ring_crossings_odd(const Ring& ring, double lat, double lon,
                               bool& on_edge) {
  bool odd = false;
  on_edge = false;
  size_t n = ring.size();
  for (size_t i = 0; i + 1 < n; ++i) {
    double y1 = ring[i].lat, x1 = ring[i].lon;
    double y2 = ring[i + 1].lat, x2 = ring[i + 1].lon;
    // Edge-coincidence: collinear and within the segment's bbox.
    double cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1);
    if (cross == 0.0 && lon >= std::min(x1, x2) && lon <= std::max(x1, x2) &&
        lat >= std::min(y1, y2) && lat <= std::max(y1, y2)) {
      on_edge = true;
      return false;
    }
    // Horizontal ray to the east; half-open vertex rule.
    if ((y1 > lat) != (y2 > lat)) {
      double x_int = x1 + (lat - y1) * (x2 - x1) / (y2 - y1);
      if (x_int > lon) odd = !odd;
    }
  }
  return odd;
}

}  // namespace detail

// Even-odd containment; points in holes are outside, points exactly on any
// edge (outer or hole) count as inside.
inline bool point_in_polygon(double lat, double lon, const Polygon& poly) {
  bool on_edge = false;
  bool in_outer = detail::ring_crossings_odd(poly.outer, lat, lon, on_edge);
  if (on_edge) return true;
  if (!in_outer) return false;
  for (const auto& hole : poly.holes) {
    bool in_hole = detail::ring_crossings_odd(hole, lat, lon, on_edge);
    if (on_edge) return true;  // hole boundary belongs to the polygon
    if (in_hole) return false;
  }
  return true;
}

struct BoundaryEntry {
  Place place;
  BoundingBox bbox;
  std::vector<Polygon> polygons;  // MultiPolygon support
};

// Immutable spatial index over boundary polygons. Acceleration is a uniform
// grid over bounding boxes; candidates(p) returns exactly the entries whose
// bbox contains p.
class BoundaryIndex {
 public:
  BoundaryIndex() = default;

  void add(BoundaryEntry entry) { entries_.push_back(std::move(entry)); }

  void build() {
    if (entries_.empty()) return;
    extent_ = entries_[0].bbox;
    for (const auto& e : entries_) {
      extent_.min_lat = std::min(extent_.min_lat, e.bbox.min_lat);
      extent_.max_lat = std::max(extent_.max_lat, e.bbox.max_lat);
      extent_.min_lon = std::min(extent_.min_lon, e.bbox.min_lon);
      extent_.max_lon = std::max(extent_.max_lon, e.bbox.max_lon);
    }
    grid_.assign(kGrid * kGrid, {});
    for (size_t i = 0; i < entries_.size(); ++i) {
      const auto& b = entries_[i].bbox;
      int r0, c0, r1, c1;
      cell(b.min_lat, b.min_lon, r0, c0);
      cell(b.max_lat, b.max_lon, r1, c1);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          grid_[r * kGrid + c].push_back(i);
    }
    built_ = true;
  }

  // Entries whose bounding box contains the point.
  std::vector<const BoundaryEntry*> candidates(double lat, double lon) const {
    std::vector<const BoundaryEntry*> out;
    if (entries_.empty()) return out;
    if (built_ && extent_.contains(lat, lon)) {
      int r, c;
      cell(lat, lon, r, c);
      for (size_t i : grid_[r * kGrid + c])
        if (entries_[i].bbox.contains(lat, lon)) out.push_back(&entries_[i]);
    } else if (!built_) {
      for (const auto& e : entries_)
        if (e.bbox.contains(lat, lon)) out.push_back(&e);
    }
    return out;
  }

  // Entries actually containing the point (polygon test).
  std::vector<const BoundaryEntry*> containing(double lat, double lon) const {
    std::vector<const BoundaryEntry*> out;
    for (const auto* e : candidates(lat, lon)) {
      for (const auto& poly : e->polygons) {
        if (point_in_polygon(lat, lon, poly)) {
          out.push_back(e);
          break;
        }
      }
    }
    return out;
  }

  const std::vector<BoundaryEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

 private:
  static constexpr int kGrid = 64;

  void cell(double lat, double lon, int& r, int& c) const {
    double dy = extent_.max_lat - extent_.min_lat;
    double dx = extent_.max_lon - extent_.min_lon;
    r = dy > 0 ? static_cast<int>((lat - extent_.min_lat) / dy * kGrid) : 0;
    c = dx > 0 ? static_cast<int>((lon - extent_.min_lon) / dx * kGrid) : 0;
    r = std::clamp(r, 0, kGrid - 1);
    c = std::clamp(c, 0, kGrid - 1);
  }

  std::vector<BoundaryEntry> entries_;
  std::vector<std::vector<size_t>> grid_;
  BoundingBox extent_;
  bool built_ = false;
};

namespace detail {

// GeoJSON ring: [[lon, lat], ...], RFC 7946 coordinate order.
inline Ring parse_ring(const nlohmann::json& coords) {
  Ring ring;
  for (const auto& pt : coords) {
    if (!pt.is_array() || pt.size() < 2)
      throw BadGeometry("ring vertex is not a coordinate pair");
    ring.push_back({pt[1].get<double>(), pt[0].get<double>()});
  }
  if (ring.size() < 4) throw BadGeometry("ring has fewer than 4 vertices");
  if (ring.front().lat != ring.back().lat ||
      ring.front().lon != ring.back().lon)
    throw BadGeometry("ring is not closed");
  return ring;
}

inline Polygon parse_polygon(const nlohmann::json& coords) {
  Polygon poly;
  if (coords.empty()) throw BadGeometry("polygon has no rings");
  poly.outer = parse_ring(coords[0]);
  for (size_t i = 1; i < coords.size(); ++i)
    poly.holes.push_back(parse_ring(coords[i]));
  return poly;
}

inline BoundingBox bbox_of(const std::vector<Polygon>& polys) {
  BoundingBox b{90, 180, -90, -180};
  for (const auto& p : polys)
    for (const auto& v : p.outer) {
      b.min_lat = std::min(b.min_lat, v.lat);
      b.max_lat = std::max(b.max_lat, v.lat);
      b.min_lon = std::min(b.min_lon, v.lon);
      b.max_lon = std::max(b.max_lon, v.lon);
    }
  return b;
}

}  // namespace detail

// Loads a GeoJSON FeatureCollection of Polygon/MultiPolygon features with
// properties place_id, name, level (and optional parent_id).
inline BoundaryIndex load_boundaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GeoError("cannot open boundaries file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("type", "") != "FeatureCollection")
    throw GeoError("not a GeoJSON FeatureCollection: " + path);

  BoundaryIndex index;
  for (const auto& feature : j.at("features")) {
    const auto& props = feature.at("properties");
    for (const char* key : {"place_id", "name", "level"})
      if (!props.contains(key))
        throw MissingProperty(std::string("feature missing property ") + key);

    BoundaryEntry e;
    e.place.place_id = props["place_id"].get<std::string>();
    e.place.name = props["name"].get<std::string>();
    auto level = parse_place_level(props["level"].get<std::string>());
    if (!level) throw MissingProperty("unknown level in feature properties");
    e.place.level = *level;
    if (props.contains("parent_id"))
      e.place.parent_id = props["parent_id"].get<std::string>();

    const auto& geom = feature.at("geometry");
    std::string gtype = geom.value("type", "");
    if (gtype == "Polygon") {
      e.polygons.push_back(detail::parse_polygon(geom.at("coordinates")));
    } else if (gtype == "MultiPolygon") {
      for (const auto& pc : geom.at("coordinates"))
        e.polygons.push_back(detail::parse_polygon(pc));
    } else {
      throw BadGeometry("unsupported geometry type: " + gtype);
    }
    e.bbox = detail::bbox_of(e.polygons);
    index.add(std::move(e));
  }
  index.build();
  return index;
}

// Resolves a message to its grouping place. Feed-provided names win; else
// coordinates resolve to the smallest-level containing place, with ties
// broken by smaller bbox area then lexicographic place_id.
inline LocatedMessage resolve(const GeoMessage& msg,
                              const BoundaryIndex& index) {
  LocatedMessage out;
  out.msg = msg;
  if (msg.place_name) {
    out.place_name = *msg.place_name;
    out.place_id = *msg.place_name;  // names are opaque keys
    out.level = msg.place_level.value_or(PlaceLevel::city);
    return out;
  }
  if (!msg.coords) return out;  // unresolved

  auto hits = index.containing(msg.coords->lat, msg.coords->lon);
  if (hits.empty()) return out;  // unresolved

  // Group winners per level; narrowest level becomes the primary place.
  std::map<PlaceLevel, const BoundaryEntry*> per_level;
  for (const auto* e : hits) {
    auto it = per_level.find(e->place.level);
    if (it == per_level.end()) {
      per_level[e->place.level] = e;
      continue;
    }
    const auto* cur = it->second;
    double a1 = e->bbox.area(), a2 = cur->bbox.area();
    if (a1 < a2 || (a1 == a2 && e->place.place_id < cur->place.place_id))
      it->second = e;
  }
  for (const auto& [level, e] : per_level) out.chain.push_back(e->place);
  const auto* narrowest = per_level.rbegin()->second;
  out.place_id = narrowest->place.place_id;
  out.place_name = narrowest->place.name;
  out.level = narrowest->place.level;
  return out;
}

// Picks the resolved place at a requested level, if available.
inline std::optional<Place> place_at_level(const LocatedMessage& located,
                                           PlaceLevel level) {
  if (!located.resolved()) return std::nullopt;
  if (located.level == level)
    return Place{located.place_id, located.place_name, level, std::nullopt};
  for (const auto& p : located.chain)
    if (p.level == level) return p;
  return std::nullopt;
}

}  // namespace geopulse

#endif  // GEOPULSE_GEO_HPP
