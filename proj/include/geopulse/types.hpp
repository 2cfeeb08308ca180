#ifndef GEOPULSE_TYPES_HPP
#define GEOPULSE_TYPES_HPP

#include <optional>
#include <string>
#include <vector>

#include "geopulse/time.hpp"

namespace geopulse {

enum class PlaceLevel { country, admin, city, neighborhood, poi, unresolved };

inline const char* to_string(PlaceLevel l) {
  switch (l) {
    case PlaceLevel::country: return "country";
    case PlaceLevel::admin: return "admin";
    case PlaceLevel::city: return "city";
    case PlaceLevel::neighborhood: return "neighborhood";
    case PlaceLevel::poi: return "poi";
    default: return "unresolved";
  }
}

inline std::optional<PlaceLevel> parse_place_level(const std::string& s) {
  if (s == "country") return PlaceLevel::country;
  if (s == "admin") return PlaceLevel::admin;
  if (s == "city") return PlaceLevel::city;
  if (s == "neighborhood") return PlaceLevel::neighborhood;
  if (s == "poi") return PlaceLevel::poi;
  return std::nullopt;
}

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// One normalized inbound message.
struct GeoMessage {
  std::string message_id;
  std::string user_id;
  Timestamp created_at = 0;
  std::optional<LatLon> coords;
  std::optional<std::string> place_name;
  std::optional<PlaceLevel> place_level;
  std::optional<std::string> country;
  std::string text;
};

// A named political division.
struct Place {
  std::string place_id;
  std::string name;
  PlaceLevel level = PlaceLevel::unresolved;
  std::optional<std::string> parent_id;
};

// A message after location resolution. place_id/place_name identify the
// grouping place at the requested level; unresolved messages carry
// level == unresolved and are excluded downstream.
struct LocatedMessage {
  GeoMessage msg;
  std::string place_id;
  std::string place_name;
  PlaceLevel level = PlaceLevel::unresolved;
  // Resolved ancestors at every available level, widest first.
  std::vector<Place> chain;

  bool resolved() const { return level != PlaceLevel::unresolved; }
};

// One closed time bin of a place's dual series.
struct BinObservation {
  std::string place_id;
  std::int64_t bin_index = 0;
  Timestamp bin_start = 0;
  std::int64_t tweets = 0;
  std::int64_t users = 0;
  // Buffered message texts for event description (capped; see series).
  std::vector<std::string> texts;
};

}  // namespace geopulse

#endif  // GEOPULSE_TYPES_HPP
