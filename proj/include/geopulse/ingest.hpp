#ifndef GEOPULSE_INGEST_HPP
#define GEOPULSE_INGEST_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "geopulse/time.hpp"
#include "geopulse/types.hpp"
#include "json.hpp"

namespace geopulse {

enum class ParseError {
  none,
  malformed_record,
  missing_field,
  no_location,
  coord_out_of_range,
  bad_timestamp,
};

inline const char* to_string(ParseError e) {
  switch (e) {
    case ParseError::none: return "none";
    case ParseError::malformed_record: return "MalformedRecord";
    case ParseError::missing_field: return "MissingField";
    case ParseError::no_location: return "NoLocation";
    case ParseError::coord_out_of_range: return "CoordOutOfRange";
    default: return "BadTimestamp";
  }
}

struct ParseResult {
  std::optional<GeoMessage> msg;
  ParseError error = ParseError::none;
  bool ok() const { return msg.has_value(); }
};

// Parses one JSONL record into a validated GeoMessage. Unknown fields are
// ignored. max_future_skew_ms rejects timestamps too far past `now` when
// now is given; pass nullopt for replayed files.
inline ParseResult parse_message(const std::string& line,
                                 std::optional<Timestamp> now = std::nullopt,
                                 Duration max_future_skew_ms = 5 * kMillisPerMinute) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    return {std::nullopt, ParseError::malformed_record};

  GeoMessage m;
  if (!j.contains("id") || !j["id"].is_string() || !j.contains("user_id") ||
      !j["user_id"].is_string() || !j.contains("created_at") ||
      !j["created_at"].is_string() || !j.contains("text") ||
      !j["text"].is_string())
    return {std::nullopt, ParseError::missing_field};

  m.message_id = j["id"].get<std::string>();
  m.user_id = j["user_id"].get<std::string>();
  m.text = j["text"].get<std::string>();
  if (m.message_id.empty() || m.user_id.empty())
    return {std::nullopt, ParseError::missing_field};

  auto ts = parse_rfc3339(j["created_at"].get<std::string>());
  if (!ts) return {std::nullopt, ParseError::bad_timestamp};
  m.created_at = *ts;
  if (now && m.created_at > *now + max_future_skew_ms)
    return {std::nullopt, ParseError::bad_timestamp};

  bool has_lat = j.contains("lat") && j["lat"].is_number();
  bool has_lon = j.contains("lon") && j["lon"].is_number();
  if (has_lat != has_lon) return {std::nullopt, ParseError::malformed_record};
  if (has_lat) {
    LatLon ll{j["lat"].get<double>(), j["lon"].get<double>()};
    if (ll.lat < -90.0 || ll.lat > 90.0 || ll.lon < -180.0 || ll.lon > 180.0)
      return {std::nullopt, ParseError::coord_out_of_range};
    m.coords = ll;
  }
  if (j.contains("place_name") && j["place_name"].is_string()) {
    auto pn = j["place_name"].get<std::string>();
    if (!pn.empty()) m.place_name = pn;
  }
  if (!m.coords && !m.place_name)
    return {std::nullopt, ParseError::no_location};
  if (j.contains("place_level") && j["place_level"].is_string())
    m.place_level = parse_place_level(j["place_level"].get<std::string>());
  if (j.contains("country") && j["country"].is_string())
    m.country = j["country"].get<std::string>();
  return {m, ParseError::none};
}

inline nlohmann::json to_json(const GeoMessage& m) {
  nlohmann::json j;
  j["id"] = m.message_id;
  j["user_id"] = m.user_id;
  j["created_at"] = format_rfc3339(m.created_at);
  if (m.coords) {
    j["lat"] = m.coords->lat;
    j["lon"] = m.coords->lon;
  }
  if (m.place_name) j["place_name"] = *m.place_name;
  if (m.place_level) j["place_level"] = to_string(*m.place_level);
  if (m.country) j["country"] = *m.country;
  j["text"] = m.text;
  return j;
}

struct StreamSourceConfig {
  std::string uri;                      // path or tcp://host:port
  double replay_rate = 0.0;             // 0 = as fast as possible
  Duration reorder_window = 60 * kMillisPerSecond;
};

struct IngestCounters {
  std::int64_t lines_read = 0;
  std::int64_t yielded = 0;
  std::int64_t rejected = 0;  // parse failures and duplicates
  std::int64_t late_dropped = 0;
};

// Bounded-reordering buffer. Messages are released in non-decreasing
// created_at order once the watermark (max seen timestamp - window) passes
// them; messages older than the watermark on arrival are dropped and
// counted. Duplicate message ids within the window are dropped, first wins.
class ReorderBuffer {
 public:
  explicit ReorderBuffer(Duration window = 60 * kMillisPerSecond)
      : window_(window) {}

  // Returns messages released by this arrival, in order.
  std::vector<GeoMessage> push(GeoMessage m, IngestCounters& counters) {
    if (watermark_valid_ && m.created_at < watermark_) {
      ++counters.late_dropped;
      return {};
    }
    auto it = seen_.find(m.message_id);
    if (it != seen_.end()) {
      ++counters.rejected;  // duplicate within window
      return {};
    }
    seen_.emplace(m.message_id, m.created_at);
    if (m.created_at > max_seen_ || !watermark_valid_) {
      max_seen_ = std::max(max_seen_, m.created_at);
      watermark_valid_ = true;
      watermark_ = max_seen_ - window_;
    }
    buffer_.insert(
        std::upper_bound(buffer_.begin(), buffer_.end(), m,
                         [](const GeoMessage& a, const GeoMessage& b) {
                           return a.created_at < b.created_at;
                         }),
        std::move(m));
    return drain(counters);
  }

  // Releases everything left, in order.
  std::vector<GeoMessage> flush(IngestCounters& counters) {
    std::vector<GeoMessage> out(buffer_.begin(), buffer_.end());
    counters.yielded += static_cast<std::int64_t>(out.size());
    buffer_.clear();
    seen_.clear();
    return out;
  }

  Timestamp watermark() const { return watermark_valid_ ? watermark_ : 0; }
  size_t pending() const { return buffer_.size(); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["window"] = window_;
    j["max_seen"] = max_seen_;
    j["watermark_valid"] = watermark_valid_;
    nlohmann::json buf = nlohmann::json::array();
    for (const auto& m : buffer_) buf.push_back(geopulse::to_json(m));
    j["buffer"] = buf;
    nlohmann::json seen = nlohmann::json::object();
    for (const auto& [id, ts] : seen_) seen[id] = ts;
    j["seen"] = seen;
    return j;
  }

  static ReorderBuffer from_json(const nlohmann::json& j) {
    ReorderBuffer rb(j.at("window").get<Duration>());
    rb.max_seen_ = j.at("max_seen").get<Timestamp>();
    rb.watermark_valid_ = j.at("watermark_valid").get<bool>();
    rb.watermark_ = rb.max_seen_ - rb.window_;
    for (const auto& mj : j.at("buffer")) {
      auto r = parse_message(mj.dump());
      if (r.ok()) rb.buffer_.push_back(*r.msg);
    }
    for (auto it = j.at("seen").begin(); it != j.at("seen").end(); ++it)
      rb.seen_.emplace(it.key(), it.value().get<Timestamp>());
    return rb;
  }

 private:
  std::vector<GeoMessage> drain(IngestCounters& counters) {
    std::vector<GeoMessage> out;
    while (!buffer_.empty() && buffer_.front().created_at <= watermark_) {
      out.push_back(std::move(buffer_.front()));
      buffer_.pop_front();
    }
    // Prune the dedup map below the watermark.
    for (auto it = seen_.begin(); it != seen_.end();) {
      if (it->second < watermark_)
        it = seen_.erase(it);
      else
        ++it;
    }
    counters.yielded += static_cast<std::int64_t>(out.size());
    return out;
  }

  Duration window_;
  Timestamp max_seen_ = 0;
  Timestamp watermark_ = 0;
  bool watermark_valid_ = false;
  std::deque<GeoMessage> buffer_;
  std::map<std::string, Timestamp> seen_;
};

// Streams messages from a line-delimited file (or any istream), applying
// parse validation and the reorder buffer. The sink sees messages in
// non-decreasing created_at order.
class MessageStream {
 public:
  using Sink = std::function<void(const GeoMessage&)>;

  explicit MessageStream(StreamSourceConfig cfg)
      : cfg_(std::move(cfg)), buffer_(cfg_.reorder_window) {}

  // Restores mid-stream state from a checkpoint.
  MessageStream(StreamSourceConfig cfg, ReorderBuffer buffer,
                IngestCounters counters)
      : cfg_(std::move(cfg)),
        buffer_(std::move(buffer)),
        counters_(counters) {}

  // Feeds one raw line. Released messages go to the sink.
  void feed_line(const std::string& line, const Sink& sink) {
    ++counters_.lines_read;
    auto r = parse_message(line);
    if (!r.ok()) {
      ++counters_.rejected;
      return;
    }
    pace(r.msg->created_at);
    for (auto& m : buffer_.push(std::move(*r.msg), counters_)) sink(m);
  }

  void finish(const Sink& sink) {
    for (auto& m : buffer_.flush(counters_)) sink(m);
  }

  // Reads an entire stream. skip_lines supports checkpoint resume.
  void run(std::istream& in, const Sink& sink, std::int64_t skip_lines = 0) {
    std::string line;
    std::int64_t n = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (n++ < skip_lines) continue;
      feed_line(line, sink);
      if (limit_ >= 0 && counters_.lines_read >= limit_) break;
    }
  }

  void set_line_limit(std::int64_t limit) { limit_ = limit; }

  const IngestCounters& counters() const { return counters_; }
  const ReorderBuffer& reorder_buffer() const { return buffer_; }

 private:
  void pace(Timestamp ts) {
    if (cfg_.replay_rate <= 0.0) return;
    if (first_ts_ < 0) {
      first_ts_ = ts;
      wall_start_ = std::chrono::steady_clock::now();
      return;
    }
    auto due = wall_start_ + std::chrono::milliseconds(static_cast<std::int64_t>(
                                 (ts - first_ts_) / cfg_.replay_rate));
    std::this_thread::sleep_until(due);
  }

  StreamSourceConfig cfg_;
  ReorderBuffer buffer_;
  IngestCounters counters_;
  std::int64_t limit_ = -1;
  Timestamp first_ts_ = -1;
  std::chrono::steady_clock::time_point wall_start_{};
};

}  // namespace geopulse

#endif  // GEOPULSE_INGEST_HPP
