#ifndef GEOPULSE_PIPELINE_HPP
#define GEOPULSE_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geopulse/describe.hpp"
#include "geopulse/detect.hpp"
#include "geopulse/geo.hpp"
#include "geopulse/ingest.hpp"
#include "geopulse/series.hpp"
#include "geopulse/store.hpp"
#include "json.hpp"

namespace geopulse {

struct PipelineConfig {
  DetectorConfig detector;
  PlaceLevel place_level = PlaceLevel::city;
  Timestamp epoch = kDefaultEpoch;
  Duration reorder_window = 60 * kMillisPerSecond;
  size_t top_n = 10;
  std::string data_dir;  // empty = no durable logs

  // Canonical string for the checkpoint config guard.
  std::string canonical() const {
    std::ostringstream os;
    os << "k=" << detector.k << ";bin=" << detector.bin_size
       << ";warmup=" << detector.effective_warmup()
       << ";gap=" << detector.max_gap << ";tau=" << detector.tau_nov
       << ";peak=" << detector.expected_peak
       << ";level=" << to_string(place_level) << ";epoch=" << epoch
       << ";reorder=" << reorder_window << ";top_n=" << top_n;
    return os.str();
  }
  std::uint64_t hash() const { return config_hash(canonical()); }
};

// Single-threaded end-to-end pipeline: ingest -> resolve -> per-place
// series -> IGMN detection -> coalesce -> describe. Deterministic for a
// fixed input file and config.
class Pipeline {
 public:
  using EventSink = std::function<void(const EventReport&)>;

  Pipeline(PipelineConfig cfg, StopwordList stopwords,
           const BoundaryIndex* boundaries = nullptr)
      : cfg_(cfg),
        stopwords_(std::move(stopwords)),
        boundaries_(boundaries),
        stream_({"", 0.0, cfg.reorder_window}) {
    open_logs();
  }

  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }
  void set_line_limit(std::int64_t limit) { stream_.set_line_limit(limit); }

  // Replays a message stream; resumes after skip_lines when restoring.
  void run(std::istream& in, std::int64_t skip_lines = 0) {
    stream_.run(in, [this](const GeoMessage& m) { on_message(m); }, skip_lines);
  }

  void feed_line(const std::string& line) {
    stream_.feed_line(line, [this](const GeoMessage& m) { on_message(m); });
  }

  // Drains the reorder buffer, closes all open bins and windows.
  void finish() {
    stream_.finish([this](const GeoMessage& m) { on_message(m); });
    for (auto& [key, series] : series_)
      for (const auto& obs : series.flush()) on_closed_bin(obs);
    for (auto& [key, det] : detectors_)
      for (auto& w : det.flush()) emit(w);
  }

  const IngestCounters& ingest_counters() const { return stream_.counters(); }
  std::int64_t bins_processed() const { return bins_processed_; }
  std::int64_t outlier_bins() const { return outlier_bins_; }
  std::int64_t events_emitted() const { return events_emitted_; }
  std::int64_t unresolved_messages() const { return unresolved_; }

  // ---- checkpointing ----

  nlohmann::json state_to_json() const {
    nlohmann::json j;
    const auto& c = stream_.counters();
    j["lines_read"] = c.lines_read;
    j["yielded"] = c.yielded;
    j["rejected"] = c.rejected;
    j["late_dropped"] = c.late_dropped;
    j["reorder"] = stream_.reorder_buffer().to_json();
    j["bins_processed"] = bins_processed_;
    j["outlier_bins"] = outlier_bins_;
    j["events_emitted"] = events_emitted_;
    j["unresolved"] = unresolved_;
    nlohmann::json series = nlohmann::json::object();
    for (const auto& [key, s] : series_) series[key] = s.to_json();
    j["series"] = series;
    nlohmann::json dets = nlohmann::json::object();
    for (const auto& [key, d] : detectors_) dets[key] = d.to_json();
    j["detectors"] = dets;
    nlohmann::json asof = nlohmann::json::object();
    for (const auto& [key, d] : detectors_)
      asof[key] = d.bins_seen();
    j["as_of_bin"] = asof;
    return j;
  }

  void restore_state(const nlohmann::json& j) {
    IngestCounters c;
    c.lines_read = j.at("lines_read").get<std::int64_t>();
    c.yielded = j.at("yielded").get<std::int64_t>();
    c.rejected = j.at("rejected").get<std::int64_t>();
    c.late_dropped = j.at("late_dropped").get<std::int64_t>();
    stream_ = MessageStream({"", 0.0, cfg_.reorder_window},
                            ReorderBuffer::from_json(j.at("reorder")), c);
    bins_processed_ = j.at("bins_processed").get<std::int64_t>();
    outlier_bins_ = j.at("outlier_bins").get<std::int64_t>();
    events_emitted_ = j.at("events_emitted").get<std::int64_t>();
    unresolved_ = j.at("unresolved").get<std::int64_t>();
    series_.clear();
    const auto& series = j.at("series");
    for (auto it = series.begin(); it != series.end(); ++it)
      series_.emplace(it.key(), PlaceSeries::from_json(it.value()));
    detectors_.clear();
    const auto& dets = j.at("detectors");
    for (auto it = dets.begin(); it != dets.end(); ++it)
      detectors_.emplace(it.key(),
                         PlaceDetector::from_json(it.value(), cfg_.detector));
  }

  std::int64_t lines_consumed() const { return stream_.counters().lines_read; }

 private:
  void open_logs() {
    if (cfg_.data_dir.empty()) return;
    std::filesystem::create_directories(cfg_.data_dir);
    bins_log_ = std::make_unique<AppendLog>();
    bins_log_->open(cfg_.data_dir + "/bins.log");
    events_log_ = std::make_unique<AppendLog>();
    events_log_->open(cfg_.data_dir + "/events.log");
  }

  void on_message(const GeoMessage& msg) {
    std::string key, name;
    PlaceLevel level = PlaceLevel::unresolved;
    if (msg.place_name) {
      // Feed-provided names win over coordinates.
      key = *msg.place_name;
      name = *msg.place_name;
      level = msg.place_level.value_or(PlaceLevel::city);
    } else if (boundaries_ && msg.coords) {
      LocatedMessage located = resolve(msg, *boundaries_);
      if (auto p = place_at_level(located, cfg_.place_level)) {
        key = p->place_id;
        name = p->name;
        level = p->level;
      } else if (located.resolved()) {
        key = located.place_id;
        name = located.place_name;
        level = located.level;
      }
    }
    if (level == PlaceLevel::unresolved) {
      ++unresolved_;
      return;
    }

    auto it = series_.find(key);
    if (it == series_.end()) {
      it = series_
               .emplace(key, PlaceSeries(key, cfg_.detector.bin_size, cfg_.epoch))
               .first;
      detectors_.emplace(key, PlaceDetector(key, name, cfg_.detector));
    }
    for (const auto& obs : it->second.ingest(msg.created_at, msg.user_id, msg.text))
      on_closed_bin(obs);
  }

  void on_closed_bin(const BinObservation& obs) {
    ++bins_processed_;
    auto it = detectors_.find(obs.place_id);
    std::vector<EventWindow> windows;
    BinDetection det = it->second.detect_bin(obs, windows);
    if (det.intersect) ++outlier_bins_;
    if (bins_log_) {
      nlohmann::json j;
      j["place_id"] = obs.place_id;
      j["bin_index"] = det.bin_index;
      j["bin_start"] = format_rfc3339(det.bin_start);
      j["tweets"] = obs.tweets;
      j["users"] = obs.users;
      j["tweets_flag"] = det.tweets_flag;
      j["users_flag"] = det.users_flag;
      j["intersect"] = det.intersect;
      j["tweets_expected"] = det.tweets_expected;
      j["users_expected"] = det.users_expected;
      j["score"] = det.score;
      bins_log_->append(j.dump());
    }
    for (auto& w : windows) emit(w);
  }

  void emit(const EventWindow& window) {
    EventReport report = describe_event(window, stopwords_, cfg_.top_n);
    ++events_emitted_;
    if (events_log_) events_log_->append(event_to_json(report).dump());
    if (sink_) sink_(report);
  }

 public:
  nlohmann::json event_to_json(const EventReport& r) const {
    const auto& w = r.window;
    nlohmann::json j;
    j["place_id"] = w.place_id;
    j["place_name"] = w.place_name;
    j["start"] = format_rfc3339(cfg_.epoch + w.start_bin * cfg_.detector.bin_size);
    j["end"] =
        format_rfc3339(cfg_.epoch + (w.end_bin + 1) * cfg_.detector.bin_size);
    j["peak_score"] = w.peak_score;
    j["tweets_peak"] = w.tweets_peak;
    j["users_peak"] = w.users_peak;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [term, count] : r.terms) terms.push_back(term);
    j["terms"] = terms;
    j["outlier_bins"] = w.bins.size();
    if (r.missing_buffers) j["empty_terms_warning"] = true;
    return j;
  }

 private:
  PipelineConfig cfg_;
  StopwordList stopwords_;
  const BoundaryIndex* boundaries_;
  MessageStream stream_;
  EventSink sink_;
  std::map<std::string, PlaceSeries> series_;
  std::map<std::string, PlaceDetector> detectors_;
  std::unique_ptr<AppendLog> bins_log_;
  std::unique_ptr<AppendLog> events_log_;
  std::int64_t bins_processed_ = 0;
  std::int64_t outlier_bins_ = 0;
  std::int64_t events_emitted_ = 0;
  std::int64_t unresolved_ = 0;
};

}  // namespace geopulse

#endif  // GEOPULSE_PIPELINE_HPP
