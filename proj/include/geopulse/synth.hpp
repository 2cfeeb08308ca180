#ifndef GEOPULSE_SYNTH_HPP
#define GEOPULSE_SYNTH_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopulse/ingest.hpp"
#include "geopulse/series.hpp"
#include "geopulse/time.hpp"
#include "json.hpp"

namespace geopulse {

struct SynthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedTruth : SynthError {
  using SynthError::SynthError;
};

enum class EventShape { long_large, short_large, short_small };

inline const char* to_string(EventShape s) {
  switch (s) {
    case EventShape::long_large: return "long_large";
    case EventShape::short_large: return "short_large";
    default: return "short_small";
  }
}

inline std::optional<EventShape> parse_event_shape(const std::string& s) {
  if (s == "long_large") return EventShape::long_large;
  if (s == "short_large") return EventShape::short_large;
  if (s == "short_small") return EventShape::short_small;
  return std::nullopt;
}

struct EventSpec {
  std::string place_id;
  Timestamp start = 0;
  Duration duration = 0;
  double amplitude = 2.0;  // multiplier on the baseline rate
  EventShape shape = EventShape::short_small;
  bool distinct_user_boost = true;
  std::vector<std::string> keywords;
};

struct PlaceProfile {
  std::string place_id;
  std::string name;
  // Expected messages per 10-minute slot, 144 values covering one day.
  std::vector<double> daily_rate;
  double user_ratio = 0.7;  // distinct users / tweets per slot
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int days = 1;
  Timestamp start = 0;
  std::vector<PlaceProfile> places;
  std::vector<EventSpec> events;
};

struct ScoreReport {
  std::int64_t total_outliers = 0;
  std::int64_t detected_happened = 0;
  std::int64_t unique_events = 0;
  std::int64_t duplicate_detections = 0;
  std::int64_t missed_events = 0;
  double precision = 0.0;
  bool precision_undefined = false;

  static ScoreReport from_counts(std::int64_t total, std::int64_t detected,
                                 std::int64_t unique, std::int64_t truth_count) {
    ScoreReport r;
    r.total_outliers = total;
    r.detected_happened = detected;
    r.unique_events = unique;
    r.duplicate_detections = detected - unique;
    r.missed_events = truth_count - unique;
    if (total > 0) {
      r.precision = static_cast<double>(detected) / static_cast<double>(total);
    } else {
      r.precision = 0.0;
      r.precision_undefined = true;
    }
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["total_outliers"] = total_outliers;
    j["detected_happened"] = detected_happened;
    j["unique_events"] = unique_events;
    j["duplicate_detections"] = duplicate_detections;
    j["missed_events"] = missed_events;
    j["precision"] = precision;
    if (precision_undefined) j["precision_undefined"] = true;
    return j;
  }
};

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SynthError("cannot open scenario file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SynthError("unparseable scenario file: " + path);

  ScenarioConfig cfg;
  cfg.seed = j.value("seed", 1ULL);
  cfg.days = j.value("days", 1);
  auto start = parse_rfc3339(j.value("start", "2012-02-19T00:00:00Z"));
  if (!start) throw SynthError("bad scenario start timestamp");
  cfg.start = *start;

  for (const auto& pj : j.at("places")) {
    PlaceProfile p;
    p.place_id = pj.at("place_id").get<std::string>();
    p.name = pj.value("name", p.place_id);
    p.user_ratio = pj.value("user_ratio", 0.7);
    if (p.user_ratio <= 0.0 || p.user_ratio > 1.0)
      throw SynthError("user_ratio must be in (0, 1]");
    if (pj.contains("profile")) {
      p.daily_rate = pj["profile"].get<std::vector<double>>();
      if (p.daily_rate.size() != 144)
        throw SynthError("profile must have 144 values");
    } else if (pj.contains("flat_rate")) {
      p.daily_rate.assign(144, pj["flat_rate"].get<double>());
    } else {
      throw SynthError("place needs profile or flat_rate");
    }
    for (double v : p.daily_rate)
      if (v < 0) throw SynthError("rate profile values must be >= 0");
    cfg.places.push_back(std::move(p));
  }
  for (const auto& ej : j.value("events", nlohmann::json::array())) {
    EventSpec e;
    e.place_id = ej.at("place_id").get<std::string>();
    auto es = parse_rfc3339(ej.at("start").get<std::string>());
    if (!es) throw SynthError("bad event start timestamp");
    e.start = *es;
    auto dur = parse_duration(ej.at("duration").get<std::string>());
    if (!dur) throw SynthError("bad event duration");
    e.duration = *dur;
    e.amplitude = ej.value("amplitude", 2.0);
    if (e.amplitude <= 1.0) throw SynthError("amplitude must be > 1");
    auto shape = parse_event_shape(ej.value("shape", "short_small"));
    if (!shape) throw SynthError("unknown event shape");
    e.shape = *shape;
    e.distinct_user_boost = ej.value("distinct_user_boost", true);
    e.keywords = ej.value("keywords", std::vector<std::string>{});
    if (e.start < cfg.start ||
        e.start + e.duration > cfg.start + cfg.days * kMillisPerDay)
      throw SynthError("event outside the scenario time range");
    cfg.events.push_back(std::move(e));
  }
  return cfg;
}

namespace detail {

inline const std::vector<std::string>& baseline_vocab() {
  static const std::vector<std::string> v = {
      "bom",    "dia",    "trabalho", "casa",    "almoço",  "amigo",
      "cidade", "tempo",  "chuva",    "sol",     "music",   "coffee",
      "lunch",  "street", "morning",  "night",   "traffic", "metro",
      "praia",  "filme",  "serie",    "weekend", "segunda", "aula",
  };
  return v;
}

inline std::string synth_text(std::mt19937_64& rng,
                              const std::vector<std::string>& keywords) {
  const auto& vocab = baseline_vocab();
  std::uniform_int_distribution<size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<int> nwords(3, 6);
  std::string text;
  int n = nwords(rng);
  for (int i = 0; i < n; ++i) {
    if (!text.empty()) text += ' ';
    text += vocab[pick(rng)];
  }
  if (!keywords.empty()) {
    std::uniform_int_distribution<size_t> kpick(0, keywords.size() - 1);
    text += ' ';
    text += keywords[kpick(rng)];
    text += ' ';
    text += keywords[kpick(rng)];
  }
  return text;
}

}  // namespace detail

// Writes the labeled synthetic stream (JSONL messages, in timestamp order)
// and its ground-truth file. Fully determined by the scenario seed.
inline void generate_stream(const ScenarioConfig& cfg,
                            const std::string& messages_path,
                            const std::string& truth_path) {
  constexpr Duration kSlot = 10 * kMillisPerMinute;
  constexpr int kSlotsPerDay = 144;

  std::ofstream out(messages_path, std::ios::trunc);
  if (!out) throw SynthError("cannot write messages file: " + messages_path);

  std::int64_t msg_counter = 0;
  // Messages across places are merged per slot so output stays
  // timestamp-ordered.
  std::int64_t total_slots = static_cast<std::int64_t>(cfg.days) * kSlotsPerDay;

  struct PlaceGen {
    const PlaceProfile* profile;
    std::mt19937_64 rng;
    std::int64_t user_seq = 0;
    std::int64_t event_user_seq = 0;
  };
  std::vector<PlaceGen> gens;
  for (const auto& p : cfg.places) {
    std::seed_seq seq{static_cast<unsigned>(cfg.seed),
                      static_cast<unsigned>(cfg.seed >> 32),
                      static_cast<unsigned>(std::hash<std::string>{}(p.place_id))};
    gens.push_back({&p, std::mt19937_64(seq), 0, 0});
  }

  for (std::int64_t slot = 0; slot < total_slots; ++slot) {
    Timestamp slot_start = cfg.start + slot * kSlot;
    struct PendingMsg {
      Timestamp ts;
      std::string user;
      std::string text;
      const PlaceProfile* place;
    };
    std::vector<PendingMsg> pending;

    for (auto& g : gens) {
      double base_rate = g.profile->daily_rate[slot % kSlotsPerDay];
      // Active events for this place and slot.
      const EventSpec* active = nullptr;
      for (const auto& e : cfg.events) {
        if (e.place_id == g.profile->place_id && slot_start < e.start + e.duration &&
            slot_start + kSlot > e.start) {
          active = &e;
          break;
        }
      }

      std::int64_t base_count = 0;
      if (base_rate > 0)
        base_count = std::poisson_distribution<std::int64_t>(base_rate)(g.rng);
      std::int64_t event_count = 0;
      if (active && base_rate > 0)
        event_count = std::poisson_distribution<std::int64_t>(
            base_rate * (active->amplitude - 1.0))(g.rng);

      // Baseline messages: distinct-user count targets the configured ratio.
      std::int64_t distinct = base_count == 0
                                  ? 0
                                  : std::max<std::int64_t>(
                                        1, std::llround(g.profile->user_ratio *
                                                        static_cast<double>(base_count)));
      std::uniform_int_distribution<Duration> offset(0, kSlot - 1);
      std::uniform_int_distribution<std::int64_t> reuse(0, std::max<std::int64_t>(distinct - 1, 0));
      std::int64_t first_user = g.user_seq;
      for (std::int64_t i = 0; i < base_count; ++i) {
        std::int64_t uidx = i < distinct ? first_user + i
                                         : first_user + reuse(g.rng);
        pending.push_back({slot_start + offset(g.rng),
                           "u_" + g.profile->place_id + "_" + std::to_string(uidx),
                           detail::synth_text(g.rng, {}), g.profile});
      }
      g.user_seq += distinct;

      for (std::int64_t i = 0; i < event_count; ++i) {
        std::string user;
        if (active->distinct_user_boost) {
          user = "ev_" + g.profile->place_id + "_" +
                 std::to_string(g.event_user_seq++);
        } else {
          user = "flood_" + g.profile->place_id;  // single-user flood
        }
        pending.push_back({slot_start + offset(g.rng), std::move(user),
                           detail::synth_text(g.rng, active->keywords),
                           g.profile});
      }
    }

    std::stable_sort(pending.begin(), pending.end(),
                     [](const PendingMsg& a, const PendingMsg& b) {
                       return a.ts < b.ts;
                     });
    for (auto& m : pending) {
      nlohmann::json j;
      j["id"] = "m" + std::to_string(msg_counter++);
      j["user_id"] = m.user;
      j["created_at"] = format_rfc3339(m.ts);
      j["place_name"] = m.place->place_id;  // routing keys match the truth file
      j["place_level"] = "city";
      j["text"] = m.text;
      out << j.dump() << "\n";
    }
  }
  out.close();

  std::ofstream truth(truth_path, std::ios::trunc);
  if (!truth) throw SynthError("cannot write truth file: " + truth_path);
  for (const auto& e : cfg.events) {
    nlohmann::json j;
    j["place_id"] = e.place_id;
    j["start"] = format_rfc3339(e.start);
    j["end"] = format_rfc3339(e.start + e.duration);
    j["shape"] = to_string(e.shape);
    j["keywords"] = e.keywords;
    truth << j.dump() << "\n";
  }
}

struct TruthEvent {
  std::string place_id;
  Timestamp start = 0, end = 0;
  std::string shape;
  std::vector<std::string> keywords;
};

inline std::vector<TruthEvent> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedTruth("cannot open truth file: " + path);
  std::vector<TruthEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw MalformedTruth("unparseable truth record");
    TruthEvent e;
    try {
      e.place_id = j.at("place_id").get<std::string>();
      auto s = parse_rfc3339(j.at("start").get<std::string>());
      auto t = parse_rfc3339(j.at("end").get<std::string>());
      if (!s || !t) throw MalformedTruth("bad truth timestamps");
      e.start = *s;
      e.end = *t;
      e.shape = j.value("shape", "");
      e.keywords = j.value("keywords", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& ex) {
      throw MalformedTruth(std::string("bad truth record: ") + ex.what());
    }
    events.push_back(std::move(e));
  }
  return events;
}

struct DetectedWindow {
  std::string place_id;
  Timestamp start = 0, end = 0;
};

inline std::vector<DetectedWindow> load_detected(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SynthError("cannot open events file: " + path);
  std::vector<DetectedWindow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw SynthError("unparseable events record");
    DetectedWindow w;
    w.place_id = j.at("place_id").get<std::string>();
    auto s = parse_rfc3339(j.at("start").get<std::string>());
    auto e = parse_rfc3339(j.at("end").get<std::string>());
    if (!s || !e) throw SynthError("bad event timestamps");
    w.start = *s;
    w.end = *e;
    out.push_back(std::move(w));
  }
  return out;
}

// Overlap-based matching: a detected window counts as a happened event when
// it overlaps a truth event (same place) widened by tolerance.
inline ScoreReport score(const std::vector<DetectedWindow>& detected,
                         const std::vector<TruthEvent>& truth,
                         Duration tolerance) {
  std::vector<bool> truth_hit(truth.size(), false);
  std::int64_t matched = 0;
  for (const auto& w : detected) {
    bool hit = false;
    for (size_t i = 0; i < truth.size(); ++i) {
      const auto& t = truth[i];
      if (t.place_id != w.place_id) continue;
      if (w.start <= t.end + tolerance && w.end >= t.start - tolerance) {
        truth_hit[i] = true;
        hit = true;
      }
    }
    if (hit) ++matched;
  }
  std::int64_t unique = 0;
  for (bool h : truth_hit)
    if (h) ++unique;
  return ScoreReport::from_counts(static_cast<std::int64_t>(detected.size()),
                                  matched, unique,
                                  static_cast<std::int64_t>(truth.size()));
}

}  // namespace geopulse

#endif  // GEOPULSE_SYNTH_HPP
