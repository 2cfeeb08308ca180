#ifndef GEOPULSE_SERIES_HPP
#define GEOPULSE_SERIES_HPP

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopulse/time.hpp"
#include "geopulse/types.hpp"
#include "json.hpp"

namespace geopulse {

struct SeriesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TimestampBeforeEpoch : SeriesError {
  using SeriesError::SeriesError;
};
struct BinRegression : SeriesError {
  using SeriesError::SeriesError;
};

// Left-closed, right-open bins since epoch.
inline std::int64_t assign_bin(Timestamp t, Duration bin_size,
                               Timestamp epoch = kDefaultEpoch) {
  if (t < epoch) throw TimestampBeforeEpoch("timestamp precedes binning epoch");
  return (t - epoch) / bin_size;
}

// Per-place binned dual series: message count and exact distinct-user count
// per bin. Closing a bin emits its observation; skipped bins emit zeros.
class PlaceSeries {
 public:
  static constexpr size_t kTextCap = 50000;

  PlaceSeries(std::string place_id, Duration bin_size,
              Timestamp epoch = kDefaultEpoch)
      : place_id_(std::move(place_id)), bin_size_(bin_size), epoch_(epoch) {}

  // Routes one message; returns observations for any bins this message
  // closes (zero or more).
  std::vector<BinObservation> ingest(const Timestamp created_at,
                                     const std::string& user_id,
                                     const std::string& text) {
    std::int64_t bin = assign_bin(created_at, bin_size_, epoch_);
    std::vector<BinObservation> closed;
    if (has_open_bin_) {
      if (bin < current_bin_)
        throw BinRegression("message bin precedes open bin for " + place_id_);
      while (current_bin_ < bin) closed.push_back(close_and_advance());
    } else {
      current_bin_ = bin;
      has_open_bin_ = true;
    }
    ++tweet_count_;
    user_ids_.insert(user_id);
    buffer_text(text);
    return closed;
  }

  // Closes the open bin (end of stream). No-op when nothing is open.
  std::vector<BinObservation> flush() {
    std::vector<BinObservation> out;
    if (has_open_bin_) {
      out.push_back(close_bin());
      has_open_bin_ = false;
    }
    return out;
  }

  // Closes bins up to (excluding) the bin containing `t`, emitting zeros for
  // silent bins. Lets the watermark advance series with no traffic.
  std::vector<BinObservation> advance_to(Timestamp t) {
    std::vector<BinObservation> closed;
    if (!has_open_bin_ || t < epoch_) return closed;
    std::int64_t bin = assign_bin(t, bin_size_, epoch_);
    while (current_bin_ < bin) closed.push_back(close_and_advance());
    return closed;
  }

  const std::string& place_id() const { return place_id_; }
  std::int64_t current_bin() const { return current_bin_; }
  bool has_open_bin() const { return has_open_bin_; }
  std::int64_t emitted() const { return emitted_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["place_id"] = place_id_;
    j["bin_size"] = bin_size_;
    j["epoch"] = epoch_;
    j["current_bin"] = current_bin_;
    j["has_open_bin"] = has_open_bin_;
    j["tweet_count"] = tweet_count_;
    j["users"] = std::vector<std::string>(user_ids_.begin(), user_ids_.end());
    j["texts"] = texts_;
    j["texts_seen"] = texts_seen_;
    j["emitted"] = emitted_;
    return j;
  }

  static PlaceSeries from_json(const nlohmann::json& j) {
    PlaceSeries s(j.at("place_id").get<std::string>(),
                  j.at("bin_size").get<Duration>(),
                  j.at("epoch").get<Timestamp>());
    s.current_bin_ = j.at("current_bin").get<std::int64_t>();
    s.has_open_bin_ = j.at("has_open_bin").get<bool>();
    s.tweet_count_ = j.at("tweet_count").get<std::int64_t>();
    for (const auto& u : j.at("users"))
      s.user_ids_.insert(u.get<std::string>());
    s.texts_ = j.at("texts").get<std::vector<std::string>>();
    s.texts_seen_ = j.at("texts_seen").get<std::int64_t>();
    s.emitted_ = j.at("emitted").get<std::int64_t>();
    return s;
  }

 private:
  BinObservation close_bin() {
    BinObservation obs;
    obs.place_id = place_id_;
    obs.bin_index = current_bin_;
    obs.bin_start = epoch_ + current_bin_ * bin_size_;
    obs.tweets = tweet_count_;
    obs.users = static_cast<std::int64_t>(user_ids_.size());
    obs.texts = std::move(texts_);
    tweet_count_ = 0;
    user_ids_.clear();
    texts_.clear();
    texts_seen_ = 0;
    ++emitted_;
    return obs;
  }

  BinObservation close_and_advance() {
    BinObservation obs = close_bin();
    ++current_bin_;
    return obs;
  }

  // Counts stay exact past the cap; texts are reservoir-sampled with an RNG
  // seeded by (place, bin) so sampling is deterministic.
  void buffer_text(const std::string& text) {
    ++texts_seen_;
    if (texts_.size() < kTextCap) {
      texts_.push_back(text);
      return;
    }
    std::seed_seq seq{static_cast<unsigned>(std::hash<std::string>{}(place_id_)),
                      static_cast<unsigned>(current_bin_),
                      static_cast<unsigned>(texts_seen_)};
    std::mt19937 rng(seq);
    std::uniform_int_distribution<std::int64_t> dist(0, texts_seen_ - 1);
    std::int64_t slot = dist(rng);
    if (slot < static_cast<std::int64_t>(kTextCap))
      texts_[static_cast<size_t>(slot)] = text;
  }

  std::string place_id_;
  Duration bin_size_;
  Timestamp epoch_;
  std::int64_t current_bin_ = 0;
  bool has_open_bin_ = false;
  std::int64_t tweet_count_ = 0;
  std::set<std::string> user_ids_;
  std::vector<std::string> texts_;
  std::int64_t texts_seen_ = 0;
  std::int64_t emitted_ = 0;
};

}  // namespace geopulse

#endif  // GEOPULSE_SERIES_HPP
