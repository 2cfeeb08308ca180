#ifndef GEOPULSE_DETECT_HPP
#define GEOPULSE_DETECT_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopulse/igmn.hpp"
#include "geopulse/series.hpp"
#include "geopulse/time.hpp"
#include "geopulse/types.hpp"
#include "json.hpp"

namespace geopulse {

struct DetectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonContiguousBin : DetectError {
  using DetectError::DetectError;
};

struct DetectorConfig {
  double k = 3.0;                    // deviation threshold
  std::int64_t warmup_bins = 0;      // 0 = one full day of bins
  std::int64_t max_gap = 1;          // bins allowed inside one event window
  Duration bin_size = 10 * kMillisPerMinute;
  double tau_nov = 0.01;
  // Expected peak bin value; 0 estimates the value range from the first
  // observed day before any learning.
  double expected_peak = 0.0;

  std::int64_t bins_per_day() const { return kMillisPerDay / bin_size; }
  std::int64_t effective_warmup() const {
    return warmup_bins > 0 ? warmup_bins : bins_per_day();
  }
};

struct OutlierBin {
  std::string place_id;
  std::int64_t bin_index = 0;
  double tweets_observed = 0, tweets_expected = 0;
  double users_observed = 0, users_expected = 0;
  double score = 0;  // max over the two series of (obs - exp) / std
};

struct EventWindow {
  std::string place_id;
  std::string place_name;
  std::int64_t start_bin = 0, end_bin = 0;
  double peak_score = 0;
  double tweets_peak = 0, users_peak = 0;
  std::vector<OutlierBin> bins;
  std::vector<std::string> texts;  // messages of the window's bins
};

// Per-bin detection result, logged for export and scoring.
struct BinDetection {
  std::int64_t bin_index = 0;
  Timestamp bin_start = 0;
  double tweets = 0, users = 0;
  bool tweets_flag = false, users_flag = false;
  bool intersect = false;
  double tweets_expected = 0, users_expected = 0;
  double score = 0;
};

// Eq-1 style intersection: an event candidate needs both series flagged.
inline bool intersect_outliers(bool tweets_flag, bool users_flag) {
  return tweets_flag && users_flag;
}

// Batch coalescing of sorted outlier bins into windows with gaps <= max_gap.
inline std::vector<EventWindow> coalesce(const std::vector<OutlierBin>& bins,
                                         std::int64_t max_gap) {
  std::vector<EventWindow> windows;
  for (const auto& b : bins) {
    if (!windows.empty() &&
        b.bin_index - windows.back().end_bin - 1 <= max_gap) {
      EventWindow& w = windows.back();
      w.end_bin = b.bin_index;
      w.peak_score = std::max(w.peak_score, b.score);
      w.tweets_peak = std::max(w.tweets_peak, b.tweets_observed);
      w.users_peak = std::max(w.users_peak, b.users_observed);
      w.bins.push_back(b);
    } else {
      EventWindow w;
      w.place_id = b.place_id;
      w.start_bin = w.end_bin = b.bin_index;
      w.peak_score = b.score;
      w.tweets_peak = b.tweets_observed;
      w.users_peak = b.users_observed;
      w.bins.push_back(b);
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

// Detection state for one place: the two IGMN models, warmup accounting,
// and the streaming window coalescer. Single-writer.
class PlaceDetector {
 public:
  PlaceDetector(std::string place_id, std::string place_name,
                DetectorConfig cfg)
      : place_id_(std::move(place_id)),
        place_name_(std::move(place_name)),
        cfg_(cfg) {
    if (cfg_.expected_peak > 0.0) init_models(cfg_.expected_peak, cfg_.expected_peak);
  }

  // Feeds the next contiguous closed bin. Returns the per-bin detection and
  // appends any event window whose gap closed to `out`.
  BinDetection detect_bin(const BinObservation& obs,
                          std::vector<EventWindow>& out) {
    if (last_bin_ >= 0 && obs.bin_index != last_bin_ + 1)
      throw NonContiguousBin("bin " + std::to_string(obs.bin_index) +
                             " after " + std::to_string(last_bin_) +
                             " for " + place_id_);
    last_bin_ = obs.bin_index;
    ++bins_seen_;

    BinDetection det;
    det.bin_index = obs.bin_index;
    det.bin_start = obs.bin_start;
    det.tweets = static_cast<double>(obs.tweets);
    det.users = static_cast<double>(obs.users);

    if (!models_ready()) {
      bootstrap_.push_back(obs);
      if (static_cast<std::int64_t>(bootstrap_.size()) >= cfg_.bins_per_day()) {
        double tmax = 1.0, umax = 1.0;
        for (const auto& b : bootstrap_) {
          tmax = std::max(tmax, static_cast<double>(b.tweets));
          umax = std::max(umax, static_cast<double>(b.users));
        }
        init_models(tmax, umax);
        for (const auto& b : bootstrap_) {
          tweets_model_->learn(encode_input(b.bin_start, static_cast<double>(b.tweets)));
          users_model_->learn(encode_input(b.bin_start, static_cast<double>(b.users)));
        }
        bootstrap_.clear();
      }
      step_coalescer(det, obs, out);
      return det;  // flags stay false during bootstrap
    }

    if (tweets_model_->component_count() == 0) {
      // Nothing learned yet; seed the models and stay unflagged.
      tweets_model_->learn(encode_input(obs.bin_start, det.tweets));
      users_model_->learn(encode_input(obs.bin_start, det.users));
      step_coalescer(det, obs, out);
      return det;
    }

    Vec z = encode_time(obs.bin_start);
    Prediction pt = tweets_model_->predict(z);
    Prediction pu = users_model_->predict(z);
    det.tweets_expected = pt.mean;
    det.users_expected = pu.mean;
    bool warm = bins_seen_ > cfg_.effective_warmup();
    det.tweets_flag = warm && det.tweets > pt.mean + cfg_.k * std::sqrt(pt.variance);
    det.users_flag = warm && det.users > pu.mean + cfg_.k * std::sqrt(pu.variance);
    det.intersect = intersect_outliers(det.tweets_flag, det.users_flag);
    if (det.intersect) {
      double st = (det.tweets - pt.mean) / std::sqrt(pt.variance);
      double su = (det.users - pu.mean) / std::sqrt(pu.variance);
      det.score = std::max(st, su);
      ++outlier_bins_;
    }

    // Predict-then-learn; outliers are learned too.
    tweets_model_->learn(encode_input(obs.bin_start, det.tweets));
    users_model_->learn(encode_input(obs.bin_start, det.users));

    step_coalescer(det, obs, out);
    return det;
  }

  // Closes any open window (end of stream).
  std::vector<EventWindow> flush() {
    std::vector<EventWindow> out;
    if (window_open_) {
      out.push_back(close_window());
      window_open_ = false;
    }
    return out;
  }

  const std::string& place_id() const { return place_id_; }
  std::int64_t bins_seen() const { return bins_seen_; }
  std::int64_t outlier_bins() const { return outlier_bins_; }
  bool models_ready() const { return tweets_model_.has_value(); }
  const IgmnModel& tweets_model() const { return *tweets_model_; }
  const IgmnModel& users_model() const { return *users_model_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["place_id"] = place_id_;
    j["place_name"] = place_name_;
    j["bins_seen"] = bins_seen_;
    j["last_bin"] = last_bin_;
    j["outlier_bins"] = outlier_bins_;
    if (models_ready()) {
      j["tweets_model"] = tweets_model_->to_json();
      j["users_model"] = users_model_->to_json();
    }
    nlohmann::json boot = nlohmann::json::array();
    for (const auto& b : bootstrap_) boot.push_back(obs_to_json(b));
    j["bootstrap"] = boot;
    j["window_open"] = window_open_;
    if (window_open_) {
      nlohmann::json bins = nlohmann::json::array();
      for (const auto& b : window_bins_) {
        nlohmann::json bj;
        bj["bin_index"] = b.bin_index;
        bj["tweets_observed"] = b.tweets_observed;
        bj["tweets_expected"] = b.tweets_expected;
        bj["users_observed"] = b.users_observed;
        bj["users_expected"] = b.users_expected;
        bj["score"] = b.score;
        bins.push_back(bj);
      }
      j["window_bins"] = bins;
      nlohmann::json texts = nlohmann::json::object();
      for (const auto& [idx, t] : window_texts_)
        texts[std::to_string(idx)] = t;
      j["window_texts"] = texts;
    }
    return j;
  }

  static PlaceDetector from_json(const nlohmann::json& j,
                                 const DetectorConfig& cfg) {
    PlaceDetector d(j.at("place_id").get<std::string>(),
                    j.at("place_name").get<std::string>(), cfg);
    d.bins_seen_ = j.at("bins_seen").get<std::int64_t>();
    d.last_bin_ = j.at("last_bin").get<std::int64_t>();
    d.outlier_bins_ = j.at("outlier_bins").get<std::int64_t>();
    if (j.contains("tweets_model")) {
      d.tweets_model_ = IgmnModel::from_json(j["tweets_model"]);
      d.users_model_ = IgmnModel::from_json(j["users_model"]);
    } else {
      d.tweets_model_.reset();
      d.users_model_.reset();
    }
    d.bootstrap_.clear();
    for (const auto& bj : j.at("bootstrap")) d.bootstrap_.push_back(obs_from_json(bj));
    d.window_open_ = j.at("window_open").get<bool>();
    if (d.window_open_) {
      for (const auto& bj : j.at("window_bins")) {
        OutlierBin b;
        b.place_id = d.place_id_;
        b.bin_index = bj.at("bin_index").get<std::int64_t>();
        b.tweets_observed = bj.at("tweets_observed").get<double>();
        b.tweets_expected = bj.at("tweets_expected").get<double>();
        b.users_observed = bj.at("users_observed").get<double>();
        b.users_expected = bj.at("users_expected").get<double>();
        b.score = bj.at("score").get<double>();
        d.window_bins_.push_back(std::move(b));
      }
      const auto& texts = j.at("window_texts");
      for (auto it = texts.begin(); it != texts.end(); ++it)
        d.window_texts_[std::stoll(it.key())] =
            it.value().get<std::vector<std::string>>();
    }
    return d;
  }

 private:
  static nlohmann::json obs_to_json(const BinObservation& b) {
    nlohmann::json j;
    j["bin_index"] = b.bin_index;
    j["bin_start"] = b.bin_start;
    j["tweets"] = b.tweets;
    j["users"] = b.users;
    return j;
  }
  static BinObservation obs_from_json(const nlohmann::json& j) {
    BinObservation b;
    b.bin_index = j.at("bin_index").get<std::int64_t>();
    b.bin_start = j.at("bin_start").get<Timestamp>();
    b.tweets = j.at("tweets").get<std::int64_t>();
    b.users = j.at("users").get<std::int64_t>();
    return b;
  }

  void init_models(double tweets_range, double users_range) {
    // Time dims live on the unit circle (range 2); value dim spread scales
    // with the observed/expected range.
    Vec sig_t{0.2, 0.2, 0.1 * std::max(tweets_range, 1.0)};
    Vec sig_u{0.2, 0.2, 0.1 * std::max(users_range, 1.0)};
    tweets_model_.emplace(sig_t, cfg_.tau_nov);
    users_model_.emplace(sig_u, cfg_.tau_nov);
  }

  void step_coalescer(const BinDetection& det, const BinObservation& obs,
                      std::vector<EventWindow>& out) {
    if (window_open_) {
      window_texts_[obs.bin_index] = obs.texts;
      std::int64_t gap = det.bin_index - window_bins_.back().bin_index - 1;
      if (det.intersect && gap <= cfg_.max_gap) {
        window_bins_.push_back(make_outlier(det));
      } else if (!det.intersect && gap + 1 > cfg_.max_gap) {
        out.push_back(close_window());
        window_open_ = false;
      } else if (det.intersect) {
        // Gap too wide: close the old window, start a new one.
        out.push_back(close_window());
        open_window(det, obs);
      }
      return;
    }
    if (det.intersect) open_window(det, obs);
  }

  OutlierBin make_outlier(const BinDetection& det) const {
    OutlierBin b;
    b.place_id = place_id_;
    b.bin_index = det.bin_index;
    b.tweets_observed = det.tweets;
    b.tweets_expected = det.tweets_expected;
    b.users_observed = det.users;
    b.users_expected = det.users_expected;
    b.score = det.score;
    return b;
  }

  void open_window(const BinDetection& det, const BinObservation& obs) {
    window_open_ = true;
    window_bins_.clear();
    window_texts_.clear();
    window_bins_.push_back(make_outlier(det));
    window_texts_[obs.bin_index] = obs.texts;
  }

  EventWindow close_window() {
    EventWindow w;
    w.place_id = place_id_;
    w.place_name = place_name_;
    w.start_bin = window_bins_.front().bin_index;
    w.end_bin = window_bins_.back().bin_index;
    for (const auto& b : window_bins_) {
      w.peak_score = std::max(w.peak_score, b.score);
      w.tweets_peak = std::max(w.tweets_peak, b.tweets_observed);
      w.users_peak = std::max(w.users_peak, b.users_observed);
    }
    w.bins = std::move(window_bins_);
    for (std::int64_t idx = w.start_bin; idx <= w.end_bin; ++idx) {
      auto it = window_texts_.find(idx);
      if (it != window_texts_.end())
        w.texts.insert(w.texts.end(), it->second.begin(), it->second.end());
    }
    window_bins_.clear();
    window_texts_.clear();
    return w;
  }

  std::string place_id_;
  std::string place_name_;
  DetectorConfig cfg_;
  std::optional<IgmnModel> tweets_model_;
  std::optional<IgmnModel> users_model_;
  std::vector<BinObservation> bootstrap_;
  std::int64_t bins_seen_ = 0;
  std::int64_t last_bin_ = -1;
  std::int64_t outlier_bins_ = 0;
  bool window_open_ = false;
  std::vector<OutlierBin> window_bins_;
  std::map<std::int64_t, std::vector<std::string>> window_texts_;
};

}  // namespace geopulse

#endif  // GEOPULSE_DETECT_HPP
