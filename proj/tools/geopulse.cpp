// geopulse: location-based event detection over geo-tagged message streams.

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "geopulse/pipeline.hpp"
#include "geopulse/synth.hpp"

namespace gp = geopulse;

namespace {

// Minimal key = value config file; '#' comments. CLI flags override file
// values, file values override defaults.
std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r\"");
      size_t e = s.find_last_not_of(" \t\r\"");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

// Reads lines from tcp://host:port into the pipeline.
int run_socket_input(const std::string& uri, gp::Pipeline& pipeline) {
  std::string hostport = uri.substr(6);
  size_t colon = hostport.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "bad socket uri: " << uri << "\n";
    return 1;
  }
  std::string host = hostport.substr(0, colon);
  std::string port = hostport.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    std::cerr << "SourceUnavailable: cannot resolve " << uri << "\n";
    return 2;
  }
  int fd = socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    freeaddrinfo(res);
    std::cerr << "SourceUnavailable: cannot connect to " << uri << "\n";
    return 2;
  }
  freeaddrinfo(res);

  std::string pendingbuf;
  char buf[4096];
  ssize_t n;
  while ((n = read(fd, buf, sizeof(buf))) > 0) {
    pendingbuf.append(buf, static_cast<size_t>(n));
    size_t nl;
    while ((nl = pendingbuf.find('\n')) != std::string::npos) {
      std::string line = pendingbuf.substr(0, nl);
      pendingbuf.erase(0, nl + 1);
      if (!line.empty()) pipeline.feed_line(line);
    }
  }
  ::close(fd);
  return 0;
}

struct DetectOptions {
  std::string input;
  std::string boundaries;
  std::string bin_size = "10m";
  std::string place_level = "city";
  double k = 3.0;
  std::int64_t warmup_bins = 0;
  std::int64_t max_gap = 1;
  double rate = 0.0;
  std::int64_t reorder_window_s = 60;
  std::string stopwords;
  std::int64_t top_n = 10;
  double expected_peak = 0.0;
  std::string data_dir;
  std::string out;
  std::string config_file;
  std::int64_t limit = -1;
  bool checkpoint = false;
  bool resume = false;
};

void apply_config_file(DetectOptions& o, const CLI::App& cmd) {
  if (o.config_file.empty()) return;
  auto kv = load_config_file(o.config_file);
  auto unset = [&cmd](const std::string& flag) {
    return cmd.get_option(flag)->count() == 0;
  };
  if (kv.count("input") && unset("--input")) o.input = kv["input"];
  if (kv.count("boundaries") && unset("--boundaries")) o.boundaries = kv["boundaries"];
  if (kv.count("bin_size") && unset("--bin-size")) o.bin_size = kv["bin_size"];
  if (kv.count("place_level") && unset("--place-level")) o.place_level = kv["place_level"];
  if (kv.count("k") && unset("--k")) o.k = std::stod(kv["k"]);
  if (kv.count("warmup_bins") && unset("--warmup-bins")) o.warmup_bins = std::stoll(kv["warmup_bins"]);
  if (kv.count("max_gap") && unset("--max-gap")) o.max_gap = std::stoll(kv["max_gap"]);
  if (kv.count("rate") && unset("--rate")) o.rate = std::stod(kv["rate"]);
  if (kv.count("reorder_window") && unset("--reorder-window")) o.reorder_window_s = std::stoll(kv["reorder_window"]);
  if (kv.count("stopwords") && unset("--stopwords")) o.stopwords = kv["stopwords"];
  if (kv.count("top_n") && unset("--top-n")) o.top_n = std::stoll(kv["top_n"]);
  if (kv.count("expected_peak") && unset("--expected-peak")) o.expected_peak = std::stod(kv["expected_peak"]);
  if (kv.count("data_dir") && unset("--data-dir")) o.data_dir = kv["data_dir"];
  if (kv.count("out") && unset("--out")) o.out = kv["out"];
}

int cmd_detect(DetectOptions& o, const CLI::App& cmd) {
  try {
    apply_config_file(o, cmd);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  auto bin = gp::parse_duration(o.bin_size);
  if (!bin || gp::kMillisPerDay % *bin != 0) {
    std::cerr << "config error: bin size must divide 24h evenly\n";
    return 1;
  }
  auto level = gp::parse_place_level(o.place_level);
  if (!level) {
    std::cerr << "config error: unknown place level " << o.place_level << "\n";
    return 1;
  }
  if (o.k <= 0) {
    std::cerr << "config error: k must be > 0\n";
    return 1;
  }
  if (o.input.empty()) {
    std::cerr << "config error: --input is required\n";
    return 1;
  }

  gp::PipelineConfig cfg;
  cfg.detector.k = o.k;
  cfg.detector.bin_size = *bin;
  cfg.detector.warmup_bins = o.warmup_bins;
  cfg.detector.max_gap = o.max_gap;
  cfg.detector.expected_peak = o.expected_peak;
  cfg.place_level = *level;
  cfg.reorder_window = o.reorder_window_s * gp::kMillisPerSecond;
  cfg.top_n = static_cast<size_t>(o.top_n);
  cfg.data_dir = o.data_dir;

  gp::StopwordList stopwords;
  gp::BoundaryIndex boundaries;
  bool have_boundaries = false;
  try {
    stopwords = o.stopwords.empty() ? gp::StopwordList::defaults()
                                    : gp::StopwordList::load(o.stopwords);
    if (!o.boundaries.empty()) {
      boundaries = gp::load_boundaries(o.boundaries);
      have_boundaries = true;
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  bool socket_input = o.input.rfind("tcp://", 0) == 0;
  std::ifstream file_in;
  if (!socket_input) {
    file_in.open(o.input);
    if (!file_in) {
      std::cerr << "config error: cannot open input " << o.input << "\n";
      return 1;
    }
  }

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  std::ios_base::openmode mode = o.resume ? std::ios::app : std::ios::trunc;
  if (!o.out.empty()) {
    out_file.open(o.out, mode);
    if (!out_file) {
      std::cerr << "config error: cannot open output " << o.out << "\n";
      return 1;
    }
    out = &out_file;
  }

  try {
    gp::Pipeline pipeline(cfg, stopwords,
                          have_boundaries ? &boundaries : nullptr);
    pipeline.set_event_sink([&](const gp::EventReport& r) {
      *out << pipeline.event_to_json(r).dump() << "\n";
    });

    std::int64_t skip = 0;
    if (o.resume) {
      if (o.data_dir.empty()) {
        std::cerr << "config error: --resume needs --data-dir\n";
        return 1;
      }
      gp::CheckpointStore ckpts(o.data_dir);
      std::string latest = ckpts.latest();
      if (latest.empty()) {
        std::cerr << "config error: no checkpoint found in " << o.data_dir << "\n";
        return 1;
      }
      pipeline.restore_state(gp::CheckpointStore::read(latest, cfg.hash()));
      skip = pipeline.lines_consumed();
    }

    std::cerr << "# config: " << cfg.canonical() << "\n";

    if (socket_input) {
      int rc = run_socket_input(o.input, pipeline);
      if (rc != 0) return rc;
    } else {
      if (o.limit >= 0) pipeline.set_line_limit(o.limit);
      pipeline.run(file_in, skip);
    }

    bool stopped_early = o.limit >= 0 && pipeline.lines_consumed() >= o.limit;
    if (!stopped_early) pipeline.finish();

    if (o.checkpoint || stopped_early) {
      if (o.data_dir.empty()) {
        std::cerr << "config error: checkpointing needs --data-dir\n";
        return 1;
      }
      gp::CheckpointStore ckpts(o.data_dir);
      ckpts.write(pipeline.state_to_json(), cfg.hash());
    }

    const auto& c = pipeline.ingest_counters();
    std::cerr << "bins=" << pipeline.bins_processed()
              << " outlier_bins=" << pipeline.outlier_bins()
              << " events=" << pipeline.events_emitted()
              << " messages=" << c.yielded << " rejected=" << c.rejected
              << " late_dropped=" << c.late_dropped
              << " unresolved=" << pipeline.unresolved_messages() << "\n";
    return 0;
  } catch (const gp::ConfigMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

int cmd_synth(const std::string& scenario_path, const std::string& out_dir) {
  try {
    auto cfg = gp::load_scenario(scenario_path);
    std::filesystem::create_directories(out_dir);
    gp::generate_stream(cfg, out_dir + "/messages.jsonl",
                        out_dir + "/truth.jsonl");
    std::cerr << "wrote " << out_dir << "/messages.jsonl and truth.jsonl\n";
    return 0;
  } catch (const gp::SynthError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

int cmd_score(const std::string& events_path, const std::string& truth_path,
              std::int64_t tolerance_bins, const std::string& bin_size) {
  try {
    auto bin = gp::parse_duration(bin_size);
    if (!bin) {
      std::cerr << "config error: bad bin size\n";
      return 1;
    }
    auto detected = gp::load_detected(events_path);
    auto truth = gp::load_truth(truth_path);
    auto report = gp::score(detected, truth, tolerance_bins * *bin);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

int cmd_export_series(const std::string& data_dir, const std::string& place,
                      const std::string& out_path) {
  auto records = gp::AppendLog::read_all(data_dir + "/bins.log");
  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path, std::ios::trunc);
    out = &out_file;
  }
  *out << "bin_start,tweets,users,tweets_flag,users_flag,intersect_flag\n";
  bool found = false;
  for (const auto& rec : records) {
    auto j = nlohmann::json::parse(rec, nullptr, false);
    if (j.is_discarded() || j.value("place_id", "") != place) continue;
    found = true;
    *out << j["bin_start"].get<std::string>() << "," << j["tweets"].get<std::int64_t>()
         << "," << j["users"].get<std::int64_t>() << ","
         << (j["tweets_flag"].get<bool>() ? 1 : 0) << ","
         << (j["users_flag"].get<bool>() ? 1 : 0) << ","
         << (j["intersect"].get<bool>() ? 1 : 0) << "\n";
  }
  if (!found) {
    std::cerr << "unknown place: " << place << "\n";
    return 1;
  }
  return 0;
}

int cmd_resolve(const std::string& boundaries_path, double lat, double lon) {
  try {
    auto index = gp::load_boundaries(boundaries_path);
    gp::GeoMessage msg;
    msg.coords = gp::LatLon{lat, lon};
    auto located = gp::resolve(msg, index);
    nlohmann::json j;
    j["resolved"] = located.resolved();
    if (located.resolved()) {
      j["place_id"] = located.place_id;
      j["place_name"] = located.place_name;
      j["level"] = gp::to_string(located.level);
      nlohmann::json chain = nlohmann::json::array();
      for (const auto& p : located.chain) {
        nlohmann::json pj;
        pj["place_id"] = p.place_id;
        pj["name"] = p.name;
        pj["level"] = gp::to_string(p.level);
        chain.push_back(pj);
      }
      j["chain"] = chain;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Location-based event detection over geo-tagged message streams"};
  app.require_subcommand(1);

  const char* env_data_dir = std::getenv("GEOPULSE_DATA_DIR");
  std::string default_data_dir = env_data_dir ? env_data_dir : "";

  DetectOptions det;
  det.data_dir = default_data_dir;
  auto* detect = app.add_subcommand("detect", "Run event detection over a stream");
  detect->add_option("--input", det.input, "Input JSONL path or tcp://host:port");
  detect->add_option("--boundaries", det.boundaries, "GeoJSON boundary polygons");
  detect->add_option("--bin-size", det.bin_size, "Bin size (1m, 5m, 10m, 1h)");
  detect->add_option("--place-level", det.place_level, "country|admin|city");
  detect->add_option("--k", det.k, "Deviation threshold");
  detect->add_option("--warmup-bins", det.warmup_bins, "Warmup bins (0 = one day)");
  detect->add_option("--max-gap", det.max_gap, "Max gap inside one event window");
  detect->add_option("--rate", det.rate, "Replay rate multiplier (0 = fast)");
  detect->add_option("--reorder-window", det.reorder_window_s, "Reorder window, seconds");
  detect->add_option("--stopwords", det.stopwords, "Stopword file");
  detect->add_option("--top-n", det.top_n, "Terms per event");
  detect->add_option("--expected-peak", det.expected_peak,
                     "Expected peak bin value (0 = estimate from first day)");
  detect->add_option("--data-dir", det.data_dir, "Durable log directory");
  detect->add_option("--out", det.out, "Events output file (JSONL)");
  detect->add_option("--config", det.config_file, "Config file (key = value)");
  detect->add_option("--limit", det.limit, "Stop after N input lines and checkpoint");
  detect->add_flag("--checkpoint", det.checkpoint, "Write a checkpoint at completion");
  detect->add_flag("--resume", det.resume, "Resume from the latest checkpoint");

  std::string scenario_path, synth_out = ".";
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic stream");
  synth->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  synth->add_option("--out", synth_out, "Output directory");

  std::string events_path, truth_path, score_bin = "10m";
  std::int64_t tol_bins = 1;
  auto* score = app.add_subcommand("score", "Score detector output against ground truth");
  score->add_option("--events", events_path, "Detector events JSONL")->required();
  score->add_option("--truth", truth_path, "Ground truth JSONL")->required();
  score->add_option("--tolerance-bins", tol_bins, "Match tolerance in bins");
  score->add_option("--bin-size", score_bin, "Bin size for tolerance");

  std::string exp_data_dir = default_data_dir, exp_place, exp_out;
  auto* expser = app.add_subcommand("export-series", "Export a place's series as CSV");
  expser->add_option("--data-dir", exp_data_dir, "Durable log directory");
  expser->add_option("--place", exp_place, "Place id")->required();
  expser->add_option("--out", exp_out, "CSV output path (default stdout)");

  std::string res_boundaries;
  double res_lat = 0, res_lon = 0;
  auto* resolve = app.add_subcommand("resolve", "One-shot lat/lon to place lookup");
  resolve->add_option("--boundaries", res_boundaries, "GeoJSON boundary polygons")->required();
  resolve->add_option("--lat", res_lat, "Latitude")->required();
  resolve->add_option("--lon", res_lon, "Longitude")->required();

  CLI11_PARSE(app, argc, argv);

  if (detect->parsed()) return cmd_detect(det, *detect);
  if (synth->parsed()) return cmd_synth(scenario_path, synth_out);
  if (score->parsed()) return cmd_score(events_path, truth_path, tol_bins, score_bin);
  if (expser->parsed()) return cmd_export_series(exp_data_dir, exp_place, exp_out);
  if (resolve->parsed()) return cmd_resolve(res_boundaries, res_lat, res_lon);
  return 1;
}
