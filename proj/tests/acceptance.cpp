// End-to-end acceptance checks. Each numbered criterion prints one
// PASS/FAIL line; the process exits non-zero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geopulse/igmn.hpp"
#include "geopulse/geo.hpp"
#include "geopulse/pipeline.hpp"
#include "geopulse/series.hpp"
#include "geopulse/synth.hpp"

using namespace geopulse;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void criterion(int n, bool ok, const std::string& detail) {
  std::printf("CRITERION %d: %s%s%s\n", n, ok ? "PASS" : "FAIL",
              detail.empty() ? "" : " — ", detail.c_str());
  if (!ok) ++g_failures;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- pipeline run helpers -------------------------------------------------

struct RunOutput {
  std::set<std::int64_t> flagged_bins;   // intersect-flagged bin indices
  std::int64_t outlier_bins = 0;
  std::vector<DetectedWindow> windows;
  std::vector<std::string> event_lines;  // serialized, in emission order
};

PipelineConfig make_config(Duration bin, double k) {
  PipelineConfig cfg;
  cfg.detector.bin_size = bin;
  cfg.detector.k = k;
  return cfg;
}

RunOutput run_pipeline(const std::string& messages, const PipelineConfig& cfg,
                       const std::string& data_dir = "") {
  PipelineConfig c = cfg;
  c.data_dir = data_dir;
  Pipeline p(c, StopwordList::defaults());
  RunOutput out;
  p.set_event_sink([&](const EventReport& r) {
    DetectedWindow w;
    w.place_id = r.window.place_id;
    w.start = c.epoch + r.window.start_bin * c.detector.bin_size;
    w.end = c.epoch + (r.window.end_bin + 1) * c.detector.bin_size;
    out.windows.push_back(w);
    out.event_lines.push_back(p.event_to_json(r).dump());
  });
  std::ifstream in(messages);
  if (!in) throw std::runtime_error("cannot open " + messages);
  p.run(in);
  p.finish();
  out.outlier_bins = p.outlier_bins();
  if (!data_dir.empty()) {
    for (const auto& rec : AppendLog::read_all(data_dir + "/bins.log")) {
      auto j = nlohmann::json::parse(rec);
      if (j["intersect"].get<bool>())
        out.flagged_bins.insert(j["bin_index"].get<std::int64_t>());
    }
  }
  return out;
}

// ---- criterion 6 oracle: brute force with a westward ray -------------------

bool oracle_ring_odd(const Ring& ring, double lat, double lon, bool& on_edge) {
  on_edge = false;
  bool odd = false;
  for (size_t i = 0; i + 1 < ring.size(); ++i) {
    double y1 = ring[i].lat, x1 = ring[i].lon;
    double y2 = ring[i + 1].lat, x2 = ring[i + 1].lon;
    double cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1);
    if (cross == 0.0 && lon >= std::min(x1, x2) && lon <= std::max(x1, x2) &&
        lat >= std::min(y1, y2) && lat <= std::max(y1, y2)) {
      on_edge = true;
      return false;
    }
    if ((y1 > lat) != (y2 > lat)) {
      double x_at = x1 + (lat - y1) / (y2 - y1) * (x2 - x1);
      if (x_at < lon) odd = !odd;  // ray goes west, implementation goes east
    }
  }
  return odd;
}

bool oracle_contains(const Polygon& poly, double lat, double lon) {
  bool edge = false;
  bool in_outer = oracle_ring_odd(poly.outer, lat, lon, edge);
  if (edge) return true;
  if (!in_outer) return false;
  for (const auto& h : poly.holes) {
    bool hedge = false;
    bool in_hole = oracle_ring_odd(h, lat, lon, hedge);
    if (hedge) return true;  // hole boundary belongs to the polygon
    if (in_hole) return false;
  }
  return true;
}

Polygon random_polygon(std::mt19937& rng) {
  // Star-shaped simple polygon: random radii around a random center.
  std::uniform_real_distribution<double> cdist(-50.0, 50.0);
  std::uniform_real_distribution<double> rdist(1.0, 10.0);
  std::uniform_int_distribution<int> ndist(3, 12);
  double cy = cdist(rng), cx = cdist(rng);
  int n = ndist(rng);
  Ring ring;
  for (int i = 0; i < n; ++i) {
    double a = 2.0 * M_PI * i / n;
    double r = rdist(rng);
    ring.push_back({cy + r * std::sin(a), cx + r * std::cos(a)});
  }
  ring.push_back(ring.front());
  return Polygon{ring, {}};
}

// ---- criterion 7b helper ---------------------------------------------------

std::vector<std::string> run_split(const std::string& messages,
                                   const PipelineConfig& cfg,
                                   std::int64_t split_line) {
  std::vector<std::string> lines;
  nlohmann::json state;
  std::int64_t consumed = 0;
  {
    Pipeline p(cfg, StopwordList::defaults());
    p.set_event_sink([&](const EventReport& r) {
      lines.push_back(p.event_to_json(r).dump());
    });
    p.set_line_limit(split_line);
    std::ifstream in(messages);
    p.run(in);
    state = p.state_to_json();
    consumed = p.lines_consumed();
  }
  {
    Pipeline p(cfg, StopwordList::defaults());
    p.restore_state(state);
    p.set_event_sink([&](const EventReport& r) {
      lines.push_back(p.event_to_json(r).dump());
    });
    std::ifstream in(messages);
    p.run(in, consumed);
    p.finish();
  }
  return lines;
}

}  // namespace

int main() {
  fs::path work = fs::temp_directory_path() /
                  ("gp_accept_" + std::to_string(::getpid()));
  fs::create_directories(work);

  // Shared inputs: the bundled scenarios, generated once.
  std::string msgs6 = (work / "msgs6.jsonl").string();
  std::string truth6 = (work / "truth6.jsonl").string();
  std::string msgs_flood = (work / "msgs_flood.jsonl").string();
  std::string truth_flood = (work / "truth_flood.jsonl").string();
  generate_stream(load_scenario(std::string(GEOPULSE_FIXTURES) +
                                "/scenario_6day.json"),
                  msgs6, truth6);
  generate_stream(load_scenario(std::string(GEOPULSE_FIXTURES) +
                                "/scenario_flood.json"),
                  msgs_flood, truth_flood);
  auto truth = load_truth(truth6);

  const Duration kMin = kMillisPerMinute;

  // 1. Scorer arithmetic fixtures (published precision figures).
  {
    struct Row { std::int64_t total, matched; double pct; };
    const Row rows[] = {{90, 22, 24.44}, {20, 12, 60.00}, {7, 5, 71.43},
                        {31, 11, 35.48}, {12, 8, 66.67}};
    bool ok = true;
    std::string detail;
    for (const auto& r : rows) {
      auto rep = ScoreReport::from_counts(r.total, r.matched, r.matched, 3);
      double pct = rep.precision * 100.0;
      if (std::abs(pct - r.pct) > 0.01 + 1e-9) {
        ok = false;
        detail = "got " + std::to_string(pct) + " for " +
                 std::to_string(r.matched) + "/" + std::to_string(r.total);
      }
    }
    criterion(1, ok, ok ? "precision fixtures within 0.01 pp" : detail);
  }

  // 2. Threshold monotonicity with strict subset inclusion (1-min bins).
  {
    auto r3 = run_pipeline(msgs6, make_config(kMin, 3.0), (work / "c2k3").string());
    auto r4 = run_pipeline(msgs6, make_config(kMin, 4.0), (work / "c2k4").string());
    auto r5 = run_pipeline(msgs6, make_config(kMin, 5.0), (work / "c2k5").string());
    bool subset54 = std::includes(r4.flagged_bins.begin(), r4.flagged_bins.end(),
                                  r5.flagged_bins.begin(), r5.flagged_bins.end());
    bool subset43 = std::includes(r3.flagged_bins.begin(), r3.flagged_bins.end(),
                                  r4.flagged_bins.begin(), r4.flagged_bins.end());
    bool strict = r5.flagged_bins.size() < r4.flagged_bins.size() &&
                  r4.flagged_bins.size() < r3.flagged_bins.size();
    std::ostringstream d;
    d << "outlier bins k=3/4/5: " << r3.flagged_bins.size() << "/"
      << r4.flagged_bins.size() << "/" << r5.flagged_bins.size();
    criterion(2, subset54 && subset43 && strict, d.str());
  }

  // 3. Bin-size trend: non-increasing outliers, 10-min misses >= 1-min misses.
  {
    auto r1 = run_pipeline(msgs6, make_config(1 * kMin, 3.0));
    auto r5 = run_pipeline(msgs6, make_config(5 * kMin, 3.0));
    auto r10 = run_pipeline(msgs6, make_config(10 * kMin, 3.0));
    auto s1 = score(r1.windows, truth, 1 * kMin);
    auto s10 = score(r10.windows, truth, 10 * kMin);
    bool ok = r1.outlier_bins >= r5.outlier_bins &&
              r5.outlier_bins >= r10.outlier_bins &&
              s10.missed_events >= s1.missed_events;
    std::ostringstream d;
    d << "outliers 1/5/10 min: " << r1.outlier_bins << "/" << r5.outlier_bins
      << "/" << r10.outlier_bins << ", missed " << s1.missed_events << " -> "
      << s10.missed_events;
    criterion(3, ok, d.str());
  }

  // 4. Recall of all three event shapes; flood suppressed by intersection.
  {
    auto r10 = run_pipeline(msgs6, make_config(10 * kMin, 3.0));
    std::set<std::string> covered;
    for (const auto& t : truth) {
      for (const auto& w : r10.windows) {
        if (w.place_id == t.place_id && w.start <= t.end + 10 * kMin &&
            w.end >= t.start - 10 * kMin) {
          covered.insert(t.shape);
          break;
        }
      }
    }
    auto flood = run_pipeline(msgs_flood, make_config(10 * kMin, 3.0));
    bool ok = covered.size() == 3 && flood.windows.empty();
    std::ostringstream d;
    d << covered.size() << "/3 shapes covered, flood windows: "
      << flood.windows.size();
    criterion(4, ok, d.str());
  }

  // 5. IGMN numerics.
  {
    bool ok = true;
    std::string detail = "density, running mean, 3 clusters, invariants";
    // (a) density vs direct formula on random points.
    {
      std::mt19937 rng(7);
      std::normal_distribution<double> g(0.0, 2.0);
      Component c;
      c.sp = 1.0;
      c.mean = {0.5, -1.0};
      c.cov = {2.0, 0.3, 0.3, 1.0};
      double det = 2.0 * 1.0 - 0.3 * 0.3;
      double inv[4] = {1.0 / det, -0.3 / det, -0.3 / det, 2.0 / det};
      for (int i = 0; i < 100 && ok; ++i) {
        Vec x{g(rng), g(rng)};
        double dx = x[0] - c.mean[0], dy = x[1] - c.mean[1];
        double q = dx * (inv[0] * dx + inv[1] * dy) +
                   dy * (inv[2] * dx + inv[3] * dy);
        double want = std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
        if (std::abs(component_density(c, x) - want) > 1e-12) {
          ok = false;
          detail = "density mismatch";
        }
      }
    }
    // (b) running-mean exactness over 10,000 points.
    if (ok) {
      std::mt19937 rng(8);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      IgmnModel m({100.0}, 0.01);  // wide enough to stay one component
      double sum = 0.0;
      for (int i = 1; i <= 10000; ++i) {
        double x = u(rng);
        sum += x;
        m.learn({x});
        if (std::abs(m.components()[0].mean[0] - sum / i) > 1e-9) {
          ok = false;
          detail = "running mean drifted";
          break;
        }
      }
      if (ok && m.component_count() != 1) {
        ok = false;
        detail = "single component split";
      }
    }
    // (c) three-cluster recovery.
    if (ok) {
      std::vector<Vec> centers = {{0.0, 0.0}, {15.0, 0.0}, {0.0, 15.0}};
      std::mt19937 rng(20110101);
      std::normal_distribution<double> g(0.0, 1.0);
      IgmnModel m({2.0, 2.0}, 1e-4);
      for (int i = 0; i < 600; ++i) {
        const Vec& c = centers[i % 3];
        m.learn({c[0] + g(rng), c[1] + g(rng)});
      }
      if (m.component_count() != 3) {
        ok = false;
        detail = "cluster count " + std::to_string(m.component_count());
      } else {
        for (const Vec& c : centers) {
          double best = 1e18;
          for (const auto& comp : m.components()) {
            double dx = comp.mean[0] - c[0], dy = comp.mean[1] - c[1];
            best = std::min(best, std::hypot(dx, dy));
          }
          if (best > 0.2) {
            ok = false;
            detail = "cluster mean off by " + std::to_string(best);
          }
        }
      }
    }
    // (d) priors and covariance invariants across 10,000 learns.
    if (ok) {
      std::mt19937 rng(9);
      std::normal_distribution<double> g(0.0, 3.0);
      IgmnModel m({1.0, 1.0}, 0.01);
      for (int i = 0; i < 10000 && ok; ++i) {
        m.learn({g(rng), g(rng)});
        double psum = 0.0;
        for (size_t j = 0; j < m.component_count(); ++j) psum += m.prior(j);
        if (std::abs(psum - 1.0) > 1e-9) {
          ok = false;
          detail = "priors do not sum to 1";
        }
        for (const auto& c : m.components())
          if (!linalg::cholesky(c.cov, c.mean.size())) {
            ok = false;
            detail = "covariance lost positive-definiteness";
          }
      }
    }
    criterion(5, ok, detail);
  }

  // 6. Point-in-polygon agreement with an independent brute-force caster.
  {
    std::mt19937 rng(20120219);
    std::uniform_real_distribution<double> pdist(-60.0, 60.0);
    bool ok = true;
    std::string detail = "10000 points x 50 polygons + fixtures";
    std::vector<Polygon> polys;
    for (int i = 0; i < 50; ++i) polys.push_back(random_polygon(rng));
    for (int i = 0; i < 10000 && ok; ++i) {
      double lat = pdist(rng), lon = pdist(rng);
      for (const auto& poly : polys) {
        if (point_in_polygon(lat, lon, poly) != oracle_contains(poly, lat, lon)) {
          ok = false;
          detail = "disagreement at " + std::to_string(lat) + "," +
                   std::to_string(lon);
          break;
        }
      }
    }
    if (ok) {
      // Square with a square hole, plus a second disjoint square.
      Polygon holed{{{0, 0}, {0, 10}, {10, 10}, {10, 0}, {0, 0}},
                    {{{4, 4}, {4, 6}, {6, 6}, {6, 4}, {4, 4}}}};
      Polygon other{{{20, 20}, {20, 25}, {25, 25}, {25, 20}, {20, 20}}, {}};
      bool fixtures =
          point_in_polygon(2, 2, holed) &&        // in the solid part
          !point_in_polygon(5, 5, holed) &&       // inside the hole
          point_in_polygon(0, 5, holed) &&        // on the outer edge
          point_in_polygon(4, 5, holed) &&        // on the hole edge
          !point_in_polygon(15, 15, holed) &&     // outside everything
          point_in_polygon(22, 22, other) &&      // second part of a multipolygon
          !point_in_polygon(22, 22, holed);
      if (!fixtures) {
        ok = false;
        detail = "edge/hole fixtures failed";
      }
    }
    criterion(6, ok, detail);
  }

  // 7. Determinism (CLI, byte-identical) and checkpoint/restart equivalence.
  {
    auto cli_run = [&](const std::string& tag) {
      std::string ev = (work / ("ev_" + tag + ".jsonl")).string();
      std::string dd = (work / ("dd_" + tag)).string();
      std::string cmd = std::string(GEOPULSE_BIN) + " detect --input " + msgs6 +
                        " --out " + ev + " --data-dir " + dd +
                        " --bin-size 10m --k 3 >/dev/null 2>&1";
      int rc = std::system(cmd.c_str());
      return std::make_pair(rc, ev);
    };
    auto [rc1, ev1] = cli_run("a");
    auto [rc2, ev2] = cli_run("b");
    bool identical = rc1 == 0 && rc2 == 0 && read_file(ev1) == read_file(ev2) &&
                     !read_file(ev1).empty();

    auto cfg = make_config(10 * kMin, 3.0);
    std::vector<std::string> full;
    {
      Pipeline p(cfg, StopwordList::defaults());
      p.set_event_sink([&](const EventReport& r) {
        full.push_back(p.event_to_json(r).dump());
      });
      std::ifstream in(msgs6);
      p.run(in);
      p.finish();
    }
    std::int64_t total_lines = 0;
    {
      std::ifstream in(msgs6);
      std::string line;
      while (std::getline(in, line)) ++total_lines;
    }
    bool restarts_ok = true;
    for (std::int64_t split :
         {total_lines / 7, total_lines / 3, total_lines / 2,
          2 * total_lines / 3, total_lines - 5}) {
      if (run_split(msgs6, cfg, split) != full) {
        restarts_ok = false;
        break;
      }
    }
    std::ostringstream d;
    d << (identical ? "two runs byte-identical" : "runs differ") << ", "
      << (restarts_ok ? "5 restart points equivalent" : "restart diverged");
    criterion(7, identical && restarts_ok, d.str());
  }

  // 8. Conservation properties over 1,000 generated mini-streams.
  {
    std::mt19937 rng(555);
    std::uniform_int_distribution<int> ndist(0, 200);
    std::uniform_int_distribution<Duration> step(0, 30 * kMin);
    std::uniform_int_distribution<int> udist(0, 9);
    bool ok = true;
    std::string detail = "1000 mini-streams conserved";
    for (int s = 0; s < 1000 && ok; ++s) {
      PlaceSeries series("p", 10 * kMin, kDefaultEpoch);
      int n = ndist(rng);
      Timestamp ts = kDefaultEpoch + 1000000LL * s;
      std::map<std::int64_t, std::set<std::string>> users_oracle;
      std::map<std::int64_t, std::int64_t> tweets_oracle;
      std::vector<BinObservation> bins;
      for (int i = 0; i < n; ++i) {
        ts += step(rng);
        std::string user = "u" + std::to_string(udist(rng));
        std::int64_t idx = assign_bin(ts, 10 * kMin, kDefaultEpoch);
        users_oracle[idx].insert(user);
        tweets_oracle[idx] += 1;
        for (auto& b : series.ingest(ts, user, "text")) bins.push_back(b);
      }
      for (auto& b : series.flush()) bins.push_back(b);
      std::int64_t total = 0;
      for (size_t i = 0; i < bins.size(); ++i) {
        const auto& b = bins[i];
        total += b.tweets;
        if (b.users > b.tweets) { ok = false; detail = "users > tweets"; }
        if (i > 0 && b.bin_index != bins[i - 1].bin_index + 1) {
          ok = false;
          detail = "non-contiguous bins";
        }
        auto uit = users_oracle.find(b.bin_index);
        std::int64_t want_users =
            uit == users_oracle.end() ? 0
                                      : static_cast<std::int64_t>(uit->second.size());
        auto tit = tweets_oracle.find(b.bin_index);
        std::int64_t want_tweets = tit == tweets_oracle.end() ? 0 : tit->second;
        if (b.users != want_users || b.tweets != want_tweets) {
          ok = false;
          detail = "bin counts disagree with oracle";
        }
      }
      if (total != n) {
        ok = false;
        detail = "tweet conservation violated";
      }
    }
    criterion(8, ok, detail);
  }

  // CLI contract spot checks (exit codes and export parity).
  {
    auto sh = [](const std::string& cmd) {
      int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
      return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    std::string bin = GEOPULSE_BIN;
    bool ok = true;
    std::string detail = "exit codes and export parity";

    if (sh(bin + " detect --input " + msgs6 + " --boundaries " +
           (work / "missing.geojson").string()) != 1) {
      ok = false;
      detail = "missing boundaries should exit 1";
    }

    std::string empty_in = (work / "empty.jsonl").string();
    std::ofstream(empty_in).close();
    std::string empty_out = (work / "empty_events.jsonl").string();
    if (ok && sh(bin + " detect --input " + empty_in + " --out " + empty_out) != 0) {
      ok = false;
      detail = "empty input should exit 0";
    }
    if (ok && !read_file(empty_out).empty()) {
      ok = false;
      detail = "empty input should emit 0 events";
    }

    std::string dd = (work / "dd_cli").string();
    std::string csv = (work / "series.csv").string();
    if (ok) {
      sh(bin + " detect --input " + msgs6 + " --out " +
         (work / "ev_cli.jsonl").string() + " --data-dir " + dd +
         " --bin-size 10m --k 3");
      if (sh(bin + " export-series --data-dir " + dd +
             " --place sao_paulo --out " + csv) != 0) {
        ok = false;
        detail = "export-series failed";
      }
    }
    if (ok && sh(bin + " export-series --data-dir " + dd +
                 " --place nowhere --out " + csv + ".x") == 0) {
      ok = false;
      detail = "unknown place should fail";
    }
    if (ok) {
      // CSV flags must mirror the bins log record for record.
      auto recs = AppendLog::read_all(dd + "/bins.log");
      std::ifstream in(csv);
      std::string header, line;
      std::getline(in, header);
      size_t row = 0;
      for (; std::getline(in, line); ++row) {
        if (row >= recs.size()) break;
        auto j = nlohmann::json::parse(recs[row]);
        std::ostringstream want;
        want << format_rfc3339(*parse_rfc3339(j["bin_start"].get<std::string>()))
             << "," << j["tweets"].get<std::int64_t>() << ","
             << j["users"].get<std::int64_t>() << ","
             << (j["tweets_flag"].get<bool>() ? 1 : 0) << ","
             << (j["users_flag"].get<bool>() ? 1 : 0) << ","
             << (j["intersect"].get<bool>() ? 1 : 0);
        if (line != want.str()) {
          ok = false;
          detail = "CSV row " + std::to_string(row) + " differs from bins log";
          break;
        }
      }
      if (ok && row != recs.size()) {
        ok = false;
        detail = "CSV row count differs from bins log";
      }
    }
    std::printf("CLI CONTRACT: %s — %s\n", ok ? "PASS" : "FAIL", detail.c_str());
    if (!ok) ++g_failures;
  }

  std::error_code ec;
  fs::remove_all(work, ec);
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
