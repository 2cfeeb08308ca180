#ifndef GEOPULSE_STORE_HPP
#define GEOPULSE_STORE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace geopulse {

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoFailure : StoreError {
  using StoreError::StoreError;
};
struct ConfigMismatch : StoreError {
  using StoreError::StoreError;
};

namespace detail {

inline std::uint32_t crc32(const void* data, size_t len,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// Append-only log of length-prefixed, checksummed records. A torn tail
// record (crash mid-write) is detected and discarded on read; records
// before it stay intact.
class AppendLog {
 public:
  AppendLog() = default;

  void open(const std::string& path) {
    path_ = path;
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw IoFailure("cannot open log for append: " + path);
  }

  void append(const std::string& payload) {
    std::string rec;
    detail::put_u32(rec, static_cast<std::uint32_t>(payload.size()));
    detail::put_u32(rec, detail::crc32(payload.data(), payload.size()));
    rec += payload;
    out_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    out_.flush();
    if (!out_) throw IoFailure("write failed: " + path_);
  }

  void close() { out_.close(); }

  // Reads every intact record; stops silently at a torn or corrupt tail.
  static std::vector<std::string> read_all(const std::string& path) {
    std::vector<std::string> records;
    std::ifstream in(path, std::ios::binary);
    if (!in) return records;
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    size_t pos = 0;
    while (pos + 8 <= data.size()) {
      const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
      std::uint32_t len = detail::get_u32(p);
      std::uint32_t crc = detail::get_u32(p + 4);
      if (pos + 8 + len > data.size()) break;  // torn tail
      if (detail::crc32(data.data() + pos + 8, len) != crc) break;
      records.emplace_back(data, pos + 8, len);
      pos += 8 + len;
    }
    return records;
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Checkpoint files live under <data_dir>/checkpoints/NNN.ckpt. Each holds a
// version byte, a config hash guard, and the full serialized pipeline state.
class CheckpointStore {
 public:
  static constexpr int kVersion = 1;

  explicit CheckpointStore(std::string data_dir)
      : dir_(std::move(data_dir)) {}

  std::string write(const nlohmann::json& state, std::uint64_t config_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir_) / "checkpoints");
    int next = 1;
    for (const auto& e : fs::directory_iterator(fs::path(dir_) / "checkpoints")) {
      int n = number_of(e.path().filename().string());
      if (n >= next) next = n + 1;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%03d.ckpt", next);
    std::string path = (fs::path(dir_) / "checkpoints" / name).string();

    nlohmann::json j;
    j["version"] = kVersion;
    j["config_hash"] = config_hash;
    j["state"] = state;
    std::string payload = j.dump();

    std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      std::string rec;
      detail::put_u32(rec, static_cast<std::uint32_t>(payload.size()));
      detail::put_u32(rec, detail::crc32(payload.data(), payload.size()));
      out << rec << payload;
      if (!out) throw IoFailure("checkpoint write failed: " + tmp);
    }
    fs::rename(tmp, path);
    return path;
  }

  // Path of the newest checkpoint, empty when none exist.
  std::string latest() const {
    namespace fs = std::filesystem;
    fs::path cdir = fs::path(dir_) / "checkpoints";
    if (!fs::exists(cdir)) return "";
    int best = 0;
    std::string best_path;
    for (const auto& e : fs::directory_iterator(cdir)) {
      int n = number_of(e.path().filename().string());
      if (n > best) {
        best = n;
        best_path = e.path().string();
      }
    }
    return best_path;
  }

  static nlohmann::json read(const std::string& path,
                             std::uint64_t expected_config_hash) {
    auto records = AppendLog::read_all(path);
    if (records.size() != 1)
      throw CorruptCheckpointFile("truncated or corrupt checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(records[0], nullptr, false);
    if (j.is_discarded() || !j.contains("version"))
      throw CorruptCheckpointFile("unparseable checkpoint: " + path);
    if (j["version"].get<int>() != kVersion)
      throw CorruptCheckpointFile("unsupported checkpoint version");
    if (j["config_hash"].get<std::uint64_t>() != expected_config_hash)
      throw ConfigMismatch("checkpoint was written under a different config");
    return j["state"];
  }

  struct CorruptCheckpointFile : StoreError {
    using StoreError::StoreError;
  };

 private:
  static int number_of(const std::string& filename) {
    if (filename.size() < 5 || filename.substr(filename.size() - 5) != ".ckpt")
      return 0;
    try {
      return std::stoi(filename.substr(0, filename.size() - 5));
    } catch (const std::exception&) {
      return 0;
    }
  }

  std::string dir_;
};

// FNV-1a over a canonical config string; guards checkpoint restores.
inline std::uint64_t config_hash(const std::string& canonical) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace geopulse

#endif  // GEOPULSE_STORE_HPP
