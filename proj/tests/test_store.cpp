#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "geopulse/store.hpp"

using namespace geopulse;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gp_store_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const char* name) const { return (path / name).string(); }
};

size_t file_size(const std::string& p) {
  return static_cast<size_t>(fs::file_size(p));
}

void truncate_to(const std::string& p, size_t n) {
  fs::resize_file(p, n);
}

}  // namespace

TEST_CASE("crc32 matches the standard test vector", "[store]") {
  // [PAPER-independent] The IEEE 802.3 CRC of "123456789" is 0xCBF43926;
  // this pins the polynomial and reflection conventions.
  CHECK(detail::crc32("123456789", 9) == 0xCBF43926u);
  CHECK(detail::crc32("", 0) == 0u);
}

TEST_CASE("append log round-trips records in order", "[store]") {
  TempDir td;
  auto path = td.str("a.log");
  {
    AppendLog log;
    log.open(path);
    log.append("first");
    log.append("");
    log.append(std::string(1 << 16, 'x'));
    log.close();
  }
  auto recs = AppendLog::read_all(path);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0] == "first");
  CHECK(recs[1].empty());
  CHECK(recs[2] == std::string(1 << 16, 'x'));
}

TEST_CASE("append log reopen appends after existing records", "[store]") {
  TempDir td;
  auto path = td.str("a.log");
  {
    AppendLog log;
    log.open(path);
    log.append("one");
  }
  {
    AppendLog log;
    log.open(path);
    log.append("two");
  }
  auto recs = AppendLog::read_all(path);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0] == "one");
  CHECK(recs[1] == "two");
}

TEST_CASE("read_all of a missing file yields no records", "[store]") {
  TempDir td;
  CHECK(AppendLog::read_all(td.str("nope.log")).empty());
}

TEST_CASE("torn tail is dropped, intact prefix survives", "[store]") {
  TempDir td;
  auto path = td.str("a.log");
  {
    AppendLog log;
    log.open(path);
    log.append("alpha");
    log.append("beta");
  }
  size_t full = file_size(path);
  // [DERIVED] each record is 8 bytes of header plus the payload.
  REQUIRE(full == (8 + 5) + (8 + 4));

  SECTION("payload cut mid-way") {
    truncate_to(path, full - 2);
    auto recs = AppendLog::read_all(path);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0] == "alpha");
  }
  SECTION("header cut mid-way") {
    truncate_to(path, (8 + 5) + 3);
    auto recs = AppendLog::read_all(path);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0] == "alpha");
  }
  SECTION("clean boundary keeps everything") {
    auto recs = AppendLog::read_all(path);
    REQUIRE(recs.size() == 2);
  }
}

TEST_CASE("corrupted payload byte stops the scan at that record", "[store]") {
  TempDir td;
  auto path = td.str("a.log");
  {
    AppendLog log;
    log.open(path);
    log.append("alpha");
    log.append("beta");
    log.append("gamma");
  }
  // Flip one byte inside "beta"'s payload.
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp((8 + 5) + 8 + 1);
  f.put('X');
  f.close();
  auto recs = AppendLog::read_all(path);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0] == "alpha");
}

TEST_CASE("checkpoints number sequentially and latest() finds the newest",
          "[store]") {
  TempDir td;
  CheckpointStore cs(td.path.string());
  CHECK(cs.latest().empty());

  auto h = config_hash("cfg");
  auto p1 = cs.write(nlohmann::json{{"n", 1}}, h);
  auto p2 = cs.write(nlohmann::json{{"n", 2}}, h);
  CHECK(p1.find("001.ckpt") != std::string::npos);
  CHECK(p2.find("002.ckpt") != std::string::npos);
  CHECK(cs.latest() == p2);

  auto state = CheckpointStore::read(cs.latest(), h);
  CHECK(state["n"].get<int>() == 2);
  auto old_state = CheckpointStore::read(p1, h);
  CHECK(old_state["n"].get<int>() == 1);
}

TEST_CASE("checkpoint read rejects a different config hash", "[store]") {
  TempDir td;
  CheckpointStore cs(td.path.string());
  auto p = cs.write(nlohmann::json{{"n", 1}}, config_hash("cfg-a"));
  CHECK_THROWS_AS(CheckpointStore::read(p, config_hash("cfg-b")),
                  ConfigMismatch);
}

TEST_CASE("truncated or bit-flipped checkpoint is reported as corrupt",
          "[store]") {
  TempDir td;
  CheckpointStore cs(td.path.string());
  auto h = config_hash("cfg");
  auto p = cs.write(nlohmann::json{{"n", 1}}, h);

  SECTION("truncated") {
    truncate_to(p, file_size(p) - 3);
    CHECK_THROWS_AS(CheckpointStore::read(p, h),
                    CheckpointStore::CorruptCheckpointFile);
  }
  SECTION("bit flip") {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(12);
    int c = f.peek();
    f.put(static_cast<char>(c ^ 0x01));
    f.close();
    CHECK_THROWS_AS(CheckpointStore::read(p, h),
                    CheckpointStore::CorruptCheckpointFile);
  }
}

TEST_CASE("checkpoint state round-trips doubles exactly", "[store]") {
  TempDir td;
  CheckpointStore cs(td.path.string());
  auto h = config_hash("cfg");
  nlohmann::json state;
  state["v"] = 0.1 + 0.2;  // not representable; must survive bit-exact
  state["w"] = 1e-17;
  auto p = cs.write(state, h);
  auto back = CheckpointStore::read(p, h);
  CHECK(back["v"].get<double>() == 0.1 + 0.2);
  CHECK(back["w"].get<double>() == 1e-17);
}

TEST_CASE("config_hash is FNV-1a", "[store]") {
  // [DERIVED] standard FNV-1a 64-bit test vectors.
  CHECK(config_hash("") == 14695981039346656037ULL);
  CHECK(config_hash("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(config_hash("foobar") == 0x85944171f73967e8ULL);
}
