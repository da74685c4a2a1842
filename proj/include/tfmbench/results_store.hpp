#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfmbench/common.hpp"

namespace tfmbench {

/// Append-only run store: one JSON record per line in results.ndjson.
/// Records are immutable once written; a rerun appends a fresh record with
/// a new run id. Reads never lock out appends from the same process.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path ndjson_path() const { return dir_ / "results.ndjson"; }

  /// Assigns the run id, stamps the record and appends it. Returns the id.
  std::string append(nlohmann::json record) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::size_t seq = count_records_unlocked();
    char id[64];
    std::snprintf(id, sizeof id, "run-%04zu-%s", seq,
                  record.value("config_hash", std::string("00000000"))
                      .substr(0, 8)
                      .c_str());
    record["run_id"] = id;
    std::ofstream out(ndjson_path(), std::ios::app);
    require(out.good(), ndjson_path().string(), ": cannot open for append");
    out << record.dump() << "\n";
    require(out.good(), ndjson_path().string(), ": append failed");
    return id;
  }

  std::vector<nlohmann::json> records() const {
    std::vector<nlohmann::json> out;
    std::ifstream in(ndjson_path());
    if (!in.good()) return out;
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      out.push_back(nlohmann::json::parse(line));
    }
    return out;
  }

  nlohmann::json find(const std::string& run_id) const {
    for (auto& r : records())
      if (r.value("run_id", "") == run_id) return r;
    fail("results store ", ndjson_path().string(), ": unknown run id '",
         run_id, "'");
  }

 private:
  std::size_t count_records_unlocked() const {
    std::ifstream in(ndjson_path());
    if (!in.good()) return 0;
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
      if (!trim(line).empty()) ++n;
    return n;
  }

  std::filesystem::path dir_;
  std::mutex mutex_;
};

}  // namespace tfmbench
