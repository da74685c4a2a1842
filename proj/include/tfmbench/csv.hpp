#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tfmbench/common.hpp"

namespace tfmbench {

/// Minimal strict CSV: comma-delimited, one header row, no quoting.
/// Cells are trimmed; a UTF-8 BOM on the first line is stripped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& path) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(path, ": missing column '", name, "'");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), path.string(), ": cannot open file");

  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB &&
          static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      require(cells.size() == table.header.size(), path.string(), ": row ",
              table.rows.size() + 1, " has ", cells.size(),
              " cells, header has ", table.header.size());
      table.rows.push_back(std::move(cells));
    }
  }
  require(!first, path.string(), ": empty file, header row required");
  return table;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  require(out.good(), path.string(), ": cannot open for writing");
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << row[i];
    out << "\n";
  }
  require(out.good(), path.string(), ": write failed");
}

}  // namespace tfmbench
