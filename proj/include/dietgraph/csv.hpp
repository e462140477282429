#pragma once

#include <string>
#include <vector>

namespace dietgraph {

// Parsed CSV file. Quoted fields may contain commas and doubled quotes;
// fields never span lines. line_of[i] is the 1-based source line of row i,
// for error messages.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_of;

  // Column index for a header name, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// Writes with minimal quoting: only fields containing a comma, quote or
// newline are quoted.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace dietgraph
