#include <fstream>
#include <sstream>

#include "dietgraph/csv.hpp"
#include "dietgraph/error.hpp"

namespace dietgraph {

namespace {

std::vector<std::string> parse_line(const std::string& line,
                                    const std::string& path, int lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i <= n) {
    if (i == n) {
      if (quoted)
        throw Error(path + ":" + std::to_string(lineno) +
                    ": unterminated quoted field");
      fields.push_back(cur);
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && line[i + 1] == '"') {
          cur += '"';
          i += 2;
        } else {
          quoted = false;
          ++i;
        }
      } else {
        cur += c;
        ++i;
      }
    } else if (c == '"') {
      if (!cur.empty())
        throw Error(path + ":" + std::to_string(lineno) +
                    ": quote inside unquoted field");
      quoted = true;
      ++i;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      ++i;
    } else {
      cur += c;
      ++i;
    }
  }
  return fields;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open file");
  CsvTable t;
  t.path = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = parse_line(line, path, lineno);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(t.header.size()) + " fields, got " +
                  std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_of.push_back(lineno);
  }
  if (t.header.empty()) throw Error(path + ": missing header row");
  return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (i) out << ',';
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char c : f) {
          if (c == '"') out << "\"\"";
          else out << c;
        }
        out << '"';
      } else {
        out << f;
      }
    }
    out << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  if (!out) throw Error(path + ": write failed");
}

}  // namespace dietgraph
