#pragma once

// Small CSV reader/writer: comma separated, double-quote escaping, one
// record per line (no embedded newlines), UTF-8 passed through verbatim.

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phdst/error.hpp"

namespace phdst::csv {

inline void split_line(std::string_view line, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Reads the header row; throws IoError on empty input.
  std::vector<std::string> header() {
    std::vector<std::string> h;
    if (!next(h)) throw IoError("csv: missing header row");
    return h;
  }

  bool next(std::vector<std::string>& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      split_line(line, out);
      return true;
    }
    return false;
  }

  std::size_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  std::size_t line_number_ = 0;
};

inline void write_field(std::ostream& os, std::string_view f) {
  if (f.find_first_of(",\"\n") == std::string_view::npos) {
    os << f;
    return;
  }
  os << '"';
  for (char c : f) {
    if (c == '"') os << '"';
    os << c;
  }
  os << '"';
}

inline void write_row(std::ostream& os, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    write_field(os, fields[i]);
  }
  os << '\n';
}

}  // namespace phdst::csv
