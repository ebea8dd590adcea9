#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "slopelab/core.hpp"

namespace slopelab::csv {

inline constexpr std::string_view kDatasetHeader = "subject_id,arm,time_years,egfr";

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

inline int parse_int(std::string_view field, std::size_t line) {
  int v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Reads `subject_id,arm,time_years,egfr` rows (header required, LF or CRLF).
inline std::vector<Measurement> read_measurements(std::istream& in) {
  std::vector<Measurement> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
      if (line != kDatasetHeader)
        throw Error(ErrorCode::ParseError, "expected header '" + std::string(kDatasetHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != 4)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 4 fields");
    rows.push_back(Measurement{std::string(f[0]), parse_int(f[1], lineno), parse_double(f[2], lineno),
                               parse_double(f[3], lineno)});
  }
  if (!header_seen) throw Error(ErrorCode::ParseError, "empty input");
  return rows;
}

inline LongitudinalDataset read_dataset(std::istream& in) { return build_dataset(read_measurements(in)); }

inline void write_dataset(std::ostream& out, const LongitudinalDataset& ds) {
  out << kDatasetHeader << '\n';
  for (const auto& m : ds.measurements())
    out << m.subject_id << ',' << m.arm << ',' << format_double(m.time) << ',' << format_double(m.egfr)
        << '\n';
}

}  // namespace slopelab::csv
