#pragma once

// Fixed-schema CSV logs. Numbers go through to_chars (shortest round-trip),
// so output never depends on the process locale.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "priorbench/bench.hpp"
#include "priorbench/train.hpp"

namespace priorbench {

inline constexpr const char* kEpochLogHeader = "epoch,loss,fid,r1,r2,r3,mm_dist,diversity,mmodality";
inline constexpr const char* kParetoHeader = "objective,steps,latency_ms,fid,r1,r2,r3,mm_dist";

struct EpochRow {
  int epoch = 0;
  double loss = 0.0;
  MetricBundle metrics;
};

inline std::string epoch_row_text(int epoch, double loss, const MetricBundle& m) {
  return std::to_string(epoch) + "," + format_double(loss) + "," + format_double(m.fid) + "," +
         format_double(m.r1) + "," + format_double(m.r2) + "," + format_double(m.r3) + "," +
         format_double(m.matching_score) + "," + format_double(m.diversity) + "," +
         format_double(m.multimodality);
}

inline void write_epoch_log(const std::vector<EpochRecord>& epochs, std::ostream& out) {
  out << kEpochLogHeader << '\n';
  for (const auto& e : epochs) out << epoch_row_text(e.epoch, e.loss, e.validation) << '\n';
}

inline void write_pareto_csv(const std::vector<ParetoPoint>& points, std::ostream& out) {
  out << kParetoHeader << '\n';
  for (const auto& p : points) {
    out << to_string(p.objective) << ',' << p.steps << ',' << format_double(p.latency_ms) << ','
        << format_double(p.metrics.fid) << ',' << format_double(p.metrics.r1) << ','
        << format_double(p.metrics.r2) << ',' << format_double(p.metrics.r3) << ','
        << format_double(p.metrics.matching_score) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::vector<std::vector<std::string>> read_csv_rows(std::istream& in, const std::string& header,
                                                           const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw IoError(source + ": unexpected header '" + line + "'");
  const std::size_t width = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) {
      throw IoError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) + " fields");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double csv_number(const std::string& cell, const std::string& source) {
  try {
    return parse_double(cell);
  } catch (const Error&) {
    throw IoError(source + ": bad number '" + cell + "'");
  }
}

}  // namespace detail

inline std::vector<EpochRow> read_epoch_log(std::istream& in, const std::string& source = "<epoch log>") {
  std::vector<EpochRow> out;
  for (const auto& c : detail::read_csv_rows(in, kEpochLogHeader, source)) {
    EpochRow r;
    r.epoch = static_cast<int>(detail::csv_number(c[0], source));
    r.loss = detail::csv_number(c[1], source);
    r.metrics.fid = detail::csv_number(c[2], source);
    r.metrics.r1 = detail::csv_number(c[3], source);
    r.metrics.r2 = detail::csv_number(c[4], source);
    r.metrics.r3 = detail::csv_number(c[5], source);
    r.metrics.matching_score = detail::csv_number(c[6], source);
    r.metrics.diversity = detail::csv_number(c[7], source);
    r.metrics.multimodality = detail::csv_number(c[8], source);
    out.push_back(r);
  }
  return out;
}

inline std::vector<ParetoPoint> read_pareto_csv(std::istream& in, const std::string& source = "<pareto csv>") {
  std::vector<ParetoPoint> out;
  for (const auto& c : detail::read_csv_rows(in, kParetoHeader, source)) {
    ParetoPoint p;
    try {
      p.objective = parse_objective(c[0]);
    } catch (const Error&) {
      throw IoError(source + ": unknown objective '" + c[0] + "'");
    }
    p.steps = static_cast<int>(detail::csv_number(c[1], source));
    p.latency_ms = detail::csv_number(c[2], source);
    p.metrics.fid = detail::csv_number(c[3], source);
    p.metrics.r1 = detail::csv_number(c[4], source);
    p.metrics.r2 = detail::csv_number(c[5], source);
    p.metrics.r3 = detail::csv_number(c[6], source);
    p.metrics.matching_score = detail::csv_number(c[7], source);
    out.push_back(p);
  }
  return out;
}

template <typename Fn>
void write_text_file(const std::string& path, Fn&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  writer(out);
  if (!out) throw IoError("write failed: " + path);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

}  // namespace priorbench
