#include "report.hpp"

#include <algorithm>
#include <cstdio>

namespace ifgkit {

namespace {

bool numeric(const std::string& s) {
  return !s.empty() && s.find_first_not_of("0123456789.-") == std::string::npos && s != "-";
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

void print_table(std::ostream& os, const std::vector<std::string>& headers,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r.at(c).size());
  }
  auto line = [&](const std::vector<std::string>& cells, bool header) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c > 0) out += "  ";
      out += (!header && numeric(cells[c])) ? pad + cells[c] : cells[c] + pad;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    os << out << '\n';
  };
  line(headers, true);
  std::string rule;
  for (std::size_t c = 0; c < headers.size(); ++c) rule += (c > 0 ? "  " : "") + std::string(width[c], '-');
  os << rule << '\n';
  for (const auto& r : rows) line(r, false);
}

void print_report(std::ostream& os, std::span<const ifg::ApRow> rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({std::string(ifg::class_name(r.cls)), r.bucket, std::string(ifg::recall_mode_name(r.mode)),
                     percent(r.ap)});
  }
  print_table(os, {"class", "bucket", "mode", "AP"}, cells);
}

void print_report(std::ostream& os, std::span<const ifg::AblationRow> rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({std::string(1, r.method), r.tafe ? "yes" : "no", r.pscl ? "yes" : "no", percent(r.ap[0]),
                     percent(r.ap[1]), percent(r.ap[2])});
  }
  print_table(os, {"method", "TAFE", "PSCL", "car AP", "ped AP", "cyc AP"}, cells);
}

}  // namespace ifgkit
