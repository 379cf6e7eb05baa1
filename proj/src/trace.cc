#include "geotxn/trace.h"

#include <sstream>
#include <stdexcept>

namespace geotxn {

void Trace::write_csv(std::ostream& out) const {
  out << "time_us,tid,site,event\n";
  for (const auto& e : events_) {
    out << e.time << ',' << e.tid << ',' << e.site << ',' << e.event << '\n';
  }
}

std::vector<TraceEvent> Trace::read_csv(std::istream& in) {
  std::vector<TraceEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("time_us", 0) == 0) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    std::size_t c3 = c2 == std::string::npos ? c2 : line.find(',', c2 + 1);
    if (c3 == std::string::npos) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected 4 fields");
    }
    try {
      TraceEvent e;
      e.time = std::stoll(line.substr(0, c1));
      e.tid = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
      e.site = std::stoi(line.substr(c2 + 1, c3 - c2 - 1));
      e.event = line.substr(c3 + 1);
      out.push_back(std::move(e));
    } catch (const std::logic_error&) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

}  // namespace geotxn
