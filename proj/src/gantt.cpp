#include "pipelab/gantt.hpp"

#include <cstdio>
#include <sstream>

#include "nlohmann/json.hpp"

namespace pipelab {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

const char* fill_color(PassKind kind, std::int32_t stage) {
  const bool odd = stage % 2 == 1;
  switch (kind) {
    case PassKind::Forward: return odd ? "#305496" : "#b3c5e6";
    case PassKind::BackwardFused:
    case PassKind::BackwardInput: return odd ? "#375823" : "#a9d08e";
    case PassKind::BackwardWeight: return odd ? "#7a5195" : "#c4a6d9";
    case PassKind::VocabForward: return "#e6b35a";
    case PassKind::VocabBackward: return "#b3591f";
  }
  return "#808080";
}

nlohmann::ordered_json interval_json(const Schedule& sched,
                                     const Timeline& tl) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t d = 0; d < tl.per_device.size(); ++d) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (const TimelineEntry& te : tl.per_device[d]) {
      const Pass& ps = sched.passes[te.pass];
      row.push_back({{"kind", to_string(ps.kind)},
                     {"microbatch", ps.microbatch},
                     {"slice", ps.slice},
                     {"stage", ps.stage},
                     {"start", te.start},
                     {"end", te.end}});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string gantt_json(const Schedule& sched, const Timeline& tl) {
  nlohmann::ordered_json j;
  j["devices"] = static_cast<int>(tl.per_device.size());
  j["makespan"] = tl.makespan;
  j["rows"] = interval_json(sched, tl);
  nlohmann::ordered_json transfers = nlohmann::ordered_json::array();
  for (const TransferEvent& tr : tl.transfers)
    transfers.push_back({{"src", tr.src},
                         {"dst", tr.dst},
                         {"bytes", tr.bytes},
                         {"start", tr.start},
                         {"end", tr.end},
                         {"tag", tr.tag}});
  j["transfers"] = std::move(transfers);
  return j.dump(1);
}

std::string gantt_svg(const Schedule& sched, const Timeline& tl) {
  const double row_h = 22.0, gap = 4.0, left = 70.0, top = 10.0;
  const double width = 1200.0;
  const double scale = tl.makespan > 0.0 ? (width - left - 10.0) / tl.makespan : 1.0;
  const std::size_t p = tl.per_device.size();
  const double height = top + p * (row_h + gap) + 20.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width)
     << "\" height=\"" << fmt(height) << "\">\n";
  for (std::size_t d = 0; d < p; ++d) {
    double y = top + d * (row_h + gap);
    os << "<text x=\"4\" y=\"" << fmt(y + row_h * 0.7)
       << "\" font-size=\"11\" font-family=\"monospace\">device " << (d + 1)
       << "</text>\n";
    for (const TimelineEntry& te : tl.per_device[d]) {
      const Pass& ps = sched.passes[te.pass];
      double x = left + te.start * scale;
      double w = (te.end - te.start) * scale;
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\""
         << fmt(w) << "\" height=\"" << fmt(row_h) << "\" fill=\""
         << fill_color(ps.kind, ps.stage)
         << "\" stroke=\"#ffffff\" stroke-width=\"0.4\" data-kind=\""
         << to_string(ps.kind) << "\" data-microbatch=\"" << ps.microbatch
         << "\" data-slice=\"" << ps.slice << "\" data-stage=\"" << ps.stage
         << "\" data-start=\"" << fmt(te.start) << "\" data-end=\""
         << fmt(te.end) << "\"><title>" << to_string(ps.kind) << " k"
         << ps.microbatch << ".i" << ps.slice << " s" << ps.stage
         << "</title></rect>\n";
      if (w > 14.0)
        os << "<text x=\"" << fmt(x + 2.0) << "\" y=\"" << fmt(y + row_h * 0.7)
           << "\" font-size=\"9\" font-family=\"monospace\">" << ps.microbatch
           << "." << ps.slice << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace pipelab
