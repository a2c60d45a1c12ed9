#include "heavyball/trace_io.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"

#include <fstream>
#include <map>
#include <string>

namespace hb {

namespace {

UpdateRule parse_rule(const std::string& s) {
  if (s == "full") return UpdateRule::full;
  if (s == "cyclic") return UpdateRule::cyclic;
  if (s == "stochastic") return UpdateRule::stochastic;
  throw ParseError("trace csv: unknown scheme '" + s + "'");
}

}  // namespace

void write_trace_csv(const IterateTrace& trace, std::ostream& out) {
  const auto& m = trace.meta;
  out << "# scheme=" << to_string(m.scheme) << '\n'
      << "# c=" << csv::format(m.c) << '\n'
      << "# L=" << csv::format(m.lipschitz) << '\n'
      << "# block_L=" << csv::format_list(m.block_lipschitz) << '\n'
      << "# blocks=" << m.blocks << '\n'
      << "# schedule=" << m.schedule.describe() << '\n';
  if (!m.block_schedules.empty()) {
    out << "# block_schedules=";
    for (std::size_t i = 0; i < m.block_schedules.size(); ++i)
      out << (i ? "|" : "") << m.block_schedules[i].describe();
    out << '\n';
  }
  if (m.min_value) out << "# min_f=" << csv::format(*m.min_value) << '\n';
  if (m.rsc_constant) out << "# rsc=" << csv::format(*m.rsc_constant) << '\n';
  out << "# seed=" << m.seed << '\n';
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.k << ',' << csv::format(r.f) << ',' << (r.residual ? csv::format(*r.residual) : "")
        << ',' << csv::format_list(r.step_norm_sq) << ',' << csv::format(r.grad_norm) << ','
        << csv::format_list(r.beta) << ',' << csv::format_list(r.gamma) << ','
        << (r.block ? std::to_string(*r.block) : "") << '\n';
  }
}

void write_trace_csv(const IterateTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  write_trace_csv(trace, out);
}

IterateTrace read_trace_csv(std::istream& in) {
  IterateTrace trace;
  std::map<std::string, std::string> meta;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("trace csv: malformed metadata line");
      meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (line == kTraceHeader) {
      header = true;
      break;
    }
    throw ParseError("trace csv: unexpected line before header: " + line);
  }
  if (!header) throw ParseError("trace csv: missing header");

  auto& m = trace.meta;
  try {
    m.scheme = parse_rule(meta.at("scheme"));
    m.c = csv::parse_double(meta.at("c"));
    m.lipschitz = csv::parse_double(meta.at("L"));
    m.block_lipschitz = csv::parse_list(meta.at("block_L"));
    m.blocks = std::stoul(meta.at("blocks"));
    m.schedule = MomentumSchedule::parse(meta.at("schedule"));
    m.seed = std::stoull(meta.at("seed"));
  } catch (const std::out_of_range&) {
    throw ParseError("trace csv: missing required metadata");
  }
  if (auto it = meta.find("block_schedules"); it != meta.end())
    for (const auto& s : csv::split(it->second, '|'))
      m.block_schedules.push_back(MomentumSchedule::parse(s));
  if (auto it = meta.find("min_f"); it != meta.end()) m.min_value = csv::parse_double(it->second);
  if (auto it = meta.find("rsc"); it != meta.end()) m.rsc_constant = csv::parse_double(it->second);

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != 8) throw ParseError("trace csv: expected 8 columns: " + line);
    TraceRecord r;
    r.k = std::stoul(cells[0]);
    r.f = csv::parse_double(cells[1]);
    if (!cells[2].empty()) r.residual = csv::parse_double(cells[2]);
    r.step_norm_sq = csv::parse_list(cells[3]);
    r.grad_norm = csv::parse_double(cells[4]);
    r.beta = csv::parse_list(cells[5]);
    r.gamma = csv::parse_list(cells[6]);
    if (!cells[7].empty()) r.block = std::stoul(cells[7]);
    trace.records.push_back(std::move(r));
  }
  return trace;
}

IterateTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_trace_csv(in);
}

void write_distance_csv(const IterateTrace& trace, std::ostream& out) {
  out << "k,dist_sq\n";
  for (const auto& r : trace.records) {
    if (!r.dist_sq) throw UnsupportedCapability("trace has no argmin distances");
    out << r.k << ',' << csv::format(*r.dist_sq) << '\n';
  }
}

void write_distance_csv(const IterateTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  write_distance_csv(trace, out);
}

void attach_distance_csv(IterateTrace& trace, std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "k,dist_sq")
    throw ParseError("distance csv: expected header 'k,dist_sq'");
  std::size_t j = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != 2) throw ParseError("distance csv: expected 2 cells in '" + line + "'");
    if (j >= trace.records.size()) throw ParseError("distance csv: more rows than trace records");
    const double k = csv::parse_double(cells[0]);
    if (k != static_cast<double>(trace.records[j].k))
      throw ParseError("distance csv: row k = " + cells[0] + " does not match the trace");
    trace.records[j].dist_sq = csv::parse_double(cells[1]);
    ++j;
  }
  if (j != trace.records.size()) throw ParseError("distance csv: fewer rows than trace records");
}

void attach_distance_csv(IterateTrace& trace, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  attach_distance_csv(trace, in);
}

}  // namespace hb
