#include "cbmrul/data/fleet_csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "cbmrul/net/tensor.hpp"

namespace cbmrul::data {

std::string format_double(double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw InputError("cannot format number");
  return std::string(buf, end);
}

std::string fleet_csv_header(const std::vector<std::string>& components) {
  std::string h = "unit,cycle,t";
  for (std::size_t c = 1; c <= kOperatingChannels; ++c) h += ",w" + std::to_string(c);
  for (std::size_t m = 1; m <= kMeasurementChannels; ++m) h += ",x" + std::to_string(m);
  for (const auto& comp : components) h += ",theta_" + comp + "_eff,theta_" + comp + "_flow";
  return h + ",hs";
}

void write_fleet_csv(const Fleet& fleet, std::ostream& out) {
  out << fleet_csv_header(fleet.components) << '\n';
  std::string line;
  for (const auto& unit : fleet.units) {
    for (const auto& cyc : unit.cycles) {
      std::string suffix;
      for (std::size_t j = 0; j < fleet.components.size(); ++j) {
        suffix += ',' + format_double(cyc.theta_eff[j]);
        suffix += ',' + format_double(cyc.theta_flow[j]);
      }
      suffix += ',' + std::to_string(cyc.health_state) + '\n';
      const std::string prefix = std::to_string(unit.unit_id) + ',' + std::to_string(cyc.cycle) + ',';
      for (std::size_t t = 0; t < cyc.seconds(); ++t) {
        const double* row = cyc.row(t);
        line = prefix + std::to_string(t);
        for (std::size_t c = 0; c < kOperatingChannels; ++c) {
          line += ',' + format_double(row[kMeasurementChannels + c]);
        }
        for (std::size_t m = 0; m < kMeasurementChannels; ++m) {
          line += ',' + format_double(row[m]);
        }
        out << line << suffix;
      }
    }
  }
}

void write_fleet_csv(const Fleet& fleet, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_fleet_csv(fleet, out);
  if (!out) throw InputError("failed writing " + path.string());
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s, std::size_t line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("line " + std::to_string(line_no) + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

Fleet read_fleet_csv(std::istream& in, const std::string& fleet_name) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("fleet csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split(line);
  const std::size_t fixed = 3 + kOperatingChannels + kMeasurementChannels;
  if (head.size() < fixed + 1 || (head.size() - fixed - 1) % 2 != 0 || head.back() != "hs") {
    throw InputError("fleet csv: unexpected header layout");
  }
  Fleet fleet;
  fleet.name = fleet_name;
  for (std::size_t i = fixed; i + 1 < head.size(); i += 2) {
    std::string_view col = head[i];
    constexpr std::string_view pre = "theta_", post = "_eff";
    if (col.size() <= pre.size() + post.size() || col.substr(0, pre.size()) != pre ||
        col.substr(col.size() - post.size()) != post) {
      throw InputError("fleet csv: bad theta column '" + std::string(col) + "'");
    }
    fleet.components.emplace_back(col.substr(pre.size(), col.size() - pre.size() - post.size()));
  }
  if (fleet_csv_header(fleet.components) != line) {
    throw InputError("fleet csv: header does not match the canonical schema");
  }
  const std::size_t k = fleet.components.size();

  std::size_t line_no = 1;
  UnitTrajectory* unit = nullptr;
  CycleRecord* cycle = nullptr;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != head.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(head.size()) + " fields, got " + std::to_string(f.size()));
    }
    const int unit_id = parse_int(f[0], line_no);
    const int cycle_id = parse_int(f[1], line_no);
    if (unit == nullptr || unit->unit_id != unit_id) {
      fleet.units.push_back(UnitTrajectory{});
      unit = &fleet.units.back();
      unit->fleet = fleet_name;
      unit->unit_id = unit_id;
      unit->components = fleet.components;
      cycle = nullptr;
    }
    if (cycle == nullptr || cycle->cycle != cycle_id) {
      unit->cycles.push_back(CycleRecord{});
      cycle = &unit->cycles.back();
      cycle->cycle = cycle_id;
      if (static_cast<std::size_t>(cycle_id) != unit->cycles.size()) {
        throw InputError("line " + std::to_string(line_no) + ": cycles must be 1-based and contiguous");
      }
      cycle->theta_eff.resize(k);
      cycle->theta_flow.resize(k);
      for (std::size_t j = 0; j < k; ++j) {
        cycle->theta_eff[j] = parse_double(f[fixed + 2 * j], line_no);
        cycle->theta_flow[j] = parse_double(f[fixed + 2 * j + 1], line_no);
      }
      cycle->health_state = parse_int(f.back(), line_no);
      if (cycle->health_state != 0 && cycle->health_state != 1) {
        throw InputError("line " + std::to_string(line_no) + ": hs must be 0 or 1");
      }
    }
    const std::size_t base = cycle->signals.size();
    cycle->signals.resize(base + kInputChannels);
    for (std::size_t m = 0; m < kMeasurementChannels; ++m) {
      cycle->signals[base + m] = parse_double(f[3 + kOperatingChannels + m], line_no);
    }
    for (std::size_t c = 0; c < kOperatingChannels; ++c) {
      cycle->signals[base + kMeasurementChannels + c] = parse_double(f[3 + c], line_no);
    }
  }
  return fleet;
}

Fleet read_fleet_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open fleet file " + path.string());
  return read_fleet_csv(in, path.stem().string());
}

}  // namespace cbmrul::data
