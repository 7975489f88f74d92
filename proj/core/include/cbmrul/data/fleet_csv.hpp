#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "cbmrul/data/fleet.hpp"

namespace cbmrul::data {

// Canonical per-fleet CSV, one row per second:
//   unit,cycle,t,w1..w4,x1..x14,theta_<comp>_eff,theta_<comp>_flow,...,hs
// UTF-8, '.' decimal separator, LF line endings. Numbers are written in
// shortest round-trip form so re-reading reproduces every double exactly.

std::string fleet_csv_header(const std::vector<std::string>& components);
void write_fleet_csv(const Fleet& fleet, std::ostream& out);
void write_fleet_csv(const Fleet& fleet, const std::filesystem::path& path);

/// Throws InputError with line number on malformed rows.
Fleet read_fleet_csv(std::istream& in, const std::string& fleet_name);
Fleet read_fleet_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace cbmrul::data
