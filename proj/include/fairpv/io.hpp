#pragma once

// Small text-format helpers shared by the CSV/JSON writers. Numbers are
// written in shortest round-trip form so reruns are byte-identical and
// reloaded values are bit-exact.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fairpv {

/// Provenance stamped into every output file.
struct Provenance {
  std::string config_hash;  // 16 hex digits
  std::uint64_t seed = 0;
};

/// 64-bit FNV-1a of a string, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

std::string format_double(double v);

/// Comment header line "# config_hash=<h> seed=<s>" (no trailing newline).
std::string provenance_comment(const Provenance& p);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

/// Parsed CSV: '#' lines skipped, first remaining line is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable parse_csv(std::string_view text, const std::string& what);

}  // namespace fairpv
