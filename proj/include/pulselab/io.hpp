#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pulselab/pulse.hpp"

namespace pulselab {

// Snapshot layout: one JSON header line, then little-endian float64 data.
// Pulse profiles store [phi1 | phi2]. Field snapshots add the frame tag, the
// time and the mode count, and store u1 then u2 column by column as
// interleaved (re, im) pairs.
void write_pulse_snapshot(const std::filesystem::path& path, const PulseProfile& phi);
PulseProfile read_pulse_snapshot(const std::filesystem::path& path);

void write_field_snapshot(const std::filesystem::path& path, const Field& u, double t);
Field read_field_snapshot(const std::filesystem::path& path, double* t = nullptr);

// Fixed-column CSV with shortest round-trip formatting, written in row order.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);
  void add_row(const std::vector<double>& row);
  size_t rows() const { return data_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> data_;
};

std::string format_double(double x);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const std::string& bytes);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pulselab
