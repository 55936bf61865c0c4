#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "co2hm/inference.hpp"

namespace co2hm::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

// Matrix container: 8-byte magic "CO2HMMAT", uint32 version, uint32 reserved,
// uint64 rows, uint64 cols, then rows*cols little-endian doubles, column-major.
inline constexpr char kMatrixMagic[8] = {'C', 'O', '2', 'H', 'M', 'M', 'A', 'T'};
inline constexpr std::uint32_t kMatrixVersion = 1;

void write_matrix(const fs::path& path, const Eigen::MatrixXd& M);
Eigen::MatrixXd read_matrix(const fs::path& path);

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// Writes to a temporary sibling and renames, so readers never see partial files.
void write_text_atomic(const fs::path& path, const std::string& text);

/// Throws IoError naming the path when it does not exist.
void require(const fs::path& path);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

// Chain records -------------------------------------------------------------------

/// Fixed-width little-endian record: int64 iteration, 7 doubles (sampling
/// coordinates), double loglik, uint8 accepted_latent, uint8 accepted_meta.
inline constexpr std::size_t kChainRecordBytes = 8 + 8 * Metaparameters::size + 8 + 2;

class ChainRecordWriter {
 public:
  /// append = true keeps existing records.
  ChainRecordWriter(const fs::path& path, bool append);
  void write(const ChainRecord& r);
  void flush() { out_.flush(); }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::vector<ChainRecord> read_chain_records(const fs::path& path);

// CSV ----------------------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long>(v); }
  CsvWriter& operator<<(const std::string& s);
  void end_row();

 private:
  void sep();
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace co2hm::io
