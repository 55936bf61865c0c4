#include "co2hm/io.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>

namespace co2hm::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const fs::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated file: " + path.string());
  return v;
}

fs::path temp_sibling(const fs::path& path) {
  return path.parent_path() / (path.filename().string() + ".tmp");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

}  // namespace

void write_matrix(const fs::path& path, const Eigen::MatrixXd& M) {
  ensure_parent(path);
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(kMatrixMagic, sizeof(kMatrixMagic));
    put<std::uint32_t>(os, kMatrixVersion);
    put<std::uint32_t>(os, 0);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(M.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(M.cols()));
    os.write(reinterpret_cast<const char*>(M.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(M.size())));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  require(path);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMatrixMagic, sizeof(magic)) != 0)
    throw IoError("not a matrix container: " + path.string());
  const auto version = get<std::uint32_t>(is, path);
  if (version != kMatrixVersion)
    throw IoError("unsupported container version " + std::to_string(version) + ": " + path.string());
  get<std::uint32_t>(is, path);
  const auto rows = get<std::uint64_t>(is, path);
  const auto cols = get<std::uint64_t>(is, path);
  constexpr std::uint64_t limit = std::numeric_limits<std::uint32_t>::max();
  if (rows > limit || cols > limit) throw IoError("implausible matrix shape in " + path.string());
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const auto bytes = static_cast<std::streamsize>(sizeof(double) * rows * cols);
  if (!is.read(reinterpret_cast<char*>(M.data()), bytes)) throw IoError("truncated file: " + path.string());
  return M;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << text;
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  require(path);
  std::ifstream is(path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void require(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input: " + path.string());
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Chain records -------------------------------------------------------------------

ChainRecordWriter::ChainRecordWriter(const fs::path& path, bool append) : path_(path) {
  ensure_parent(path);
  if (append && fs::exists(path)) {
    // drop a torn trailing record left by an interrupted run
    const auto size = fs::file_size(path);
    if (size % kChainRecordBytes != 0) fs::resize_file(path, size - size % kChainRecordBytes);
  }
  out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out_) throw IoError("cannot write " + path.string());
}

void ChainRecordWriter::write(const ChainRecord& r) {
  put<std::int64_t>(out_, r.iteration);
  for (double v : r.theta) put<double>(out_, v);
  put<double>(out_, r.loglik);
  put<std::uint8_t>(out_, r.accepted_latent ? 1 : 0);
  put<std::uint8_t>(out_, r.accepted_meta ? 1 : 0);
  if (!out_) throw IoError("write failed: " + path_.string());
}

std::vector<ChainRecord> read_chain_records(const fs::path& path) {
  require(path);
  std::ifstream is(path, std::ios::binary);
  const auto n = fs::file_size(path) / kChainRecordBytes;
  std::vector<ChainRecord> out(n);
  for (auto& r : out) {
    r.iteration = get<std::int64_t>(is, path);
    for (double& v : r.theta) v = get<double>(is, path);
    r.loglik = get<double>(is, path);
    r.accepted_latent = get<std::uint8_t>(is, path) != 0;
    r.accepted_meta = get<std::uint8_t>(is, path) != 0;
  }
  return out;
}

// CSV ----------------------------------------------------------------------------

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header) {
  ensure_parent(path);
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("cannot write " + path.string());
  out_ << std::setprecision(10);
  for (const auto& h : header) *this << h;
  end_row();
}

void CsvWriter::sep() {
  if (!first_) out_ << ',';
  first_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::operator<<(long v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
  sep();
  if (s.find_first_of(",\"\n") == std::string::npos) {
    out_ << s;
  } else {
    out_ << '"';
    for (char c : s) out_ << (c == '"' ? "\"\"" : std::string(1, c));
    out_ << '"';
  }
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

}  // namespace co2hm::io
