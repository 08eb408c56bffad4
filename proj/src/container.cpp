#include "lfd/container.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "lfd/error.hpp"

namespace lfd {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'F', 'D', 'M', 'O', 'D', 'E', 'L'};
constexpr char kFeatureMagic[8] = {'L', 'F', 'D', 'F', 'E', 'A', 'T', '1'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f64(std::vector<unsigned char>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

double get_f64(const unsigned char* p) {
  const std::uint64_t bits = get_u64(p);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

void append_matrix(std::vector<unsigned char>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

Eigen::MatrixXd read_matrix(const unsigned char* p, std::uint64_t rows, std::uint64_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = get_f64(p);
      p += 8;
    }
  }
  return m;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ModelContainer::add_section(const std::string& name, const Eigen::MatrixXd& m) { sections_[name] = m; }

void ModelContainer::add_section(const std::string& name, const Eigen::VectorXd& v) {
  sections_[name] = Eigen::MatrixXd(v);
}

const Eigen::MatrixXd& ModelContainer::section(const std::string& name) const {
  const auto it = sections_.find(name);
  if (it == sections_.end()) raise(ErrorCode::ParseError, "model container has no section " + name);
  return it->second;
}

Eigen::VectorXd ModelContainer::vector_section(const std::string& name) const {
  const Eigen::MatrixXd& m = section(name);
  if (m.cols() != 1 && m.rows() != 0) raise(ErrorCode::ParseError, "section " + name + " is not a vector");
  return m.col(0);
}

std::vector<unsigned char> ModelContainer::serialize() const {
  std::vector<unsigned char> data;
  json secs = json::array();
  for (const auto& [name, m] : sections_) {
    const std::size_t offset = data.size();
    append_matrix(data, m);
    const std::size_t bytes = data.size() - offset;
    secs.push_back({{"name", name},
                    {"rows", m.rows()},
                    {"cols", m.cols()},
                    {"offset", offset},
                    {"bytes", bytes},
                    {"crc32", crc32_of(data.data() + offset, bytes)}});
  }
  json h = header;
  h["format_version"] = std::to_string(kContainerMajor) + "." + std::to_string(kContainerMinor);
  h["sections"] = secs;
  const std::string text = h.dump();
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

ModelContainer ModelContainer::deserialize(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    raise(ErrorCode::ParseError, "not a model container");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) raise(ErrorCode::ParseError, "truncated container header");
  json h;
  try {
    h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("container header: ") + e.what());
  }
  if (!h.is_object() || !h.contains("format_version") || !h["format_version"].is_string()) {
    raise(ErrorCode::ParseError, "container header lacks format_version");
  }
  const std::string version = h["format_version"].get<std::string>();
  const auto dot = version.find('.');
  int major = -1;
  try {
    major = std::stoi(version.substr(0, dot));
  } catch (const std::logic_error&) {
    raise(ErrorCode::ParseError, "malformed format_version " + version);
  }
  if (major != kContainerMajor) raise(ErrorCode::VersionMismatch, "unsupported container version " + version);

  ModelContainer c;
  const unsigned char* data = bytes.data() + 16 + header_len;
  const std::uint64_t data_len = bytes.size() - 16 - header_len;
  try {
    for (const auto& s : h.at("sections")) {
      const auto name = s.at("name").get<std::string>();
      const auto rows = s.at("rows").get<std::uint64_t>();
      const auto cols = s.at("cols").get<std::uint64_t>();
      const auto offset = s.at("offset").get<std::uint64_t>();
      const auto len = s.at("bytes").get<std::uint64_t>();
      if (cols != 0 && rows > (UINT64_MAX / 8) / cols) raise(ErrorCode::ParseError, "section " + name + " too large");
      if (len != rows * cols * 8 || offset > data_len || len > data_len - offset) {
        raise(ErrorCode::ParseError, "section " + name + " out of bounds");
      }
      if (crc32_of(data + offset, len) != s.at("crc32").get<std::uint32_t>()) {
        raise(ErrorCode::ChecksumMismatch, "checksum mismatch in section " + name);
      }
      c.sections_[name] = read_matrix(data + offset, rows, cols);
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("container sections: ") + e.what());
  }
  h.erase("sections");
  c.header = std::move(h);
  return c;
}

void ModelContainer::save(const std::filesystem::path& path) const { write_bytes(path, serialize()); }

ModelContainer ModelContainer::load(const std::filesystem::path& path) { return deserialize(read_bytes(path)); }

void save_feature_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& rows, const json& sidecar) {
  std::vector<unsigned char> out(std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_u64(out, static_cast<std::uint64_t>(rows.rows()));
  put_u64(out, static_cast<std::uint64_t>(rows.cols()));
  append_matrix(out, rows);
  write_bytes(path, out);
  std::ofstream side(path.string() + ".json");
  if (!side) raise(ErrorCode::IoError, "cannot write sidecar for " + path.string());
  side << sidecar.dump(1);
}

Eigen::MatrixXd load_feature_matrix(const std::filesystem::path& path, json* sidecar) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0) {
    raise(ErrorCode::ParseError, "not a feature matrix file: " + path.string());
  }
  const std::uint64_t rows = get_u64(bytes.data() + 8);
  const std::uint64_t cols = get_u64(bytes.data() + 16);
  if ((cols != 0 && rows > ((bytes.size() - 24) / 8) / cols) || rows * cols * 8 != bytes.size() - 24) {
    raise(ErrorCode::ParseError, "feature matrix size mismatch in " + path.string());
  }
  if (sidecar) {
    const auto side_bytes = read_bytes(path.string() + ".json");
    try {
      *sidecar = json::parse(side_bytes.begin(), side_bytes.end());
    } catch (const json::exception& e) {
      raise(ErrorCode::ParseError, std::string("feature sidecar: ") + e.what());
    }
  }
  return read_matrix(bytes.data() + 24, rows, cols);
}

}  // namespace lfd
