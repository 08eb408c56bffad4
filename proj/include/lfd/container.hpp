#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace lfd {

inline constexpr int kContainerMajor = 1;
inline constexpr int kContainerMinor = 0;

/// Versioned model file: magic "LFDMODEL", u64 little-endian header length,
/// JSON header, then named little-endian f64 sections each guarded by CRC32.
class ModelContainer {
 public:
  nlohmann::json header = nlohmann::json::object();

  void add_section(const std::string& name, const Eigen::MatrixXd& m);
  void add_section(const std::string& name, const Eigen::VectorXd& v);
  bool has_section(const std::string& name) const { return sections_.count(name) != 0; }
  /// Throws ParseError when missing.
  const Eigen::MatrixXd& section(const std::string& name) const;
  Eigen::VectorXd vector_section(const std::string& name) const;

  std::vector<unsigned char> serialize() const;
  /// Throws ParseError, VersionMismatch, ChecksumMismatch.
  static ModelContainer deserialize(const std::vector<unsigned char>& bytes);

  void save(const std::filesystem::path& path) const;
  static ModelContainer load(const std::filesystem::path& path);

 private:
  std::map<std::string, Eigen::MatrixXd> sections_;
};

std::uint32_t crc32_of(const unsigned char* data, std::size_t size);

/// Little-endian f64 array file with a JSON sidecar (`path` + ".json").
void save_feature_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& rows,
                         const nlohmann::json& sidecar);
Eigen::MatrixXd load_feature_matrix(const std::filesystem::path& path, nlohmann::json* sidecar = nullptr);

}  // namespace lfd
