#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lfd {

/// TOML-style key/value run configuration: `[section]` headers and
/// `key = value` lines with strings, numbers, booleans and flat arrays.
/// Keys are addressed as "section.key". Getters record their defaults so the
/// resolved configuration lists every value a run used.
class RunConfig {
 public:
  /// Throws ParseError with the line number.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// `raw` is a value in file syntax, e.g. `0.5`, `"text"`, `[1, 2]`.
  void set_raw(const std::string& key, const std::string& raw);
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, bool value);
  /// "key=value" as given on the command line; unquoted text is taken as a string
  /// unless it parses as a number, boolean or array.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  long long get_int(const std::string& key, long long fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback);

  std::string dump() const;
  void save(const std::filesystem::path& path) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;  // raw value text
};

std::string format_double(double v);

}  // namespace lfd
