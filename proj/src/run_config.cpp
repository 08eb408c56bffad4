#include "lfd/run_config.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "lfd/error.hpp"

namespace lfd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bool is_string(const std::string& raw) { return raw.size() >= 2 && raw.front() == '"' && raw.back() == '"'; }

std::string unquote(const std::string& raw, const std::string& key) {
  if (!is_string(raw)) raise(ErrorCode::ParseError, "config key " + key + " is not a string");
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
    out += raw[i];
  }
  return out;
}

std::optional<double> parse_number(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return v;
}

// Splits a flat array literal into raw element texts.
std::vector<std::string> split_array(const std::string& raw, const std::string& key) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') raise(ErrorCode::ParseError, "config key " + key + " is not an array");
  std::vector<std::string> out;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '"' && (i == 0 || raw[i - 1] != '\\')) in_string = !in_string;
    if (c == ',' && !in_string) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

bool valid_value(const std::string& raw) {
  if (raw.empty()) return false;
  if (is_string(raw) || raw == "true" || raw == "false" || parse_number(raw)) return true;
  if (raw.front() == '[' && raw.back() == ']') {
    for (const auto& e : split_array(raw, "")) {
      if (!(is_string(e) || parse_number(e) || e == "true" || e == "false")) return false;
    }
    return true;
  }
  return false;
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) raise(ErrorCode::ParseError, where + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) raise(ErrorCode::ParseError, where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string raw = trim(t.substr(eq + 1));
    if (key.empty() || !valid_value(raw)) raise(ErrorCode::ParseError, where + ": bad value for " + key);
    cfg.values_[section.empty() ? key : section + "." + key] = raw;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set_raw(const std::string& key, const std::string& raw) {
  if (!valid_value(raw)) raise(ErrorCode::ParseError, "bad value for " + key + ": " + raw);
  values_[key] = raw;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = quote(value); }
void RunConfig::set(const std::string& key, double value) { values_[key] = format_double(value); }
void RunConfig::set(const std::string& key, long long value) { values_[key] = std::to_string(value); }
void RunConfig::set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) raise(ErrorCode::ParseError, "override must be key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string raw = trim(assignment.substr(eq + 1));
  if (valid_value(raw)) {
    values_[key] = raw;
  } else {
    set(key, raw);
  }
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) {
  if (!has(key)) set(key, fallback);
  return unquote(values_.at(key), key);
}

double RunConfig::get_double(const std::string& key, double fallback) {
  if (!has(key)) set(key, fallback);
  const auto v = parse_number(values_.at(key));
  if (!v) raise(ErrorCode::ParseError, "config key " + key + " is not a number");
  return *v;
}

long long RunConfig::get_int(const std::string& key, long long fallback) {
  if (!has(key)) set(key, fallback);
  const std::string& raw = values_.at(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) raise(ErrorCode::ParseError, "config key " + key + " is not an integer");
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) set(key, fallback);
  const std::string& raw = values_.at(key);
  if (raw == "true") return true;
  if (raw == "false") return false;
  raise(ErrorCode::ParseError, "config key " + key + " is not a boolean");
}

std::vector<double> RunConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) {
  if (!has(key)) {
    std::string raw = "[";
    for (std::size_t i = 0; i < fallback.size(); ++i) raw += (i ? ", " : "") + format_double(fallback[i]);
    values_[key] = raw + "]";
  }
  std::vector<double> out;
  for (const auto& e : split_array(values_.at(key), key)) {
    const auto v = parse_number(e);
    if (!v) raise(ErrorCode::ParseError, "config key " + key + " holds a non-number");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key, const std::vector<std::string>& fallback) {
  if (!has(key)) {
    std::string raw = "[";
    for (std::size_t i = 0; i < fallback.size(); ++i) raw += (i ? ", " : "") + quote(fallback[i]);
    values_[key] = raw + "]";
  }
  std::vector<std::string> out;
  for (const auto& e : split_array(values_.at(key), key)) out.push_back(unquote(e, key));
  return out;
}

std::string RunConfig::dump() const {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [key, raw] : values_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      sections[""].emplace_back(key, raw);
    } else {
      sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), raw);
    }
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, entries] : sections) {
    if (!name.empty()) out << (first ? "" : "\n") << "[" << name << "]\n";
    for (const auto& [k, raw] : entries) out << k << " = " << raw << "\n";
    first = false;
  }
  return out.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << dump();
}

}  // namespace lfd
