#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace duostream {

// INI-style key=value configuration. '#' and ';' start comments, sections in
// [brackets]; keys outside any section land in the "" section. Lookups throw
// ConfigError naming the missing section.key so the CLI can surface it.
class IniFile {
 public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  int64_t get_int(const std::string& section, const std::string& key) const;
  int64_t get_int_or(const std::string& section, const std::string& key,
                     int64_t fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const;
  std::vector<int> get_int_list(const std::string& section,
                                const std::string& key) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);

  // Deterministic flat view ("section.key" -> value), for manifests.
  std::map<std::string, std::string> flatten() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace duostream
