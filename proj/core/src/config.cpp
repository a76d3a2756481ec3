#include "duostream/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "duostream/errors.hpp"

namespace duostream {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

IniFile IniFile::parse_string(const std::string& text) {
  IniFile ini;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section at line " +
                          std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      ini.sections_[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at line " +
                        std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    ini.sections_[section][key] = value;
  }
  return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section,
                         const std::string& key) const {
  auto it = sections_.find(section);
  if (it != sections_.end()) {
    auto kt = it->second.find(key);
    if (kt != it->second.end()) return kt->second;
  }
  throw ConfigError("config: missing key " +
                    (section.empty() ? key : section + "." + key));
}

std::string IniFile::get_or(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double IniFile::get_double(const std::string& section,
                           const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + section + "." + key +
                      " is not a number: " + v);
  }
}

double IniFile::get_double_or(const std::string& section,
                              const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int64_t IniFile::get_int(const std::string& section,
                         const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + section + "." + key +
                      " is not an integer: " + v);
  }
}

int64_t IniFile::get_int_or(const std::string& section, const std::string& key,
                            int64_t fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool IniFile::get_bool_or(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: key " + section + "." + key +
                    " is not a boolean: " + v);
}

std::vector<int> IniFile::get_int_list(const std::string& section,
                                       const std::string& key) const {
  const std::string v = get(section, key);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config: key " + section + "." + key +
                        " has a non-integer element: " + item);
    }
  }
  if (out.empty())
    throw ConfigError("config: key " + section + "." + key + " is empty");
  return out;
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
  sections_[section][key] = value;
}

std::map<std::string, std::string> IniFile::flatten() const {
  std::map<std::string, std::string> flat;
  for (const auto& [sec, kv] : sections_) {
    for (const auto& [k, v] : kv)
      flat[sec.empty() ? k : sec + "." + k] = v;
  }
  return flat;
}

}  // namespace duostream
