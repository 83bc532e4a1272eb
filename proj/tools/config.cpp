#include "config.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nkcli {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  for (char c : s + ",") {
    if (c == ',') {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
      tok.clear();
    } else {
      tok += c;
    }
  }
  return out;
}

std::uint64_t parse_bytes(const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || errno != 0 || v <= 0) throw ConfigError("bad byte count '" + s + "'");
  std::string unit = trim(end);
  double mult = 1.0;
  if (unit == "K" || unit == "KiB") mult = 1024.0;
  else if (unit == "M" || unit == "MiB") mult = 1024.0 * 1024.0;
  else if (unit == "G" || unit == "GiB") mult = 1024.0 * 1024.0 * 1024.0;
  else if (!unit.empty()) throw ConfigError("bad byte unit '" + unit + "'");
  return static_cast<std::uint64_t>(v * mult);
}

void Section::fail(const std::string& key, const std::string& msg) const {
  auto it = entries.find(key);
  const int ln = it != entries.end() ? it->second.line : line;
  throw ConfigError("line " + std::to_string(ln) + ": " + key + ": " + msg);
}

std::string Section::str(const std::string& key, const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second.value;
}

long Section::integer(const std::string& key, long fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  char* end = nullptr;
  const long v = std::strtol(it->second.value.c_str(), &end, 10);
  if (end == it->second.value.c_str() || *end != '\0') fail(key, "expected an integer, got '" + it->second.value + "'");
  return v;
}

double Section::real(const std::string& key, double fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const std::string& s = it->second.value;
  const auto slash = s.find('/');
  char* end = nullptr;
  if (slash != std::string::npos) {
    const double a = std::strtod(s.substr(0, slash).c_str(), &end);
    const double b = std::strtod(s.substr(slash + 1).c_str(), nullptr);
    if (b == 0.0) fail(key, "zero denominator");
    return a / b;
  }
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') fail(key, "expected a number, got '" + s + "'");
  return v;
}

bool Section::boolean(const std::string& key, bool fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const std::string& s = it->second.value;
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  fail(key, "expected true or false, got '" + s + "'");
}

std::vector<std::string> Section::list(const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : split_list(it->second.value);
}

std::vector<long> Section::int_list(const std::string& key, const std::vector<long>& fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  std::vector<long> out;
  for (const auto& tok : split_list(it->second.value)) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') fail(key, "expected integers, got '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(key, "empty list");
  return out;
}

const Section& Config::experiment() const {
  static const Section empty{"experiment", "", 0, {}};
  for (const auto& s : sections)
    if (s.kind == "experiment") return s;
  return empty;
}

std::vector<const Section*> Config::archs() const {
  std::vector<const Section*> out;
  for (const auto& s : sections)
    if (s.kind == "arch") out.push_back(&s);
  return out;
}

Config parse_config(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.source = source;
  std::istringstream in(text);
  std::string raw;
  int ln = 0;
  Section* cur = nullptr;
  auto err = [&](const std::string& msg) { throw ConfigError(source + ": line " + std::to_string(ln) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++ln;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') err("unterminated section header");
      std::istringstream hs(line.substr(1, line.size() - 2));
      Section s;
      s.line = ln;
      hs >> s.kind >> s.name;
      std::string extra;
      if (hs >> extra) err("section header has too many words");
      if (s.kind == "arch") {
        if (s.name.empty()) err("[arch NAME] needs a name");
        for (const auto& o : cfg.sections)
          if (o.kind == "arch" && o.name == s.name) err("duplicate architecture '" + s.name + "'");
      } else if (s.kind == "experiment") {
        if (!s.name.empty()) err("[experiment] takes no name");
        for (const auto& o : cfg.sections)
          if (o.kind == "experiment") err("duplicate [experiment] section");
      } else {
        err("unknown section '" + s.kind + "' (expected experiment or arch)");
      }
      cfg.sections.push_back(std::move(s));
      cur = &cfg.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) err("expected 'key = value'");
    if (!cur) err("key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) err("empty key");
    if (cur->entries.count(key)) err("duplicate key '" + key + "'");
    cur->entries[key] = Entry{val, ln};
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  Config cfg = parse_config(ss.str(), path);
  cfg.base_dir = std::filesystem::path(path).parent_path().string();
  if (cfg.base_dir.empty()) cfg.base_dir = ".";
  return cfg;
}

const char* default_config_text() {
  return R"(# Built-in defaults: the three architectures of the index table at p = 4.
[experiment]
p = 4
kernel = ntk
dual = gaussian:1.0
modes = Y1, Y2, Y3, Y4, Y5star, Y5, Y6, Y7

[arch hr_cnn]
family = hr_cnn

[arch mlp]
family = mlp
depth = 4

[arch d_cnn]
family = d_cnn
)";
}

}  // namespace nkcli
