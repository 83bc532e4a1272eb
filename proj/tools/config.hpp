#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace nkcli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Entry {
  std::string value;
  int line = 0;
};

// One "[name]" or "[arch NAME]" block.
struct Section {
  std::string kind;  // "experiment", "arch", ...
  std::string name;  // arch name, empty otherwise
  int line = 0;
  std::map<std::string, Entry> entries;

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  std::string str(const std::string& key, const std::string& fallback) const;
  long integer(const std::string& key, long fallback) const;
  double real(const std::string& key, double fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<long> int_list(const std::string& key, const std::vector<long>& fallback) const;

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;
};

struct Config {
  std::string source = "<builtin>";
  std::string base_dir = ".";  // relative paths resolve here
  std::vector<Section> sections;

  const Section& experiment() const;  // empty section when absent
  std::vector<const Section*> archs() const;
};

// "key = value" lines under "[section]" headers; '#' starts a comment.
Config parse_config(const std::string& text, const std::string& source);
Config load_config(const std::string& path);

// Built-in configuration: the three families of the index table at p = 4.
const char* default_config_text();

std::vector<std::string> split_list(const std::string& s);
std::string trim(const std::string& s);
// "4G", "512M", "1000000" -> bytes.
std::uint64_t parse_bytes(const std::string& s);

}  // namespace nkcli
