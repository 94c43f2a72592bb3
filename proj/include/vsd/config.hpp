#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "vsd/errors.hpp"

namespace vsd {

using KvMap = std::map<std::string, std::string, std::less<>>;

// `key=value` lines; blank lines and `#` comments ignored; whitespace around
// keys and values trimmed. Duplicate keys are configuration errors.
KvMap parse_kv_text(std::string_view text, const std::string& source);
KvMap parse_kv_file(const std::filesystem::path& file);

// Typed access over a KvMap that tracks which keys were consumed, so unknown
// keys can be reported instead of silently ignored.
class KvReader {
 public:
  KvReader(KvMap map, std::string source);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def);
  int get_int(const std::string& key, int def);
  long get_long(const std::string& key, long def);
  uint64_t get_u64(const std::string& key, uint64_t def);
  double get_double(const std::string& key, double def);
  bool get_bool(const std::string& key, bool def);

  // Throws ConfigError naming any key that was never consumed.
  void finish() const;
  const std::string& source() const { return source_; }

 private:
  const std::string* fetch(const std::string& key);
  KvMap map_;
  std::set<std::string> consumed_;
  std::string source_;
};

}  // namespace vsd
