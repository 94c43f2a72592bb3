#include "vsd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace vsd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KvMap parse_kv_text(std::string_view text, const std::string& source) {
  KvMap map;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const size_t end = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, end == std::string_view::npos ? text.size() - pos
                                                       : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    lineno += 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!map.emplace(key, value).second) {
      throw ConfigError(source + ": duplicate key '" + key + "'");
    }
  }
  return map;
}

KvMap parse_kv_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open config file: " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_kv_text(buffer.str(), file.string());
}

KvReader::KvReader(KvMap map, std::string source)
    : map_(std::move(map)), source_(std::move(source)) {}

bool KvReader::has(const std::string& key) const {
  return map_.contains(key);
}

const std::string* KvReader::fetch(const std::string& key) {
  const auto it = map_.find(key);
  if (it == map_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

std::string KvReader::get_string(const std::string& key,
                                 const std::string& def) {
  const std::string* v = fetch(key);
  return v ? *v : def;
}

int KvReader::get_int(const std::string& key, int def) {
  return int(get_long(key, def));
}

long KvReader::get_long(const std::string& key, long def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  try {
    size_t used = 0;
    const long parsed = std::stol(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" +
                      *v + "'");
  }
}

uint64_t KvReader::get_u64(const std::string& key, uint64_t def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  try {
    size_t used = 0;
    const unsigned long long parsed = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not an unsigned "
                      "integer: '" + *v + "'");
  }
}

double KvReader::get_double(const std::string& key, double def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  try {
    size_t used = 0;
    const double parsed = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + *v +
                      "'");
  }
}

bool KvReader::get_bool(const std::string& key, bool def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  std::string low = *v;
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  if (low == "true" || low == "1" || low == "yes" || low == "on") return true;
  if (low == "false" || low == "0" || low == "no" || low == "off") {
    return false;
  }
  throw ConfigError(source_ + ": key '" + key + "' is not a boolean: '" + *v +
                    "'");
}

void KvReader::finish() const {
  std::string unknown;
  for (const auto& [key, value] : map_) {
    if (!consumed_.contains(key)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
  }
  if (!unknown.empty()) {
    throw ConfigError(source_ + ": unknown keys: " + unknown);
  }
}

}  // namespace vsd
