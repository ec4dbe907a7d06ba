#include "egoflow/config.hpp"

#include <cstdio>

namespace egoflow {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::string unknown;
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (auto name : known) ok |= (name == k);
    if (!ok) unknown += (unknown.empty() ? "" : ", ") + (where.empty() ? k : where + "." + k);
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string config_fingerprint(const nlohmann::json& j) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace egoflow
