#pragma once

#include "egoflow/common.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>
#include <string_view>

namespace egoflow {

// Throws ConfigError naming every key of `j` outside `known`.
void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& where);

// Reads j[key] into out when present; type errors become ConfigError.
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for " + where + "." + key + ": " + j.at(key).dump());
  }
}

// 64-bit FNV-1a of the canonical (key-sorted) dump, as 16 hex digits.
std::string config_fingerprint(const nlohmann::json& j);

}  // namespace egoflow
