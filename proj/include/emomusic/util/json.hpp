#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "emomusic/error.hpp"

namespace emomusic::util {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where);

/// Assigns j[key] to `out` when present; ConfigError on a type mismatch.
template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigError, std::string(where) + "." + key + ": wrong type (" + it->dump() + ")");
  }
}

}  // namespace emomusic::util
