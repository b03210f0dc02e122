#include "emomusic/util/json.hpp"

#include <algorithm>

namespace emomusic::util {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::ConfigError, std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace emomusic::util
