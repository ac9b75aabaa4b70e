#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pbt/core.hpp"

namespace pbt {

using Json = nlohmann::ordered_json;

/// Throws Error naming the first key of `object` not in `allowed`.
inline void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                                std::string_view context) {
  if (!object.is_object()) throw Error(std::string(context) + ": expected an object");
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw Error(std::string(context) + ": unknown key '" + key + "'");
  }
}

}  // namespace pbt
