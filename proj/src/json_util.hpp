#pragma once

// Strict field access for the JSON documents the library reads. Every problem
// surfaces as a ValidationError naming "<context>.<key>".

#include <algorithm>
#include <initializer_list>
#include <json.hpp>
#include <string>

#include "mia/error.hpp"

namespace mia::detail {

template <typename T>
T field(const nlohmann::json& obj, const char* key, const std::string& context) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(context + "." + key + " is missing or has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                           const std::string& context) {
  if (!obj.is_object()) {
    throw ValidationError(context + " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ValidationError(context + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace mia::detail
