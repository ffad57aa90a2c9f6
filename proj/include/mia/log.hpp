#pragma once

#include <spdlog/spdlog.h>

namespace mia::log {

/// Reads MIA_AUDIT_LOG (error | info | debug) and configures the default
/// stderr logger. Unset or unknown values use `fallback`.
void init_from_env(spdlog::level::level_enum fallback = spdlog::level::info);

using spdlog::debug;
using spdlog::error;
using spdlog::info;
using spdlog::warn;

}  // namespace mia::log
