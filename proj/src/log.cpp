#include "mia/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace mia::log {

void init_from_env(spdlog::level::level_enum fallback) {
  auto logger = spdlog::get("mia");
  if (!logger) {
    logger = spdlog::stderr_color_mt("mia");
    logger->set_pattern("[%l] %v");
  }
  spdlog::set_default_logger(logger);

  spdlog::level::level_enum level = fallback;
  if (const char* env = std::getenv("MIA_AUDIT_LOG")) {
    const std::string_view value(env);
    if (value == "error") {
      level = spdlog::level::err;
    } else if (value == "info") {
      level = spdlog::level::info;
    } else if (value == "debug") {
      level = spdlog::level::debug;
    }
  }
  spdlog::set_level(level);
}

}  // namespace mia::log
