#include "splitwire/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace splitwire {

void init_logging() {
  auto logger = spdlog::stderr_color_mt("splitwire");
  spdlog::set_default_logger(logger);
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("SPLITWIRE_LOG")) {
    const auto parsed = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept an explicit "off".
    if (parsed != spdlog::level::off || std::string(env) == "off") level = parsed;
  }
  spdlog::set_level(level);
}

}  // namespace splitwire
