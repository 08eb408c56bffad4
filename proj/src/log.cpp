#include "lfd/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace lfd {

void init_logging() {
  static bool done = false;
  if (!done) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("lfd"));
    done = true;
  }
  const char* env = std::getenv("LS_LOG");
  const std::string level = env ? env : "warn";
  spdlog::level::level_enum parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") parsed = spdlog::level::warn;
  spdlog::set_level(parsed);
}

}  // namespace lfd
