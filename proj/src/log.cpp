#include "ehdnas/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace ehdnas {

std::shared_ptr<spdlog::logger> logger() {
  static const auto instance = [] {
    auto log = std::make_shared<spdlog::logger>("ehdnas", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    log->set_pattern("[%H:%M:%S] [%l] %v");
    if (const char* level = std::getenv("EHDNAS_LOG")) log->set_level(spdlog::level::from_str(level));
    else log->set_level(spdlog::level::info);
    return log;
  }();
  return instance;
}

}  // namespace ehdnas
