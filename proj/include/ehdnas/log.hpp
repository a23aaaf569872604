#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace ehdnas {

// Shared stderr logger; stdout is reserved for machine-readable output.
std::shared_ptr<spdlog::logger> logger();

}  // namespace ehdnas
