#include "ehdnas/parallel.hpp"

#include <cstdlib>
#include <string>

namespace ehdnas {

std::size_t default_worker_count() {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EHDNAS_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap > 0) workers = static_cast<std::size_t>(cap);
    } catch (const std::exception&) {
    }
  }
  return workers;
}

}  // namespace ehdnas
