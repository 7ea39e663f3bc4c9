#include "layerstack/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace layerstack {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_log_mutex;
}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void log_warning(const std::string& message) {
  if (g_quiet) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace layerstack
