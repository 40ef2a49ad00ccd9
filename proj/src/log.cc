#include "exner/log.h"

#include <atomic>
#include <iostream>
#include <mutex>

namespace exner {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::kWarning)};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_line(LogLevel level, const std::string& message) {
  static const char* kTags[] = {"", "warning", "info", "debug"};
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace exner
