#ifndef EXNER_LOG_H_
#define EXNER_LOG_H_

#include <sstream>
#include <string>

namespace exner {

enum class LogLevel { kQuiet = 0, kWarning = 1, kInfo = 2, kDebug = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Writes one line to stderr when `level` is enabled. Thread-safe.
void log_line(LogLevel level, const std::string& message);

template <typename... Args>
void warn(const Args&... args) {
  if (log_level() < LogLevel::kWarning) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::kWarning, os.str());
}

template <typename... Args>
void info(const Args&... args) {
  if (log_level() < LogLevel::kInfo) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::kInfo, os.str());
}

}  // namespace exner

#endif  // EXNER_LOG_H_
