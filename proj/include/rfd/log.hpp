#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace rfd {

enum class LogLevel { kOff = 0, kInfo = 1, kDebug = 2 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* s = std::getenv("RFD_LOG");
    if (!s || std::strcmp(s, "off") == 0) return LogLevel::kOff;
    if (std::strcmp(s, "debug") == 0) return LogLevel::kDebug;
    if (std::strcmp(s, "info") == 0) return LogLevel::kInfo;
    return LogLevel::kOff;
  }();
  return level;
}

template <typename... Args>
void log_info(const char* fmt, Args... args) {
  if (log_level() >= LogLevel::kInfo) {
    std::fprintf(stderr, "[rfd] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void log_debug(const char* fmt, Args... args) {
  if (log_level() >= LogLevel::kDebug) {
    std::fprintf(stderr, "[rfd:debug] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

}  // namespace rfd
