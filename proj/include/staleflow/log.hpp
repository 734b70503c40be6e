// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace staleflow {

// Log level comes from STALEFLOW_LOG: error|warn|info|debug (default warn).
enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("STALEFLOW_LOG");
    if (!env) return LogLevel::Warn;
    std::string s(env);
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
  if (int(lvl) > int(log_level())) return;
  std::lock_guard<std::mutex> lock(log_mutex());
  std::fprintf(stderr, "[%s] ", tag);
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
}

#define SF_LOG_ERROR(...) ::staleflow::log_at(::staleflow::LogLevel::Error, "error", __VA_ARGS__)
#define SF_LOG_WARN(...) ::staleflow::log_at(::staleflow::LogLevel::Warn, "warn", __VA_ARGS__)
#define SF_LOG_INFO(...) ::staleflow::log_at(::staleflow::LogLevel::Info, "info", __VA_ARGS__)
#define SF_LOG_DEBUG(...) ::staleflow::log_at(::staleflow::LogLevel::Debug, "debug", __VA_ARGS__)

}  // namespace staleflow
