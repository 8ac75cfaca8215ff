#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace forcetune {

enum class LogLevel { kSilent = 0, kError, kWarn, kInfo, kDebug };

// Verbosity comes from FORCETUNE_LOG (silent|error|warn|info|debug); default info.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FORCETUNE_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    std::string_view v(env);
    if (v == "silent") return LogLevel::kSilent;
    if (v == "error") return LogLevel::kError;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

inline void log_message(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mutex;
  const char* tag = "";
  switch (level) {
    case LogLevel::kError: tag = "error"; break;
    case LogLevel::kWarn: tag = "warn"; break;
    case LogLevel::kInfo: tag = "info"; break;
    case LogLevel::kDebug: tag = "debug"; break;
    default: return;
  }
  std::lock_guard<std::mutex> lock(mutex);
  std::cerr << "[" << tag << "] " << message << "\n";
}

inline void log_error(std::string_view m) { log_message(LogLevel::kError, m); }
inline void log_warn(std::string_view m) { log_message(LogLevel::kWarn, m); }
inline void log_info(std::string_view m) { log_message(LogLevel::kInfo, m); }
inline void log_debug(std::string_view m) { log_message(LogLevel::kDebug, m); }

}  // namespace forcetune
