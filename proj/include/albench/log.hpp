#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace albench {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
inline LogSink& log_sink() {
  static LogSink sink = [](LogLevel level, const std::string& msg) {
    std::cerr << (level == LogLevel::warning ? "[albench warning] " : "[albench] ") << msg << '\n';
  };
  return sink;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Replaces the process-wide log sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(detail::log_mutex());
  std::swap(detail::log_sink(), sink);
  return sink;
}

inline void log_message(LogLevel level, const std::string& msg) {
  std::lock_guard lock(detail::log_mutex());
  if (detail::log_sink()) detail::log_sink()(level, msg);
}

inline void log_warning(const std::string& msg) { log_message(LogLevel::warning, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }

}  // namespace albench
