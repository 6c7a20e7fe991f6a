#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

// Diagnostics go to standard error; standard output is reserved for data.
namespace csc::log {

enum class Level { Debug, Info, Warn, Error, Off };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
struct State {
  Level threshold = Level::Info;
  Sink sink;
  std::mutex mutex;
};
inline State& state() {
  static State s;
  return s;
}
}  // namespace detail

inline void set_level(Level level) { detail::state().threshold = level; }
inline Level level() { return detail::state().threshold; }

/// Replaces the stderr writer; pass an empty sink to restore it.
inline void set_sink(Sink sink) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  s.sink = std::move(sink);
}

inline void write(Level level, std::string_view message) {
  auto& s = detail::state();
  if (level < s.threshold) return;
  std::lock_guard lock(s.mutex);
  if (s.sink) {
    s.sink(level, message);
    return;
  }
  static constexpr std::string_view kNames[] = {"debug", "info", "warn", "error"};
  std::cerr << "[csc " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void error(std::string_view m) { write(Level::Error, m); }

}  // namespace csc::log
