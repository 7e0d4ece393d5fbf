#pragma once

#include <iostream>
#include <mutex>
#include <string>

namespace fedids::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

inline Level& threshold() {
  static Level level = Level::Warn;
  return level;
}

inline void set_level(Level l) { threshold() = l; }

inline void emit(Level l, const char* tag, const std::string& msg) {
  if (static_cast<int>(l) > static_cast<int>(threshold())) return;
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void warn(const std::string& msg) { emit(Level::Warn, "warn", msg); }
inline void info(const std::string& msg) { emit(Level::Info, "info", msg); }
inline void debug(const std::string& msg) { emit(Level::Debug, "debug", msg); }

}  // namespace fedids::log
