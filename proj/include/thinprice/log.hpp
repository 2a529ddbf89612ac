#pragma once

#include <string>

namespace thinprice::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Global threshold, initialised from the THINPRICE_LOG environment variable
// (error|warn|info|debug or 0..3, default warn).
Level threshold();
void set_threshold(Level level);
void init_from_env();

void write(Level level, const std::string& msg);

inline void error(const std::string& msg) { write(Level::error, msg); }
inline void warn(const std::string& msg) { write(Level::warn, msg); }
inline void info(const std::string& msg) { write(Level::info, msg); }
inline void debug(const std::string& msg) { write(Level::debug, msg); }

}  // namespace thinprice::log
