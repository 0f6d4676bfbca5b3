#pragma once

#include <iostream>
#include <string>
#include <string_view>

namespace gcahng::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

Level level();
void set_level(Level lvl);
/// Parses "debug", "info", "warn", "error" or "off".
Level parse_level(std::string_view name);

void write(Level lvl, std::string_view message);

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

}  // namespace gcahng::log
