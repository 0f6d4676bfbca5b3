#include "gcahng/log.hpp"

#include "gcahng/error.hpp"

#include <atomic>
#include <mutex>

namespace gcahng::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;
constexpr const char* kNames[] = {"debug", "info", "warn", "error", "off"};
}  // namespace

Level level() { return g_level.load(); }
void set_level(Level lvl) { g_level.store(lvl); }

Level parse_level(std::string_view name) {
  for (int k = 0; k < 5; ++k)
    if (name == kNames[k]) return static_cast<Level>(k);
  throw ConfigError("unknown log level '" + std::string(name) + "'");
}

void write(Level lvl, std::string_view message) {
  if (lvl < g_level.load() || lvl == Level::off) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << kNames[static_cast<int>(lvl)] << "] " << message << '\n';
}

}  // namespace gcahng::log
