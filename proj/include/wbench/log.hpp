#pragma once

#include <string_view>

namespace wbench::log {

enum class Level { kDebug, kInfo, kWarn, kError, kQuiet };

void set_level(Level level);
Level level();

// Thread-safe, one line per call, written to stderr.
void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

// Number of warnings emitted since start-up (tests use this to observe
// warning paths without capturing stderr).
unsigned long warning_count();

}  // namespace wbench::log
