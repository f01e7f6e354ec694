#pragma once

#include <filesystem>
#include <string_view>

namespace aircast::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Verbosity from the AIRCAST_LOG environment variable (error|warn|info|debug),
/// defaulting to warn.
Level threshold();
void set_threshold(Level level);

/// Mirror messages into a file (e.g. a run directory's run.log); empty path disables.
void set_file(const std::filesystem::path& path);

void write(Level level, std::string_view message);
inline void error(std::string_view m) { write(Level::Error, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void debug(std::string_view m) { write(Level::Debug, m); }

} // namespace aircast::log
