#pragma once

#include <string_view>

namespace cscope {

enum class LogLevel { Quiet = 0, Error = 1, Warn = 2, Info = 3, Debug = 4 };

/// Level from CSCOPE_LOG (quiet|error|warn|info|debug); defaults to warn.
LogLevel log_level();
void set_log_level(LogLevel level);

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::Info, m); }
inline void log_debug(std::string_view m) { log(LogLevel::Debug, m); }
inline void log_warn(std::string_view m) { log(LogLevel::Warn, m); }

} // namespace cscope
