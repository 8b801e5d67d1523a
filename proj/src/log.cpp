#include "conceptscope/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace cscope {

namespace {

LogLevel from_env() {
    const char* v = std::getenv("CSCOPE_LOG");
    if (!v) return LogLevel::Warn;
    const std::string s(v);
    if (s == "quiet" || s == "0") return LogLevel::Quiet;
    if (s == "error" || s == "1") return LogLevel::Error;
    if (s == "info" || s == "3") return LogLevel::Info;
    if (s == "debug" || s == "4") return LogLevel::Debug;
    return LogLevel::Warn;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

} // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }

void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log(LogLevel level, std::string_view message) {
    if (level == LogLevel::Quiet || static_cast<int>(level) > level_slot().load()) return;
    static std::mutex mu;
    static constexpr const char* names[] = {"", "error", "warn", "info", "debug"};
    std::lock_guard lock(mu);
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

} // namespace cscope
