#include "nqp/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace nqp {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("NQP_LOG");
    if (env == nullptr) return LogLevel::info;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::error ? "error" : (level == LogLevel::info ? "info" : "debug");
  std::fprintf(stderr, "[nqp %s] %s\n", tag, msg.c_str());
}

}  // namespace nqp
