#include "qti/log.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace qti::log {

namespace {
std::mutex g_mutex;
Sink g_sink = [](std::string_view m) { std::clog << "warning: " << m << '\n'; };
} // namespace

Sink set_warning_sink(Sink sink) {
  std::lock_guard const lock(g_mutex);
  Sink previous = std::move(g_sink);
  g_sink = std::move(sink);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard const lock(g_mutex);
  if (g_sink) { g_sink(message); }
}

} // namespace qti::log
