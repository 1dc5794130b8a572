// socnet/log.hpp - warning and progress sinks
#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace socnet {

using LogSink = std::function<void(std::string_view)>;

// Non-fatal conditions (clamped labels, empty window sets, skipped groups).
// Default sink writes to stderr; returns the previously installed sink.
LogSink set_warning_sink(LogSink sink);
void warn(std::string_view message);

// Progress lines from long-running operations. Silent by default.
LogSink set_info_sink(LogSink sink);
void info(std::string_view message);

// Installs a sink for the lifetime of the guard, restoring the old one after.
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(LogSink sink) : previous_(set_warning_sink(std::move(sink))) {}
  ~ScopedWarningSink() { set_warning_sink(std::move(previous_)); }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  LogSink previous_;
};

}  // namespace socnet
