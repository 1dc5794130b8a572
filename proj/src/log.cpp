#include "socnet/log.hpp"

#include <iostream>
#include <mutex>

namespace socnet {

namespace {

std::mutex g_log_mutex;

LogSink& warning_sink() {
  static LogSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

LogSink& info_sink() {
  static LogSink sink;
  return sink;
}

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(g_log_mutex);
  auto previous = std::move(warning_sink());
  warning_sink() = std::move(sink);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (warning_sink()) warning_sink()(message);
}

LogSink set_info_sink(LogSink sink) {
  std::lock_guard lock(g_log_mutex);
  auto previous = std::move(info_sink());
  info_sink() = std::move(sink);
  return previous;
}

void info(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (info_sink()) info_sink()(message);
}

}  // namespace socnet
