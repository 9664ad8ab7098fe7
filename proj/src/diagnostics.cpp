#include "evsched/errors.hpp"

#include <iostream>
#include <mutex>

namespace evsched {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

DiagnosticSink& current_sink() {
  static DiagnosticSink sink = [](std::string_view msg) { std::cerr << "evsched: " << msg << '\n'; };
  return sink;
}

}  // namespace

DiagnosticSink set_diagnostic_sink(DiagnosticSink sink) {
  std::lock_guard lock(sink_mutex());
  DiagnosticSink previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

void diagnostic(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) current_sink()(message);
}

}  // namespace evsched
