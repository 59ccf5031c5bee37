#include "commod/log.hpp"

#include <iostream>
#include <mutex>

namespace commod::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current_sink() {
  static Sink sink;
  return sink;
}

thread_local int silence_depth = 0;

}  // namespace

void warn(std::string_view message) {
  if (silence_depth > 0) return;
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

Sink set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  Sink previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

ScopedCapture::ScopedCapture() {
  previous_ = set_sink([this](std::string_view m) { messages_.emplace_back(m); });
}

ScopedCapture::~ScopedCapture() { set_sink(std::move(previous_)); }

ScopedSilence::ScopedSilence() { ++silence_depth; }
ScopedSilence::~ScopedSilence() { --silence_depth; }

bool ScopedCapture::contains(std::string_view needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace commod::log
