#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace commod::log {

using Sink = std::function<void(std::string_view)>;

// Warnings go to stderr unless a sink is installed. Thread-safe.
void warn(std::string_view message);

// Installs a sink and returns the previous one. An empty sink restores stderr.
Sink set_sink(Sink sink);

// Captures warnings for the lifetime of the object (used by tests).
class ScopedCapture {
 public:
  ScopedCapture();
  ~ScopedCapture();
  ScopedCapture(const ScopedCapture&) = delete;
  ScopedCapture& operator=(const ScopedCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const;

 private:
  std::vector<std::string> messages_;
  Sink previous_;
};

// Drops warnings raised on the current thread while alive.
class ScopedSilence {
 public:
  ScopedSilence();
  ~ScopedSilence();
  ScopedSilence(const ScopedSilence&) = delete;
  ScopedSilence& operator=(const ScopedSilence&) = delete;
};

}  // namespace commod::log
