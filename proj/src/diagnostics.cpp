#include "mcgcl/diagnostics.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace mcgcl {
namespace {

std::mutex sink_mutex;
WarningSink current_sink;
std::atomic<std::size_t> emitted{0};

}  // namespace

void warn(std::string_view message) {
  emitted.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(sink_mutex);
  if (current_sink) {
    current_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex);
  auto previous = std::move(current_sink);
  current_sink = std::move(sink);
  return previous;
}

std::size_t warning_count() { return emitted.load(std::memory_order_relaxed); }

WarningCapture::WarningCapture() {
  previous_ = set_warning_sink([this](std::string_view message) {
    ++count_;
    log_.append(message);
    log_.push_back('\n');
  });
}

WarningCapture::~WarningCapture() {
  set_warning_sink(std::move(previous_));
}

bool WarningCapture::contains(std::string_view needle) const {
  return log_.find(needle) != std::string::npos;
}

}  // namespace mcgcl
