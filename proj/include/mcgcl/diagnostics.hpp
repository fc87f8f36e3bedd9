#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

namespace mcgcl {

using WarningSink = std::function<void(std::string_view)>;

// Emits a warning through the installed sink (stderr by default).
void warn(std::string_view message);

// Installs a sink and returns the previous one. Passing an empty function restores stderr.
WarningSink set_warning_sink(WarningSink sink);

// Total warnings emitted by this process so far.
std::size_t warning_count();

// Scoped capture, mostly for tests.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::size_t count() const { return count_; }
  bool contains(std::string_view needle) const;

 private:
  WarningSink previous_;
  std::size_t count_ = 0;
  std::string log_;
};

}  // namespace mcgcl
