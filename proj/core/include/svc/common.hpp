#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace svc {

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are little-endian; big-endian hosts are unsupported");

// Error raised by all modules. `code` is a stable machine-readable tag,
// `what()` carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, const std::string& code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace svc
