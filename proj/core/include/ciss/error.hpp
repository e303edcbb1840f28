#pragma once

#include <stdexcept>
#include <string>

namespace ciss {

// Failure category, inspectable by callers that want to branch on the cause.
enum class ErrorKind {
  config,
  shape,
  invalid_sample,
  empty_task,
  empty_dataset,
  stitch_incompatible,
  missing_key,
  numeric,
  io,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

} // namespace ciss

#define CISS_CHECK(cond, kind, msg)                          \
  do {                                                       \
    if (!(cond)) ::ciss::raise(::ciss::ErrorKind::kind, msg); \
  } while (0)
