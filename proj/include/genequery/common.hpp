#pragma once

#include <stdexcept>
#include <string>

namespace gq {

// Error categories shared across modules. The CLI maps them to exit codes:
// argument/config -> 1, shape/state/data/not_found -> 2, numeric -> 3.
enum class errc {
  argument,
  config,
  shape,
  state,
  data,
  not_found,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  errc kind() const noexcept { return kind_; }

 private:
  errc kind_;
};

[[noreturn]] inline void fail(errc kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace gq
