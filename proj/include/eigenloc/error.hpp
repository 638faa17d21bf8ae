#pragma once

#include <stdexcept>
#include <string>

namespace eigenloc {

// Failure categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
  config,             // invalid parameter or configuration document
  input,              // unreadable or structurally invalid input
  empty_corpus,       // nothing usable survived validation
  insufficient_data,  // too few rows for the requested computation
  infeasible,         // e.g. fewer points than clusters
  contract,           // a precondition on numeric input was violated
  degenerate,         // clustering result unusable for the requested measure
  schema,             // artifact written by an incompatible version
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace eigenloc
