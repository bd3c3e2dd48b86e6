#pragma once

#include <stdexcept>
#include <string>

namespace seqopt {

// Error classes map one-to-one onto CLI exit statuses.
enum class ErrorKind {
  validation,  // malformed problem, rule or config
  domain,      // argument outside the operation's domain (bad symbol, zero-probability history)
  infeasible,  // constraint targets cannot be met
  budget,      // enumeration or memory budget exceeded
  cap_hit,     // evaluation or simulation horizon reached with mass left over
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace seqopt
