#pragma once

#include <stdexcept>
#include <string>

namespace edgeplan {

// Malformed input document (syntax, types, unknown fields).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside planning or estimation.
class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace edgeplan
