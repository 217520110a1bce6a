#pragma once

#include <stdexcept>
#include <string>

namespace qmatch {

// Argument outside the mathematical domain of an operation (k > n, p = 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input: non-finite values, unsorted vectors, parse failures.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qmatch
