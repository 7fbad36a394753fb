#ifndef MMDFORGE_ERRORS_HPP
#define MMDFORGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mmdforge {

// Shape disagreement between operands (reported with the offending op).
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// A primitive produced NaN/Inf from finite inputs, or an input was non-finite.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A precondition of an operation was violated by the caller.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed text input (config file or CSV); message carries file/line/key.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmdforge

#endif  // MMDFORGE_ERRORS_HPP
