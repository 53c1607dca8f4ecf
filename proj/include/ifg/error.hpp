#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ifg {

/// Malformed text input. `line()` is 1-based, 0 when the problem is the file
/// as a whole (e.g. truncated).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ifg
