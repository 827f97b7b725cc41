#pragma once

#include <stdexcept>
#include <string>

namespace fussl {

// File / dataset / checkpoint problems: bad magic, truncation, label ranges.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: non-positive-definite pivots, non-finite values.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration keys or values.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fussl
