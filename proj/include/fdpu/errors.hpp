#pragma once

#include <stdexcept>
#include <string>

namespace fdpu {

// Bad user-supplied configuration or input files. CLI maps this to exit 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure inside an operation (no bracket found, degenerate matrix,
// quadrature mass lost, ...). CLI maps this to exit 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdpu
