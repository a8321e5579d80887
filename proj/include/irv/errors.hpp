#ifndef IRV_ERRORS_HPP
#define IRV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace irv {

// Numeric input outside an operation's mathematical domain.
class domain_error : public std::invalid_argument {
 public:
  explicit domain_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Model parameters violate a documented admissibility constraint.
class admissibility_error : public std::invalid_argument {
 public:
  explicit admissibility_error(const std::string& msg)
      : std::invalid_argument(msg) {}
};

// A model evaluation hit a degenerate state (e.g. vanishing volatility).
class singular_model_error : public std::runtime_error {
 public:
  explicit singular_model_error(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Malformed or inconsistent run configuration (CLI layer).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace irv

#endif  // IRV_ERRORS_HPP
