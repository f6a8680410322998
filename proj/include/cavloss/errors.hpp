#pragma once

#include <stdexcept>
#include <string>

namespace cavloss {

// Thrown when an algorithm fails numerically (singular system, no
// convergence, insufficient SNR). Input validation problems use
// std::invalid_argument / std::domain_error instead; the CLI maps the
// two families to distinct exit codes.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cavloss
