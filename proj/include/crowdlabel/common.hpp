#pragma once

#include <stdexcept>
#include <string>

namespace crowdlabel {

/// Input violated a structural precondition (shape, range, file format).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation left its mathematical domain: log of a zero entry, degenerate
/// denominator, infeasible enumeration, too little data to fit a slope.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crowdlabel
