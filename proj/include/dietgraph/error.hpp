#pragma once

#include <stdexcept>
#include <string>

namespace dietgraph {

// Single exception type for user-facing failures: bad input files, shape
// mismatches, non-finite numerics. The message carries all context
// (file:line for ingestion errors, op name for numeric ones).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dietgraph
