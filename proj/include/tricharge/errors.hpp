#pragma once

#include <stdexcept>
#include <string>

namespace tricharge {

// Invalid or inconsistent input data (files, scenario parameters).
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (mismatched price source,
// infeasible flow vector, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Iterative solver hit its cap without meeting its tolerance.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tricharge
