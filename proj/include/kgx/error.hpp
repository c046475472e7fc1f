#pragma once

#include <stdexcept>
#include <string>

namespace kgx {

enum class ErrorCode {
  invalid_entity,
  invalid_relation,
  invalid_input,
  invalid_selection,
  invalid_query,
  empty_subgraph,
  protected_entity,
  training_diverged,
  no_explanation,
  undefined_metric,
  shape_mismatch,
  parse_error,
  io_error,
  audit_failure,
};

const char* to_string(ErrorCode code);

// Every contracted failure in the library is raised as this type; callers
// switch on code() when they need to tell them apart.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kgx
