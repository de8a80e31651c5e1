#pragma once

#include <stdexcept>
#include <string>

namespace jplan {

enum class Errc {
  out_of_range,
  degenerate_horizon,
  conditioning,
  ordering,
  lookup,
  generation_failure,
  planning_failure,
  encoding_refused,
  decoding,
  validation,
  unsupported_scenario,
  negotiation_failure,
  comparison,
  parse,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::out_of_range: return "out_of_range";
    case Errc::degenerate_horizon: return "degenerate_horizon";
    case Errc::conditioning: return "conditioning";
    case Errc::ordering: return "ordering";
    case Errc::lookup: return "lookup";
    case Errc::generation_failure: return "generation_failure";
    case Errc::planning_failure: return "planning_failure";
    case Errc::encoding_refused: return "encoding_refused";
    case Errc::decoding: return "decoding";
    case Errc::validation: return "validation";
    case Errc::unsupported_scenario: return "unsupported_scenario";
    case Errc::negotiation_failure: return "negotiation_failure";
    case Errc::comparison: return "comparison";
    case Errc::parse: return "parse";
  }
  return "unknown";
}

/// Library-wide exception. The code identifies the failure class so callers
/// (notably the CLI) can map it onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace jplan
