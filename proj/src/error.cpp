#include "pipefuse/error.hpp"

namespace pipefuse {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::non_monotone: return "non-monotone-timestamp";
    case ErrorKind::kind_mismatch: return "mixed-sensor-kind";
    case ErrorKind::numeric: return "numeric-failure";
    case ErrorKind::singular: return "singular-bracket";
    case ErrorKind::degenerate: return "degenerate-denominator";
    case ErrorKind::invalid_graph: return "invalid-graph";
    case ErrorKind::config: return "config-invalid";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> row)
    : std::runtime_error(message), kind_(kind), row_(row) {}

Error Error::with_context(const std::string& context) const {
  return Error(kind_, context + ": " + what(), row_);
}

}  // namespace pipefuse
