#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pipefuse {

/// Failure categories shared by every module. The CLI maps `config` to exit
/// status 2 and everything else to exit status 3.
enum class ErrorKind {
  parse,
  empty_input,
  non_monotone,
  kind_mismatch,
  numeric,
  singular,
  degenerate,
  invalid_graph,
  config,
  io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> row = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }

  /// 1-based data row for parse errors (the header is row 0).
  std::optional<std::size_t> row() const noexcept { return row_; }

  /// Same error with `context` prepended to the message.
  Error with_context(const std::string& context) const;

 private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace pipefuse
