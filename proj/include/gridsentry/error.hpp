#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gridsentry {

/// Failure categories shared by every module. Each maps to one error kind
/// named in the toolkit's contracts; the CLI prints the kebab-case name.
enum class Errc {
  unsupported_format,
  truncated_capture,
  ordering_violation,
  protocol_mismatch,
  decode_error,
  missing_field,
  unsupported_shape,
  invariant_violation,
  schema_error,
  wrong_stream,
  input_order_error,
  unsupported_injection,
  insufficient_carrier,
  unparseable_response,
  window_failed,
  io_error,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::truncated_capture: return "truncated-capture";
    case Errc::ordering_violation: return "ordering-violation";
    case Errc::protocol_mismatch: return "protocol-mismatch";
    case Errc::decode_error: return "decode-error";
    case Errc::missing_field: return "missing-field";
    case Errc::unsupported_shape: return "unsupported-shape";
    case Errc::invariant_violation: return "invariant-violation";
    case Errc::schema_error: return "schema-error";
    case Errc::wrong_stream: return "wrong-stream";
    case Errc::input_order_error: return "input-order-error";
    case Errc::unsupported_injection: return "unsupported-injection";
    case Errc::insufficient_carrier: return "insufficient-carrier";
    case Errc::unparseable_response: return "unparseable-response";
    case Errc::window_failed: return "window-failed";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

/// Structured error. `position` is a byte offset for decode errors, a frame
/// index for capture errors and a 1-based line number for schema errors.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail, std::optional<std::size_t> position = {},
        std::string field = {})
      : std::runtime_error(compose(code, detail, position, field)),
        code_(code),
        detail_(std::move(detail)),
        position_(position),
        field_(std::move(field)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<std::size_t> position() const noexcept { return position_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string compose(Errc code, const std::string& detail,
                             std::optional<std::size_t> position,
                             const std::string& field) {
    std::string s{errc_name(code)};
    if (!field.empty()) s += "(" + field + ")";
    if (position) s += " at " + std::to_string(*position);
    if (!detail.empty()) s += ": " + detail;
    return s;
  }

  Errc code_;
  std::string detail_;
  std::optional<std::size_t> position_;
  std::string field_;
};

}  // namespace gridsentry
