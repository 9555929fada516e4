#pragma once

#include <array>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gridsentry/error.hpp"

namespace gridsentry {

inline constexpr std::uint16_t kEthertypeGoose = 0x88B8;
inline constexpr std::uint16_t kEthertypeSv = 0x88BA;
inline constexpr std::uint16_t kEthertypeVlan = 0x8100;

/// Microseconds since the Unix epoch.
using TimeUs = std::int64_t;

enum class Protocol : std::uint8_t { goose, sv };

constexpr std::string_view protocol_name(Protocol p) noexcept {
  return p == Protocol::goose ? "GOOSE" : "SV";
}

inline std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "GOOSE" || s == "goose") return Protocol::goose;
  if (s == "SV" || s == "sv") return Protocol::sv;
  return std::nullopt;
}

constexpr std::uint16_t ethertype_of(Protocol p) noexcept {
  return p == Protocol::goose ? kEthertypeGoose : kEthertypeSv;
}

/// Ground-truth and verdict classes. NORMAL never appears in a verdict.
enum class AnomalyClass : std::uint8_t {
  normal,
  data_injection,
  dos,
  system_problem,
  replay,
};

constexpr std::string_view class_name(AnomalyClass c) noexcept {
  switch (c) {
    case AnomalyClass::normal: return "NORMAL";
    case AnomalyClass::data_injection: return "DATA_INJECTION";
    case AnomalyClass::dos: return "DOS";
    case AnomalyClass::system_problem: return "SYSTEM_PROBLEM";
    case AnomalyClass::replay: return "REPLAY";
  }
  return "NORMAL";
}

inline std::optional<AnomalyClass> parse_class(std::string_view s) {
  if (s == "NORMAL") return AnomalyClass::normal;
  if (s == "DATA_INJECTION") return AnomalyClass::data_injection;
  if (s == "DOS") return AnomalyClass::dos;
  if (s == "SYSTEM_PROBLEM") return AnomalyClass::system_problem;
  if (s == "REPLAY") return AnomalyClass::replay;
  return std::nullopt;
}

constexpr bool is_anomalous(AnomalyClass c) noexcept {
  return c != AnomalyClass::normal;
}

/// A 6-octet IEEE 802 address.
struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  friend auto operator<=>(const MacAddress&, const MacAddress&) = default;

  /// Lowercase colon-hex, e.g. "01:0c:cd:01:00:03".
  std::string to_string() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(17);
    for (std::size_t i = 0; i < octets.size(); ++i) {
      if (i) s.push_back(':');
      s.push_back(kHex[octets[i] >> 4]);
      s.push_back(kHex[octets[i] & 0x0F]);
    }
    return s;
  }

  /// Accepts colon- or dash-separated hex, either case.
  static std::optional<MacAddress> parse(std::string_view s) {
    if (s.size() != 17) return std::nullopt;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    MacAddress m;
    for (std::size_t i = 0; i < 6; ++i) {
      const std::size_t p = i * 3;
      if (i && s[p - 1] != ':' && s[p - 1] != '-') return std::nullopt;
      const int hi = nibble(s[p]);
      const int lo = nibble(s[p + 1]);
      if (hi < 0 || lo < 0) return std::nullopt;
      m.octets[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return m;
  }
};

// The only published address fragments are three octets long (01 00 03 and
// 27 34 31). The destinations are padded with the IEC 61850 multicast
// prefixes; the source gets a locally administered unicast prefix.
inline constexpr MacAddress kDefaultGooseDst{{0x01, 0x0c, 0xcd, 0x01, 0x00, 0x03}};
inline constexpr MacAddress kDefaultGooseSrc{{0x02, 0x00, 0x00, 0x27, 0x34, 0x31}};
inline constexpr MacAddress kDefaultSvDst{{0x01, 0x0c, 0xcd, 0x04, 0x00, 0x40}};
inline constexpr MacAddress kDefaultSvSrc{{0x02, 0x00, 0x00, 0x4d, 0x55, 0x01}};

/// True for printable ASCII (0x20..0x7E), the alphabet accepted for
/// VisibleString fields such as gocbRef and svID.
inline bool is_visible_string(std::string_view s) noexcept {
  for (unsigned char c : s)
    if (c < 0x20 || c > 0x7E) return false;
  return true;
}

/// "HH:MM:SS.ffffff" wall-clock rendering (UTC time of day).
inline std::string format_time_of_day(TimeUs t) {
  constexpr TimeUs kDay = 86'400'000'000LL;
  TimeUs tod = t % kDay;
  if (tod < 0) tod += kDay;
  const auto us = tod % 1'000'000;
  const auto secs = tod / 1'000'000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%06lld",
                static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60),
                static_cast<long long>(secs % 60), static_cast<long long>(us));
  return buf;
}

}  // namespace gridsentry
