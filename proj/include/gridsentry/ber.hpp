#pragma once

// Minimal BER: single-octet tags, definite lengths (short form or long form
// with up to four length octets). Offsets in errors are relative to the start
// of the buffer the outermost reader was created on.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridsentry/error.hpp"

namespace gridsentry::ber {

struct Tlv {
  std::uint8_t tag = 0;
  std::span<const std::uint8_t> value;
  std::size_t offset = 0;        // offset of the tag octet
  std::size_t value_offset = 0;  // offset of the first value octet
};

inline constexpr bool is_constructed(std::uint8_t tag) noexcept { return tag & 0x20; }

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  explicit Reader(const Tlv& parent) : data_(parent.value), base_(parent.value_offset) {}

  bool done() const noexcept { return pos_ >= data_.size(); }
  std::size_t offset() const noexcept { return base_ + pos_; }

  Tlv next() {
    Tlv t;
    t.offset = offset();
    if (done()) throw Error(Errc::decode_error, "expected a tag", t.offset);
    t.tag = data_[pos_++];
    if ((t.tag & 0x1F) == 0x1F)
      throw Error(Errc::decode_error, "multi-octet tags are not supported", t.offset);
    if (done()) throw Error(Errc::decode_error, "missing length octet", offset());
    const std::size_t len_at = offset();
    const std::uint8_t first = data_[pos_++];
    std::size_t len = first;
    if (first == 0x80) {
      throw Error(Errc::decode_error, "indefinite length is not supported", len_at);
    } else if (first & 0x80) {
      const std::size_t n = first & 0x7F;
      if (n > 4) throw Error(Errc::decode_error, "length field too long", len_at);
      if (data_.size() - pos_ < n)
        throw Error(Errc::decode_error, "length octets overrun buffer", len_at);
      len = 0;
      for (std::size_t i = 0; i < n; ++i) len = len << 8 | data_[pos_++];
    }
    if (data_.size() - pos_ < len)
      throw Error(Errc::decode_error,
                  "value length " + std::to_string(len) + " overruns buffer", len_at);
    t.value_offset = offset();
    t.value = data_.subspan(pos_, len);
    pos_ += len;
    return t;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
};

/// Unsigned big-endian integer contents. A single leading 0x00 sign octet is
/// accepted so that both BER INTEGER and plain unsigned encodings decode.
inline std::uint32_t decode_unsigned(const Tlv& t, std::string_view field) {
  auto v = t.value;
  if (v.empty())
    throw Error(Errc::decode_error, "empty integer", t.value_offset, std::string(field));
  if (v.size() > 1 && v[0] == 0x00) v = v.subspan(1);
  if (v.size() > 4)
    throw Error(Errc::decode_error, "integer exceeds 32 bits", t.value_offset,
                std::string(field));
  std::uint32_t out = 0;
  for (auto b : v) out = out << 8 | b;
  return out;
}

inline std::string decode_visible_string(const Tlv& t, std::string_view field) {
  std::string s(t.value.begin(), t.value.end());
  for (unsigned char c : s)
    if (c < 0x20 || c > 0x7E)
      throw Error(Errc::decode_error, "non-printable octet in string", t.value_offset,
                  std::string(field));
  return s;
}

inline bool decode_boolean(const Tlv& t) {
  if (t.value.size() != 1)
    throw Error(Errc::decode_error, "boolean must be one octet", t.value_offset);
  return t.value[0] != 0x00;
}

/// Append-only TLV builder. Constructed values are built bottom-up: encode the
/// children into their own Writer, then wrap.
class Writer {
 public:
  void put(std::uint8_t tag, std::span<const std::uint8_t> value) {
    out_.push_back(tag);
    put_length(value.size());
    out_.insert(out_.end(), value.begin(), value.end());
  }

  void put_string(std::uint8_t tag, std::string_view s) {
    put(tag, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }

  /// Minimal BER INTEGER octets for a non-negative value (a 0x00 octet is
  /// prepended when the top bit would otherwise read as a sign).
  void put_unsigned(std::uint8_t tag, std::uint32_t v) {
    std::uint8_t buf[5];
    std::size_t n = 0;
    do {
      buf[4 - n++] = static_cast<std::uint8_t>(v);
      v >>= 8;
    } while (v);
    if (buf[5 - n] & 0x80) buf[4 - n++] = 0x00;
    put(tag, {buf + 5 - n, n});
  }

  void put_fixed16(std::uint8_t tag, std::uint16_t v) {
    const std::uint8_t buf[2] = {static_cast<std::uint8_t>(v >> 8),
                                 static_cast<std::uint8_t>(v)};
    put(tag, buf);
  }

  void put_boolean(std::uint8_t tag, bool b) {
    const std::uint8_t v = b ? 0x01 : 0x00;
    put(tag, {&v, 1});
  }

  void put_constructed(std::uint8_t tag, const Writer& inner) { put(tag, inner.out_); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return out_; }
  std::vector<std::uint8_t> take() && { return std::move(out_); }

 private:
  void put_length(std::size_t len) {
    if (len < 0x80) {
      out_.push_back(static_cast<std::uint8_t>(len));
      return;
    }
    std::uint8_t buf[4];
    std::size_t n = 0;
    while (len) {
      buf[3 - n++] = static_cast<std::uint8_t>(len);
      len >>= 8;
    }
    out_.push_back(static_cast<std::uint8_t>(0x80 | n));
    out_.insert(out_.end(), buf + 4 - n, buf + 4);
  }

  std::vector<std::uint8_t> out_;
};

}  // namespace gridsentry::ber
