#pragma once

// Classic libpcap capture files (not pcapng) carrying Ethernet II frames.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gridsentry/error.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

/// One captured Ethernet II frame. `payload` is everything after the
/// ethertype.
struct RawFrame {
  TimeUs timestamp = 0;
  MacAddress dst_mac;
  MacAddress src_mac;
  std::uint16_t ethertype = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const RawFrame&, const RawFrame&) = default;
};

namespace pcap {

inline constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
inline constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kRecordHeaderSize = 16;
inline constexpr std::size_t kEthernetHeaderSize = 14;
inline constexpr std::uint32_t kDefaultSnaplen = 65535;

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) noexcept {
  return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

inline std::uint32_t load_le32(const std::uint8_t* p) noexcept {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

inline void store_le32(std::uint8_t* p, std::uint32_t v) noexcept {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

inline void store_le16(std::uint8_t* p, std::uint16_t v) noexcept {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

/// Reads exactly n bytes; returns the count actually read.
inline std::size_t read_some(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

}  // namespace detail

/// Sequential cursor over a capture stream. Header fields are decoded in the
/// byte order announced by the magic number.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {
    std::uint8_t hdr[kGlobalHeaderSize];
    const auto got = detail::read_some(in_, hdr, sizeof hdr);
    if (got < 4) throw Error(Errc::unsupported_format, "file shorter than pcap magic");
    const std::uint32_t raw = detail::load_le32(hdr);
    if (raw == kMagicMicros || raw == kMagicNanos) {
      swapped_ = false;
    } else if (detail::bswap32(raw) == kMagicMicros || detail::bswap32(raw) == kMagicNanos) {
      swapped_ = true;
    } else {
      throw Error(Errc::unsupported_format, "bad pcap magic");
    }
    nanos_ = field(raw) == kMagicNanos;
    if (got < kGlobalHeaderSize)
      throw Error(Errc::truncated_capture, "global header truncated", 0);
    snaplen_ = field(detail::load_le32(hdr + 16));
    const std::uint32_t link = field(detail::load_le32(hdr + 20));
    if (link != kLinkTypeEthernet)
      throw Error(Errc::unsupported_format,
                  "link type " + std::to_string(link) + " is not Ethernet");
  }

  bool nanosecond_resolution() const noexcept { return nanos_; }
  std::uint32_t snaplen() const noexcept { return snaplen_; }

  /// Next frame, or nullopt at a clean end of file.
  std::optional<RawFrame> next() {
    std::uint8_t rec[kRecordHeaderSize];
    const auto got = detail::read_some(in_, rec, sizeof rec);
    if (got == 0) return std::nullopt;
    if (got < sizeof rec)
      throw Error(Errc::truncated_capture, "record header truncated", index_);
    const std::uint32_t ts_sec = field(detail::load_le32(rec));
    const std::uint32_t ts_frac = field(detail::load_le32(rec + 4));
    const std::uint32_t incl_len = field(detail::load_le32(rec + 8));
    if (incl_len > kMaxRecord)
      throw Error(Errc::unsupported_format,
                  "record length " + std::to_string(incl_len) + " exceeds limit", index_);
    buf_.resize(incl_len);
    if (detail::read_some(in_, buf_.data(), incl_len) < incl_len)
      throw Error(Errc::truncated_capture, "record body truncated", index_);
    if (incl_len < kEthernetHeaderSize)
      throw Error(Errc::decode_error, "runt frame shorter than an Ethernet header", index_);

    RawFrame f;
    // Nanosecond captures truncate toward zero to stay monotone.
    const std::int64_t frac_us = nanos_ ? ts_frac / 1000 : ts_frac;
    f.timestamp = static_cast<std::int64_t>(ts_sec) * 1'000'000 + frac_us;
    std::memcpy(f.dst_mac.octets.data(), buf_.data(), 6);
    std::memcpy(f.src_mac.octets.data(), buf_.data() + 6, 6);
    f.ethertype = static_cast<std::uint16_t>(buf_[12] << 8 | buf_[13]);
    f.payload.assign(buf_.begin() + kEthernetHeaderSize, buf_.end());
    ++index_;
    return f;
  }

  std::size_t frames_read() const noexcept { return index_; }

 private:
  // Far beyond any Ethernet frame; guards allocation on corrupt length fields.
  static constexpr std::uint32_t kMaxRecord = 16u << 20;

  std::uint32_t field(std::uint32_t v) const noexcept {
    return swapped_ ? detail::bswap32(v) : v;
  }

  std::istream& in_;
  bool swapped_ = false;
  bool nanos_ = false;
  std::uint32_t snaplen_ = 0;
  std::size_t index_ = 0;
  std::vector<std::uint8_t> buf_;
};

inline std::vector<RawFrame> read(std::istream& in) {
  Reader reader(in);
  std::vector<RawFrame> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

/// Parses an in-memory capture image.
inline std::vector<RawFrame> parse(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read(in);
}

/// Writes a microsecond-resolution little-endian capture.
inline void write(std::span<const RawFrame> frames, std::ostream& out) {
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].timestamp < frames[i - 1].timestamp)
      throw Error(Errc::ordering_violation, "frame timestamps decrease", i);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].timestamp < 0 ||
        frames[i].timestamp / 1'000'000 > std::int64_t{UINT32_MAX})
      throw Error(Errc::invariant_violation, "timestamp outside pcap range", i);
    if (frames[i].payload.size() + kEthernetHeaderSize > kDefaultSnaplen)
      throw Error(Errc::invariant_violation, "frame exceeds snaplen", i);
  }

  std::uint8_t hdr[kGlobalHeaderSize]{};
  detail::store_le32(hdr, kMagicMicros);
  detail::store_le16(hdr + 4, 2);
  detail::store_le16(hdr + 6, 4);
  detail::store_le32(hdr + 16, kDefaultSnaplen);
  detail::store_le32(hdr + 20, kLinkTypeEthernet);
  out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);

  for (const auto& f : frames) {
    const auto len = static_cast<std::uint32_t>(f.payload.size() + kEthernetHeaderSize);
    std::uint8_t rec[kRecordHeaderSize + kEthernetHeaderSize];
    detail::store_le32(rec, static_cast<std::uint32_t>(f.timestamp / 1'000'000));
    detail::store_le32(rec + 4, static_cast<std::uint32_t>(f.timestamp % 1'000'000));
    detail::store_le32(rec + 8, len);
    detail::store_le32(rec + 12, len);
    std::memcpy(rec + 16, f.dst_mac.octets.data(), 6);
    std::memcpy(rec + 22, f.src_mac.octets.data(), 6);
    rec[28] = static_cast<std::uint8_t>(f.ethertype >> 8);
    rec[29] = static_cast<std::uint8_t>(f.ethertype);
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
    out.write(reinterpret_cast<const char*>(f.payload.data()),
              static_cast<std::streamsize>(f.payload.size()));
  }
  if (!out) throw Error(Errc::io_error, "write failed");
}

inline std::vector<std::uint8_t> serialize(std::span<const RawFrame> frames) {
  std::ostringstream out(std::ios::binary);
  write(frames, out);
  const std::string s = std::move(out).str();
  return {s.begin(), s.end()};
}

}  // namespace pcap

/// Loads every frame of a capture file in file order.
inline std::vector<RawFrame> read_pcap(const std::filesystem::path& file_path) {
  std::ifstream in(file_path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + file_path.string());
  return pcap::read(in);
}

/// Writes frames as a microsecond pcap with Ethernet link type. Frames must be
/// in non-decreasing timestamp order.
inline void write_pcap(std::span<const RawFrame> frames,
                       const std::filesystem::path& file_path) {
  // Validate before touching the file so a failed call leaves nothing behind.
  const auto bytes = pcap::serialize(frames);
  std::ofstream out(file_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + file_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io_error, "write failed: " + file_path.string());
}

}  // namespace gridsentry
