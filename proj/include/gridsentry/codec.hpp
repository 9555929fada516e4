#pragma once

// GOOSE (IEC 61850-8-1) and SV (IEC 61850-9-2) APDU codec over the BER subset
// in ber.hpp. Byte offsets in errors are relative to the start of the frame
// payload, i.e. the APPID field.
//
// GOOSE goosePdu (0x61): 0x80 gocbRef, 0x81 timeAllowedToLive, 0x82 datSet,
//   0x83 goID, 0x85 stNum, 0x86 sqNum, 0xAB allData { 0x83 bool, 0x83 bool }.
// SV savPdu (0x60): 0x80 noASDU (= 1), 0xA2 seqASDU { 0x30 ASDU { 0x80 svID,
//   0x82 smpCnt (two octets) } }.
// Any other tag inside a PDU or ASDU is skipped.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <tuple>
#include <span>
#include <string>
#include <vector>

#include "gridsentry/ber.hpp"
#include "gridsentry/error.hpp"
#include "gridsentry/pcap.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

inline constexpr std::uint16_t kSmpCntMax = 4799;
inline constexpr std::size_t kApduHeaderSize = 8;

struct GooseApdu {
  std::uint16_t appid = 0;
  std::string gocbRef;
  std::string datSet;
  std::string goID;
  std::uint32_t stNum = 0;
  std::uint32_t sqNum = 0;
  bool data1 = false;
  bool data2 = false;
  std::optional<std::uint32_t> ttl_ms;

  friend bool operator==(const GooseApdu&, const GooseApdu&) = default;
};

struct SvApdu {
  std::uint16_t appid = 0;
  std::string svID;
  std::uint16_t smpCnt = 0;

  friend bool operator==(const SvApdu&, const SvApdu&) = default;
};

/// Whether encode_sv rejects sample counters outside 0..4799. Crafted attack
/// frames need the permissive mode.
enum class CounterCheck { enforce, allow_out_of_range };

namespace codec_detail {

inline constexpr std::uint8_t kGoosePdu = 0x61;
inline constexpr std::uint8_t kGocbRef = 0x80;
inline constexpr std::uint8_t kTtl = 0x81;
inline constexpr std::uint8_t kDatSet = 0x82;
inline constexpr std::uint8_t kGoID = 0x83;
inline constexpr std::uint8_t kStNum = 0x85;
inline constexpr std::uint8_t kSqNum = 0x86;
inline constexpr std::uint8_t kAllData = 0xAB;
inline constexpr std::uint8_t kBoolean = 0x83;

inline constexpr std::uint8_t kSavPdu = 0x60;
inline constexpr std::uint8_t kNoAsdu = 0x80;
inline constexpr std::uint8_t kSeqAsdu = 0xA2;
inline constexpr std::uint8_t kAsdu = 0x30;
inline constexpr std::uint8_t kSvID = 0x80;
inline constexpr std::uint8_t kSmpCnt = 0x82;

/// The PDU region of a payload plus whether the header's length field claimed
/// more bytes than the frame carries.
struct PduRegion {
  std::span<const std::uint8_t> bytes;
  std::uint16_t appid = 0;
  bool truncated = false;
};

inline PduRegion split_header(std::span<const std::uint8_t> payload) {
  if (payload.size() < kApduHeaderSize)
    throw Error(Errc::decode_error, "payload shorter than the APDU header", payload.size());
  PduRegion r;
  r.appid = static_cast<std::uint16_t>(payload[0] << 8 | payload[1]);
  const std::size_t length = static_cast<std::size_t>(payload[2] << 8 | payload[3]);
  if (length < kApduHeaderSize)
    throw Error(Errc::decode_error, "APDU length smaller than its header", 2);
  // Frames may carry Ethernet padding after the APDU; a short frame is
  // decoded as far as it goes so the error points at the cut.
  const std::size_t end = std::min(length, payload.size());
  r.truncated = length > payload.size();
  r.bytes = payload.subspan(kApduHeaderSize, end - kApduHeaderSize);
  return r;
}

/// Reads the single outer PDU TLV. When the capture is cut short, the value is
/// clipped to what is present and `clipped` is set.
inline ber::Tlv outer_pdu(const PduRegion& region, std::uint8_t expected_tag, bool& clipped) {
  ber::Reader head(region.bytes, kApduHeaderSize);
  if (region.bytes.size() < 2)
    throw Error(Errc::decode_error, "missing PDU", kApduHeaderSize + region.bytes.size());
  if (region.bytes[0] != expected_tag)
    throw Error(Errc::decode_error, "unexpected PDU tag", kApduHeaderSize);
  try {
    ber::Tlv t = head.next();
    clipped = false;
    if (!head.done())
      throw Error(Errc::decode_error, "trailing octets after PDU", head.offset());
    return t;
  } catch (const Error& e) {
    if (!region.truncated || e.code() != Errc::decode_error) throw;
  }
  // Re-read the header by hand and clip the value to the available octets.
  const std::uint8_t len0 = region.bytes[1];
  std::size_t hdr = 2;
  if (len0 & 0x80) hdr += len0 & 0x7F;
  if (hdr > region.bytes.size())
    throw Error(Errc::decode_error, "truncated PDU length", kApduHeaderSize + region.bytes.size());
  ber::Tlv t;
  t.tag = expected_tag;
  t.offset = kApduHeaderSize;
  t.value_offset = kApduHeaderSize + hdr;
  t.value = region.bytes.subspan(hdr);
  clipped = true;
  return t;
}

/// Iterates children of `parent`; if the parent was clipped, running out of
/// bytes is reported at the cut.
template <class Fn>
void for_each_child(const ber::Tlv& parent, bool clipped, Fn&& fn) {
  ber::Reader r(parent);
  while (!r.done()) fn(r.next());
  if (clipped) throw Error(Errc::decode_error, "frame truncated", r.offset());
}

inline void require_ethertype(const RawFrame& frame, std::uint16_t expected) {
  if (frame.ethertype != expected) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "ethertype 0x%04x, expected 0x%04x", frame.ethertype,
                  expected);
    throw Error(Errc::protocol_mismatch, buf);
  }
}

inline void check_text_field(const std::string& s, const char* name) {
  if (s.empty()) throw Error(Errc::invariant_violation, "empty field", std::nullopt, name);
  if (!is_visible_string(s))
    throw Error(Errc::invariant_violation, "non-printable characters", std::nullopt, name);
}

inline std::vector<std::uint8_t> with_header(std::uint16_t appid,
                                             const std::vector<std::uint8_t>& pdu) {
  const std::size_t length = kApduHeaderSize + pdu.size();
  if (length > 0xFFFF) throw Error(Errc::invariant_violation, "APDU longer than 65535 octets");
  std::vector<std::uint8_t> out;
  out.reserve(length);
  out.push_back(static_cast<std::uint8_t>(appid >> 8));
  out.push_back(static_cast<std::uint8_t>(appid));
  out.push_back(static_cast<std::uint8_t>(length >> 8));
  out.push_back(static_cast<std::uint8_t>(length));
  out.insert(out.end(), 4, 0x00);  // reserved1, reserved2
  out.insert(out.end(), pdu.begin(), pdu.end());
  return out;
}

}  // namespace codec_detail

inline GooseApdu decode_goose(const RawFrame& frame) {
  using namespace codec_detail;
  require_ethertype(frame, kEthertypeGoose);
  const PduRegion region = split_header(frame.payload);
  bool clipped = false;
  const ber::Tlv pdu = outer_pdu(region, kGoosePdu, clipped);

  GooseApdu a;
  a.appid = region.appid;
  std::optional<std::string> gocb, ds, goid;
  std::optional<std::uint32_t> st, sq;
  std::optional<std::pair<bool, bool>> data;

  auto once = [](bool present, const ber::Tlv& t, const char* name) {
    if (present) throw Error(Errc::decode_error, "duplicate field", t.offset, name);
  };

  for_each_child(pdu, clipped, [&](const ber::Tlv& t) {
    switch (t.tag) {
      case kGocbRef: once(gocb.has_value(), t, "gocbRef"); gocb = ber::decode_visible_string(t, "gocbRef"); break;
      case kTtl: once(a.ttl_ms.has_value(), t, "timeAllowedToLive"); a.ttl_ms = ber::decode_unsigned(t, "timeAllowedToLive"); break;
      case kDatSet: once(ds.has_value(), t, "datSet"); ds = ber::decode_visible_string(t, "datSet"); break;
      case kGoID: once(goid.has_value(), t, "goID"); goid = ber::decode_visible_string(t, "goID"); break;
      case kStNum: once(st.has_value(), t, "stNum"); st = ber::decode_unsigned(t, "stNum"); break;
      case kSqNum: once(sq.has_value(), t, "sqNum"); sq = ber::decode_unsigned(t, "sqNum"); break;
      case kAllData: {
        once(data.has_value(), t, "allData");
        std::vector<bool> entries;
        ber::Reader r(t);
        while (!r.done()) {
          const ber::Tlv e = r.next();
          if (e.tag != kBoolean)
            throw Error(Errc::unsupported_shape, "allData entry is not a boolean", e.offset,
                        "allData");
          entries.push_back(ber::decode_boolean(e));
        }
        if (entries.size() != 2)
          throw Error(Errc::unsupported_shape,
                      "allData carries " + std::to_string(entries.size()) +
                          " entries, expected 2",
                      t.offset, "allData");
        data = {entries[0], entries[1]};
        break;
      }
      default:
        break;  // length-delimited skip
    }
  });

  auto need = [](auto& opt, const char* name) {
    if (!opt) throw Error(Errc::missing_field, "mandatory field absent", std::nullopt, name);
    return std::move(*opt);
  };
  a.gocbRef = need(gocb, "gocbRef");
  a.datSet = need(ds, "datSet");
  a.goID = need(goid, "goID");
  a.stNum = need(st, "stNum");
  a.sqNum = need(sq, "sqNum");
  std::tie(a.data1, a.data2) = need(data, "allData");
  if (a.gocbRef.empty()) throw Error(Errc::missing_field, "empty string", std::nullopt, "gocbRef");
  if (a.datSet.empty()) throw Error(Errc::missing_field, "empty string", std::nullopt, "datSet");
  if (a.goID.empty()) throw Error(Errc::missing_field, "empty string", std::nullopt, "goID");
  return a;
}

/// Deterministic encoding: identical inputs give identical bytes.
inline RawFrame encode_goose(const GooseApdu& apdu, const MacAddress& dst_mac,
                             const MacAddress& src_mac, TimeUs timestamp) {
  using namespace codec_detail;
  check_text_field(apdu.gocbRef, "gocbRef");
  check_text_field(apdu.datSet, "datSet");
  check_text_field(apdu.goID, "goID");

  ber::Writer data;
  data.put_boolean(kBoolean, apdu.data1);
  data.put_boolean(kBoolean, apdu.data2);

  ber::Writer body;
  body.put_string(kGocbRef, apdu.gocbRef);
  if (apdu.ttl_ms) body.put_unsigned(kTtl, *apdu.ttl_ms);
  body.put_string(kDatSet, apdu.datSet);
  body.put_string(kGoID, apdu.goID);
  body.put_unsigned(kStNum, apdu.stNum);
  body.put_unsigned(kSqNum, apdu.sqNum);
  body.put_constructed(kAllData, data);

  ber::Writer pdu;
  pdu.put_constructed(kGoosePdu, body);

  RawFrame f;
  f.timestamp = timestamp;
  f.dst_mac = dst_mac;
  f.src_mac = src_mac;
  f.ethertype = kEthertypeGoose;
  f.payload = with_header(apdu.appid, pdu.bytes());
  return f;
}

inline SvApdu decode_sv(const RawFrame& frame) {
  using namespace codec_detail;
  require_ethertype(frame, kEthertypeSv);
  const PduRegion region = split_header(frame.payload);
  bool clipped = false;
  const ber::Tlv pdu = outer_pdu(region, kSavPdu, clipped);

  SvApdu s;
  s.appid = region.appid;
  std::optional<std::uint32_t> no_asdu;
  std::optional<std::string> sv_id;
  std::optional<std::uint16_t> smp;
  bool seq_seen = false;

  for_each_child(pdu, clipped, [&](const ber::Tlv& t) {
    if (t.tag == kNoAsdu) {
      if (no_asdu) throw Error(Errc::decode_error, "duplicate field", t.offset, "noASDU");
      no_asdu = ber::decode_unsigned(t, "noASDU");
      if (*no_asdu != 1)
        throw Error(Errc::unsupported_shape,
                    "noASDU = " + std::to_string(*no_asdu) + ", only single-ASDU frames",
                    t.offset, "noASDU");
    } else if (t.tag == kSeqAsdu) {
      if (seq_seen) throw Error(Errc::decode_error, "duplicate field", t.offset, "seqASDU");
      seq_seen = true;
      ber::Reader seq(t);
      std::size_t count = 0;
      while (!seq.done()) {
        const ber::Tlv asdu = seq.next();
        if (asdu.tag != kAsdu)
          throw Error(Errc::decode_error, "unexpected tag in seqASDU", asdu.offset);
        if (++count > 1)
          throw Error(Errc::unsupported_shape, "more than one ASDU", asdu.offset, "seqASDU");
        ber::Reader fields(asdu);
        while (!fields.done()) {
          const ber::Tlv f = fields.next();
          if (f.tag == kSvID) {
            if (sv_id) throw Error(Errc::decode_error, "duplicate field", f.offset, "svID");
            sv_id = ber::decode_visible_string(f, "svID");
          } else if (f.tag == kSmpCnt) {
            if (smp) throw Error(Errc::decode_error, "duplicate field", f.offset, "smpCnt");
            if (f.value.size() != 2)
              throw Error(Errc::decode_error, "smpCnt must be two octets", f.value_offset,
                          "smpCnt");
            smp = static_cast<std::uint16_t>(f.value[0] << 8 | f.value[1]);
          }
        }
      }
      if (count == 0) throw Error(Errc::missing_field, "empty seqASDU", t.offset, "ASDU");
    }
  });

  if (!no_asdu) throw Error(Errc::missing_field, "mandatory field absent", std::nullopt, "noASDU");
  if (!seq_seen) throw Error(Errc::missing_field, "mandatory field absent", std::nullopt, "seqASDU");
  if (!sv_id || sv_id->empty())
    throw Error(Errc::missing_field, "mandatory field absent", std::nullopt, "svID");
  if (!smp) throw Error(Errc::missing_field, "mandatory field absent", std::nullopt, "smpCnt");
  s.svID = std::move(*sv_id);
  s.smpCnt = *smp;
  return s;
}

inline RawFrame encode_sv(const SvApdu& apdu, const MacAddress& dst_mac,
                          const MacAddress& src_mac, TimeUs timestamp,
                          CounterCheck check = CounterCheck::enforce) {
  using namespace codec_detail;
  check_text_field(apdu.svID, "svID");
  if (check == CounterCheck::enforce && apdu.smpCnt > kSmpCntMax)
    throw Error(Errc::invariant_violation,
                "smpCnt " + std::to_string(apdu.smpCnt) + " exceeds 4799", std::nullopt,
                "smpCnt");

  ber::Writer fields;
  fields.put_string(kSvID, apdu.svID);
  fields.put_fixed16(kSmpCnt, apdu.smpCnt);
  ber::Writer seq;
  seq.put_constructed(kAsdu, fields);
  ber::Writer body;
  body.put_unsigned(kNoAsdu, 1);
  body.put_constructed(kSeqAsdu, seq);
  ber::Writer pdu;
  pdu.put_constructed(kSavPdu, body);

  RawFrame f;
  f.timestamp = timestamp;
  f.dst_mac = dst_mac;
  f.src_mac = src_mac;
  f.ethertype = kEthertypeSv;
  f.payload = with_header(apdu.appid, pdu.bytes());
  return f;
}

}  // namespace gridsentry
