#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gridsentry/codec.hpp"
#include "gridsentry/pcap.hpp"

using namespace gridsentry;

namespace {

std::filesystem::path tmp_dir() {
  std::filesystem::path p = GRIDSENTRY_TEST_TMP;
  std::filesystem::create_directories(p);
  return p;
}

GooseApdu fig2_apdu() {
  return {3, "IED1/LLN0$GO$gcb1", "IED1/LLN0$ds1", "gcb1", 1, 0, false, false, {}};
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v, bool big) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (big ? 24 - 8 * i : 8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v, bool big) {
  out.push_back(static_cast<std::uint8_t>(big ? v >> 8 : v));
  out.push_back(static_cast<std::uint8_t>(big ? v : v >> 8));
}

// Capture image with one frame, built by hand in either byte order.
std::vector<std::uint8_t> hand_pcap(bool big, std::uint32_t magic, std::uint32_t sec,
                                    std::uint32_t frac, const std::vector<std::uint8_t>& frame) {
  std::vector<std::uint8_t> b;
  put32(b, magic, big);
  put16(b, 2, big);
  put16(b, 4, big);
  put32(b, 0, big);
  put32(b, 0, big);
  put32(b, 65535, big);
  put32(b, 1, big);
  put32(b, sec, big);
  put32(b, frac, big);
  put32(b, static_cast<std::uint32_t>(frame.size()), big);
  put32(b, static_cast<std::uint32_t>(frame.size()), big);
  b.insert(b.end(), frame.begin(), frame.end());
  return b;
}

std::vector<std::uint8_t> ethernet_bytes(const RawFrame& f) {
  std::vector<std::uint8_t> b(f.dst_mac.octets.begin(), f.dst_mac.octets.end());
  b.insert(b.end(), f.src_mac.octets.begin(), f.src_mac.octets.end());
  b.push_back(static_cast<std::uint8_t>(f.ethertype >> 8));
  b.push_back(static_cast<std::uint8_t>(f.ethertype));
  b.insert(b.end(), f.payload.begin(), f.payload.end());
  return b;
}

std::string random_text(std::mt19937_64& rng) {
  std::string s(1 + rng() % 40, ' ');
  for (auto& c : s) c = static_cast<char>(0x20 + rng() % 95);
  return s;
}

GooseApdu random_goose(std::mt19937_64& rng) {
  GooseApdu a;
  a.appid = static_cast<std::uint16_t>(rng());
  a.gocbRef = random_text(rng);
  a.datSet = random_text(rng);
  a.goID = random_text(rng);
  a.stNum = static_cast<std::uint32_t>(rng() >> (rng() % 33));
  a.sqNum = static_cast<std::uint32_t>(rng() >> (rng() % 33));
  a.data1 = rng() & 1;
  a.data2 = rng() & 1;
  if (rng() & 1) a.ttl_ms = static_cast<std::uint32_t>(rng());
  return a;
}

SvApdu random_sv(std::mt19937_64& rng) {
  return {static_cast<std::uint16_t>(rng()), random_text(rng),
          static_cast<std::uint16_t>(rng() % (kSmpCntMax + 1))};
}

}  // namespace

TEST(Pcap, MicrosecondMagicTimestamp) {
  const auto f = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 0);
  const auto bytes = hand_pcap(false, pcap::kMagicMicros, 1, 500000, ethernet_bytes(f));
  const auto frames = pcap::parse(bytes);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].timestamp, 1'500'000);
  EXPECT_EQ(frames[0].ethertype, kEthertypeGoose);
  EXPECT_EQ(frames[0].payload, f.payload);
}

TEST(Pcap, SwappedMagicGivesSameFrame) {
  const auto f = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 0);
  const auto le = pcap::parse(hand_pcap(false, pcap::kMagicMicros, 1, 500000, ethernet_bytes(f)));
  const auto raw = hand_pcap(true, pcap::kMagicMicros, 1, 500000, ethernet_bytes(f));
  EXPECT_EQ(raw[0], 0xA1);
  const auto be = pcap::parse(raw);
  EXPECT_EQ(le, be);
}

TEST(Pcap, NanosecondMagicTruncates) {
  const auto f = encode_sv({0x40, "MU01", 0}, kDefaultSvDst, kDefaultSvSrc, 0);
  const auto frames =
      pcap::parse(hand_pcap(false, pcap::kMagicNanos, 2, 999'999'999, ethernet_bytes(f)));
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].timestamp, 2'999'999);
}

TEST(Pcap, BadMagic) {
  std::vector<std::uint8_t> b(24, 0);
  try {
    pcap::parse(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_format);
  }
}

TEST(Pcap, NonEthernetLinkRejected) {
  auto b = hand_pcap(false, pcap::kMagicMicros, 0, 0, std::vector<std::uint8_t>(20, 0));
  b[20] = 101;
  try {
    pcap::parse(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_format);
  }
}

TEST(Pcap, TruncatedRecordReportsIndex) {
  std::vector<RawFrame> frames;
  for (int i = 0; i < 3; ++i)
    frames.push_back(encode_sv({0x40, "MU01", static_cast<std::uint16_t>(i)}, kDefaultSvDst,
                               kDefaultSvSrc, i * 208));
  auto bytes = pcap::serialize(frames);
  bytes.resize(bytes.size() - 5);
  try {
    pcap::parse(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated_capture);
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(Pcap, EmptyWriteIsHeaderOnly) {
  const auto path = tmp_dir() / "empty.pcap";
  write_pcap({}, path);
  EXPECT_EQ(std::filesystem::file_size(path), 24u);
  EXPECT_TRUE(read_pcap(path).empty());
}

TEST(Pcap, OneFrameSize) {
  const auto f = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 5);
  const auto path = tmp_dir() / "one.pcap";
  write_pcap(std::vector<RawFrame>{f}, path);
  EXPECT_EQ(std::filesystem::file_size(path), 24u + 16u + 14u + f.payload.size());
}

TEST(Pcap, OrderingViolation) {
  std::vector<RawFrame> frames = {
      encode_sv({0x40, "MU01", 1}, kDefaultSvDst, kDefaultSvSrc, 10),
      encode_sv({0x40, "MU01", 0}, kDefaultSvDst, kDefaultSvSrc, 9)};
  const auto path = tmp_dir() / "unordered.pcap";
  std::filesystem::remove(path);
  try {
    write_pcap(frames, path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ordering_violation);
    EXPECT_EQ(e.position(), 1u);
  }
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Pcap, TenThousandFrameRoundTrip) {
  std::mt19937_64 rng(11);
  std::vector<RawFrame> frames;
  TimeUs t = 1'700'000'000'000'000;
  for (int i = 0; i < 10'000; ++i) {
    t += static_cast<TimeUs>(rng() % 5000);
    if (rng() & 1)
      frames.push_back(encode_goose(random_goose(rng), kDefaultGooseDst, kDefaultGooseSrc, t));
    else
      frames.push_back(encode_sv(random_sv(rng), kDefaultSvDst, kDefaultSvSrc, t));
  }
  const auto path = tmp_dir() / "big.pcap";
  write_pcap(frames, path);
  const auto back = read_pcap(path);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) ASSERT_EQ(back[i], frames[i]) << i;
}

TEST(Goose, Fig2RecordDecodes) {
  const auto a = fig2_apdu();
  const auto f = encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, 0);
  EXPECT_EQ(f.ethertype, 0x88B8);
  EXPECT_EQ(f.payload[0], 0x00);
  EXPECT_EQ(f.payload[1], 0x03);
  EXPECT_EQ(decode_goose(f), a);
}

TEST(Goose, Deterministic) {
  const auto a = fig2_apdu();
  EXPECT_EQ(encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, 7),
            encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, 7));
}

TEST(Goose, TruncatedAfterStNum) {
  const auto f = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 0);
  // Find the stNum TLV (tag 0x85, one octet) and cut right after it.
  std::size_t cut = 0;
  for (std::size_t i = kApduHeaderSize + 2; i + 2 < f.payload.size(); ++i)
    if (f.payload[i] == 0x85 && f.payload[i + 1] == 0x01) {
      cut = i + 3;
      break;
    }
  ASSERT_GT(cut, 0u);
  RawFrame t = f;
  t.payload.resize(cut);
  try {
    decode_goose(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::decode_error);
    EXPECT_EQ(e.position(), cut);
  }
}

TEST(Goose, WrongEthertype) {
  auto f = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 0);
  f.ethertype = kEthertypeSv;
  try {
    decode_goose(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::protocol_mismatch);
  }
}

TEST(Goose, MissingField) {
  ber::Writer data;
  data.put_boolean(0x83, false);
  data.put_boolean(0x83, true);
  ber::Writer body;
  body.put_string(0x80, "ref");
  body.put_string(0x82, "ds");
  body.put_string(0x83, "id");
  body.put_unsigned(0x85, 1);
  body.put_constructed(0xAB, data);
  ber::Writer pdu;
  pdu.put_constructed(0x61, body);
  RawFrame f;
  f.ethertype = kEthertypeGoose;
  f.payload = codec_detail::with_header(3, pdu.bytes());
  try {
    decode_goose(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_field);
    EXPECT_EQ(e.field(), "sqNum");
  }
}

TEST(Goose, UnknownTagSkipped) {
  ber::Writer data;
  data.put_boolean(0x83, true);
  data.put_boolean(0x83, false);
  ber::Writer body;
  body.put_string(0x80, "ref");
  body.put_string(0x84, "opaque timestamp");
  body.put_string(0x82, "ds");
  body.put_string(0x83, "id");
  body.put_unsigned(0x85, 9);
  body.put_unsigned(0x86, 300);
  body.put_constructed(0xAB, data);
  ber::Writer pdu;
  pdu.put_constructed(0x61, body);
  RawFrame f;
  f.ethertype = kEthertypeGoose;
  f.payload = codec_detail::with_header(3, pdu.bytes());
  const auto a = decode_goose(f);
  EXPECT_EQ(a.stNum, 9u);
  EXPECT_EQ(a.sqNum, 300u);
  EXPECT_TRUE(a.data1);
  EXPECT_FALSE(a.data2);
}

TEST(Goose, ThreeDataEntriesUnsupported) {
  ber::Writer data;
  for (int i = 0; i < 3; ++i) data.put_boolean(0x83, false);
  ber::Writer body;
  body.put_string(0x80, "ref");
  body.put_string(0x82, "ds");
  body.put_string(0x83, "id");
  body.put_unsigned(0x85, 1);
  body.put_unsigned(0x86, 1);
  body.put_constructed(0xAB, data);
  ber::Writer pdu;
  pdu.put_constructed(0x61, body);
  RawFrame f;
  f.ethertype = kEthertypeGoose;
  f.payload = codec_detail::with_header(3, pdu.bytes());
  try {
    decode_goose(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_shape);
  }
}

TEST(Goose, EmptyTextRejectedOnEncode) {
  auto a = fig2_apdu();
  a.goID.clear();
  try {
    encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invariant_violation);
  }
}

TEST(Goose, RandomRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_goose(rng);
    ASSERT_EQ(decode_goose(encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, i)), a);
  }
}

TEST(Sv, Decodes) {
  const SvApdu s{0x40, "MU01", 0};
  const auto f = encode_sv(s, kDefaultSvDst, kDefaultSvSrc, 0);
  EXPECT_EQ(f.ethertype, 0x88BA);
  EXPECT_EQ(f.payload[1], 0x40);
  EXPECT_EQ(decode_sv(f), s);
}

TEST(Sv, MaxCounter) {
  const SvApdu s{0x40, "MU01", 4799};
  EXPECT_EQ(decode_sv(encode_sv(s, kDefaultSvDst, kDefaultSvSrc, 0)).smpCnt, 4799);
}

TEST(Sv, CounterPastRangeRejected) {
  try {
    encode_sv({0x40, "MU01", 4800}, kDefaultSvDst, kDefaultSvSrc, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invariant_violation);
  }
  // Decoding accepts any 16-bit value.
  const auto f = encode_sv({0x40, "MU01", 65535}, kDefaultSvDst, kDefaultSvSrc, 0,
                           CounterCheck::allow_out_of_range);
  EXPECT_EQ(decode_sv(f).smpCnt, 65535);
}

TEST(Sv, MultipleAsduUnsupported) {
  ber::Writer fields;
  fields.put_string(0x80, "MU01");
  fields.put_fixed16(0x82, 1);
  ber::Writer seq;
  seq.put_constructed(0x30, fields);
  seq.put_constructed(0x30, fields);
  ber::Writer body;
  body.put_unsigned(0x80, 2);
  body.put_constructed(0xA2, seq);
  ber::Writer pdu;
  pdu.put_constructed(0x60, body);
  RawFrame f;
  f.ethertype = kEthertypeSv;
  f.payload = codec_detail::with_header(0x40, pdu.bytes());
  try {
    decode_sv(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_shape);
  }
}

TEST(Sv, RandomRoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_sv(rng);
    ASSERT_EQ(decode_sv(encode_sv(s, kDefaultSvDst, kDefaultSvSrc, i)), s);
  }
}

TEST(Fuzz, DecodersNeverCrash) {
  std::mt19937_64 rng(17);
  const auto goose = encode_goose(fig2_apdu(), kDefaultGooseDst, kDefaultGooseSrc, 0).payload;
  const auto sv = encode_sv({0x40, "MU01", 7}, kDefaultSvDst, kDefaultSvSrc, 0).payload;
  std::size_t ok = 0;
  for (int i = 0; i < 100'000; ++i) {
    RawFrame f;
    f.ethertype = (i & 1) ? kEthertypeGoose : kEthertypeSv;
    if (i % 4 < 2) {
      f.payload.resize(rng() % 96);
      for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    } else {
      // Mutate a valid frame so deeper paths are reached.
      f.payload = (i & 1) ? goose : sv;
      for (int k = 0, n = 1 + static_cast<int>(rng() % 4); k < n; ++k)
        f.payload[rng() % f.payload.size()] = static_cast<std::uint8_t>(rng());
      if (rng() % 3 == 0) f.payload.resize(rng() % f.payload.size());
    }
    try {
      if (f.ethertype == kEthertypeGoose)
        decode_goose(f);
      else
        decode_sv(f);
      ++ok;
    } catch (const Error&) {
    }
  }
  EXPECT_GT(ok, 0u);
}

TEST(Ber, LongFormLength) {
  std::string big(300, 'x');
  ber::Writer w;
  w.put_string(0x80, big);
  EXPECT_EQ(w.bytes()[1], 0x82);
  ber::Reader r(w.bytes());
  const auto t = r.next();
  EXPECT_EQ(t.value.size(), 300u);
  EXPECT_TRUE(r.done());
}

TEST(Ber, SignOctetForHighBit) {
  ber::Writer w;
  w.put_unsigned(0x85, 0x80);
  const std::vector<std::uint8_t> expect = {0x85, 0x02, 0x00, 0x80};
  EXPECT_EQ(w.bytes(), expect);
  ber::Reader r(w.bytes());
  EXPECT_EQ(ber::decode_unsigned(r.next(), "x"), 0x80u);
}
