#pragma once

#include <algorithm>
#include <cstdint>
#include <concepts>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "gridsentry/codec.hpp"
#include "gridsentry/error.hpp"
#include "gridsentry/pcap.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

/// One GOOSE feature row.
struct GooseRecord {
  static constexpr Protocol protocol = Protocol::goose;

  TimeUs time_us = 0;
  MacAddress dm;
  MacAddress sm;
  std::uint16_t ethertype = kEthertypeGoose;
  std::uint16_t appid = 0;
  std::string datSet;
  std::string goID;
  std::string gocbRef;
  std::uint32_t stNum = 0;
  std::uint32_t sqNum = 0;
  bool data1 = false;
  bool data2 = false;

  friend bool operator==(const GooseRecord&, const GooseRecord&) = default;
};

/// One SV feature row.
struct SvRecord {
  static constexpr Protocol protocol = Protocol::sv;

  TimeUs time_us = 0;
  MacAddress dm;
  MacAddress sm;
  std::uint16_t ethertype = kEthertypeSv;
  std::uint16_t appid = 0;
  std::string svID;
  std::uint16_t smpCnt = 0;

  friend bool operator==(const SvRecord&, const SvRecord&) = default;
};

template <class R>
concept FeatureRecord = std::same_as<R, GooseRecord> || std::same_as<R, SvRecord>;

/// Identity of one publisher stream: rules only compare records that share a
/// key.
struct StreamKey {
  Protocol protocol = Protocol::goose;
  MacAddress sm;
  MacAddress dm;
  std::string identity;  // gocbRef for GOOSE, svID for SV

  friend auto operator<=>(const StreamKey&, const StreamKey&) = default;
};

inline StreamKey stream_key(const GooseRecord& r) {
  return {Protocol::goose, r.sm, r.dm, r.gocbRef};
}
inline StreamKey stream_key(const SvRecord& r) { return {Protocol::sv, r.sm, r.dm, r.svID}; }

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::string scenario;
  /// End of the capture window, when known; enables the trailing-silence
  /// check for GOOSE streams.
  std::optional<TimeUs> capture_end_us;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Records of one protocol plus one ground-truth label per record.
template <FeatureRecord R>
struct Dataset {
  using record_type = R;
  static constexpr Protocol protocol = R::protocol;

  std::vector<R> records;
  std::vector<AnomalyClass> labels;
  DatasetMeta meta;

  std::size_t size() const noexcept { return records.size(); }

  void push_back(R rec, AnomalyClass label = AnomalyClass::normal) {
    records.push_back(std::move(rec));
    labels.push_back(label);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

using GooseDataset = Dataset<GooseRecord>;
using SvDataset = Dataset<SvRecord>;
using LabeledDataset = std::variant<GooseDataset, SvDataset>;

inline Protocol protocol_of(const LabeledDataset& d) {
  return std::holds_alternative<GooseDataset>(d) ? Protocol::goose : Protocol::sv;
}

/// Stable sort by time; records with equal timestamps keep their order.
template <FeatureRecord R>
void sort_by_time(Dataset<R>& d) {
  std::vector<std::size_t> idx(d.records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return d.records[a].time_us < d.records[b].time_us;
  });
  std::vector<R> recs;
  std::vector<AnomalyClass> labels;
  recs.reserve(idx.size());
  labels.reserve(idx.size());
  for (auto i : idx) {
    recs.push_back(std::move(d.records[i]));
    labels.push_back(d.labels[i]);
  }
  d.records = std::move(recs);
  d.labels = std::move(labels);
}

namespace records_detail {

inline void check_text(const std::string& s, const char* field, std::size_t index) {
  if (s.empty() || !is_visible_string(s))
    throw Error(Errc::invariant_violation, "empty or non-printable text", index, field);
}

}  // namespace records_detail

/// Throws invariant-violation (position = record index) if the dataset breaks
/// any structural invariant.
template <FeatureRecord R>
void validate(const Dataset<R>& d) {
  if (d.labels.size() != d.records.size())
    throw Error(Errc::invariant_violation, "label count differs from record count");
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const R& r = d.records[i];
    if (r.time_us < 0) throw Error(Errc::invariant_violation, "negative time", i, "time_us");
    if (i && r.time_us < d.records[i - 1].time_us)
      throw Error(Errc::invariant_violation, "records not sorted by time", i, "time_us");
    if (r.ethertype != ethertype_of(R::protocol))
      throw Error(Errc::invariant_violation, "wrong ethertype", i, "type");
    if constexpr (std::same_as<R, GooseRecord>) {
      records_detail::check_text(r.gocbRef, "gocbRef", i);
      records_detail::check_text(r.datSet, "datSet", i);
      records_detail::check_text(r.goID, "goID", i);
    } else {
      records_detail::check_text(r.svID, "svID", i);
    }
  }
}

inline GooseRecord to_record(const RawFrame& f, const GooseApdu& a) {
  GooseRecord r;
  r.time_us = f.timestamp;
  r.dm = f.dst_mac;
  r.sm = f.src_mac;
  r.ethertype = f.ethertype;
  r.appid = a.appid;
  r.datSet = a.datSet;
  r.goID = a.goID;
  r.gocbRef = a.gocbRef;
  r.stNum = a.stNum;
  r.sqNum = a.sqNum;
  r.data1 = a.data1;
  r.data2 = a.data2;
  return r;
}

inline SvRecord to_record(const RawFrame& f, const SvApdu& a) {
  SvRecord r;
  r.time_us = f.timestamp;
  r.dm = f.dst_mac;
  r.sm = f.src_mac;
  r.ethertype = f.ethertype;
  r.appid = a.appid;
  r.svID = a.svID;
  r.smpCnt = a.smpCnt;
  return r;
}

/// Re-encodes a record as a wire frame. SV counters are written as observed,
/// including out-of-range values.
inline RawFrame to_frame(const GooseRecord& r) {
  GooseApdu a{r.appid, r.gocbRef, r.datSet, r.goID, r.stNum, r.sqNum, r.data1, r.data2, {}};
  return encode_goose(a, r.dm, r.sm, r.time_us);
}

inline RawFrame to_frame(const SvRecord& r) {
  return encode_sv(SvApdu{r.appid, r.svID, r.smpCnt}, r.dm, r.sm, r.time_us,
                   CounterCheck::allow_out_of_range);
}

struct SkippedFrame {
  std::size_t frame_index = 0;
  std::uint16_t ethertype = 0;
  Errc reason = Errc::unsupported_format;
  std::string detail;
};

struct Extraction {
  std::vector<GooseRecord> goose;
  std::vector<SvRecord> sv;
  std::vector<SkippedFrame> skipped;
};

/// Turns captured frames into feature rows in capture order. Frames that are
/// not GOOSE/SV, VLAN-tagged, or fail to decode are listed in `skipped`;
/// nothing here is fatal.
inline Extraction extract_records(std::span<const RawFrame> frames) {
  Extraction out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const RawFrame& f = frames[i];
    if (f.ethertype == kEthertypeVlan) {
      out.skipped.push_back({i, f.ethertype, Errc::unsupported_shape, "VLAN-tagged frame"});
      continue;
    }
    if (f.ethertype != kEthertypeGoose && f.ethertype != kEthertypeSv) {
      out.skipped.push_back({i, f.ethertype, Errc::protocol_mismatch, "not GOOSE or SV"});
      continue;
    }
    try {
      if (f.ethertype == kEthertypeGoose)
        out.goose.push_back(to_record(f, decode_goose(f)));
      else
        out.sv.push_back(to_record(f, decode_sv(f)));
    } catch (const Error& e) {
      out.skipped.push_back({i, f.ethertype, e.code(), e.what()});
    }
  }
  return out;
}

/// All-NORMAL dataset from capture-ordered records (stable-sorted by time).
template <FeatureRecord R>
Dataset<R> make_dataset(std::vector<R> records, DatasetMeta meta = {}) {
  Dataset<R> d;
  d.labels.assign(records.size(), AnomalyClass::normal);
  d.records = std::move(records);
  d.meta = std::move(meta);
  sort_by_time(d);
  return d;
}

}  // namespace gridsentry
