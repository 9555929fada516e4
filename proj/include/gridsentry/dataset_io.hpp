#pragma once

// Dataset files.
//
// JSONL: the first line is a header object
//   {"schema":"gridsentry/v1","protocol":"GOOSE"|"SV","meta":{...}}
// and every following line is one record object carrying a "label" field.
//
// CSV: fixed column order per protocol, MACs as lowercase colon-hex, times as
// decimal microseconds plus an HH:MM:SS.ffffff rendering.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsentry/error.hpp"
#include "gridsentry/records.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

inline constexpr std::string_view kSchemaId = "gridsentry/v1";

inline constexpr std::string_view kGooseCsvHeader =
    "time,time_us,dm,sm,type,appid,datSet,goID,gocbRef,stNum,sqNum,data1,data2,label";
inline constexpr std::string_view kSvCsvHeader =
    "time,time_us,dm,sm,type,appid,svID,smpCnt,label";

namespace io_detail {

using ojson = nlohmann::ordered_json;

inline ojson record_json(const GooseRecord& r) {
  ojson j;
  j["time_us"] = r.time_us;
  j["dm"] = r.dm.to_string();
  j["sm"] = r.sm.to_string();
  j["type"] = r.ethertype;
  j["appid"] = r.appid;
  j["datSet"] = r.datSet;
  j["goID"] = r.goID;
  j["gocbRef"] = r.gocbRef;
  j["stNum"] = r.stNum;
  j["sqNum"] = r.sqNum;
  j["data1"] = r.data1;
  j["data2"] = r.data2;
  return j;
}

inline ojson record_json(const SvRecord& r) {
  ojson j;
  j["time_us"] = r.time_us;
  j["dm"] = r.dm.to_string();
  j["sm"] = r.sm.to_string();
  j["type"] = r.ethertype;
  j["appid"] = r.appid;
  j["svID"] = r.svID;
  j["smpCnt"] = r.smpCnt;
  return j;
}

/// Field accessors that turn any type/range problem into schema-error.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& obj, std::size_t line) : obj_(obj), line_(line) {}

  const nlohmann::json& at(const char* name) const {
    auto it = obj_.find(name);
    if (it == obj_.end()) fail(name, "missing");
    return *it;
  }

  template <class T>
  T unsigned_field(const char* name, std::uint64_t max) const {
    const auto& v = at(name);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > max) fail(name, "not an unsigned integer in range");
    return static_cast<T>(v.get<std::uint64_t>());
  }

  std::int64_t time(const char* name) const {
    const auto& v = at(name);
    if (!v.is_number_integer()) fail(name, "not an integer");
    const auto t = v.get<std::int64_t>();
    if (t < 0) fail(name, "negative");
    return t;
  }

  std::string text(const char* name) const {
    const auto& v = at(name);
    if (!v.is_string()) fail(name, "not a string");
    auto s = v.get<std::string>();
    if (s.empty() || !is_visible_string(s)) fail(name, "empty or non-printable");
    return s;
  }

  bool boolean(const char* name) const {
    const auto& v = at(name);
    if (!v.is_boolean()) fail(name, "not a boolean");
    return v.get<bool>();
  }

  MacAddress mac(const char* name) const {
    const auto& v = at(name);
    if (!v.is_string()) fail(name, "not a string");
    auto m = MacAddress::parse(v.get<std::string>());
    if (!m) fail(name, "malformed MAC address");
    return *m;
  }

  AnomalyClass label() const {
    const auto& v = at("label");
    if (!v.is_string()) fail("label", "not a string");
    auto c = parse_class(v.get<std::string>());
    if (!c) fail("label", "unknown class");
    return *c;
  }

  [[noreturn]] void fail(const char* field, const std::string& why) const {
    throw Error(Errc::schema_error, why, line_, field);
  }

 private:
  const nlohmann::json& obj_;
  std::size_t line_;
};

inline GooseRecord read_goose(const FieldReader& f) {
  GooseRecord r;
  r.time_us = f.time("time_us");
  r.dm = f.mac("dm");
  r.sm = f.mac("sm");
  r.ethertype = f.unsigned_field<std::uint16_t>("type", 0xFFFF);
  if (r.ethertype != kEthertypeGoose) f.fail("type", "not the GOOSE ethertype");
  r.appid = f.unsigned_field<std::uint16_t>("appid", 0xFFFF);
  r.datSet = f.text("datSet");
  r.goID = f.text("goID");
  r.gocbRef = f.text("gocbRef");
  r.stNum = f.unsigned_field<std::uint32_t>("stNum", 0xFFFFFFFFu);
  r.sqNum = f.unsigned_field<std::uint32_t>("sqNum", 0xFFFFFFFFu);
  r.data1 = f.boolean("data1");
  r.data2 = f.boolean("data2");
  return r;
}

inline SvRecord read_sv(const FieldReader& f) {
  SvRecord r;
  r.time_us = f.time("time_us");
  r.dm = f.mac("dm");
  r.sm = f.mac("sm");
  r.ethertype = f.unsigned_field<std::uint16_t>("type", 0xFFFF);
  if (r.ethertype != kEthertypeSv) f.fail("type", "not the SV ethertype");
  r.appid = f.unsigned_field<std::uint16_t>("appid", 0xFFFF);
  r.svID = f.text("svID");
  r.smpCnt = f.unsigned_field<std::uint16_t>("smpCnt", 0xFFFF);
  return r;
}

template <FeatureRecord R>
void load_rows(std::istream& in, std::size_t& line_no, Dataset<R>& d) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(Errc::schema_error, "not a JSON object", line_no, "record");
    FieldReader f(j, line_no);
    const AnomalyClass label = f.label();
    R rec;
    if constexpr (std::same_as<R, GooseRecord>)
      rec = read_goose(f);
    else
      rec = read_sv(f);
    if (!d.records.empty() && rec.time_us < d.records.back().time_us)
      f.fail("time_us", "records not sorted by time");
    d.push_back(std::move(rec), label);
  }
}

inline std::string hex16(std::uint16_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04x", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  q.push_back('"');
  return q;
}

/// RFC 4180 field splitting for one physical line (no embedded newlines).
inline std::vector<std::string> csv_split(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw Error(Errc::schema_error, "unterminated quote", line_no, "csv");
  out.push_back(std::move(cur));
  return out;
}

template <class T>
T csv_number(const std::string& s, std::size_t line_no, const char* field, int base = 10) {
  std::string_view v = s;
  if (base == 16) {
    if (v.size() < 3 || v[0] != '0' || (v[1] != 'x' && v[1] != 'X'))
      throw Error(Errc::schema_error, "expected 0x-prefixed hex", line_no, field);
    v.remove_prefix(2);
  }
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw Error(Errc::schema_error, "not a number in range", line_no, field);
  return out;
}

inline bool csv_bool(const std::string& s, std::size_t line_no, const char* field) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw Error(Errc::schema_error, "expected true or false", line_no, field);
}

}  // namespace io_detail

template <FeatureRecord R>
void save_jsonl(const Dataset<R>& d, std::ostream& out) {
  validate(d);
  io_detail::ojson hdr;
  hdr["schema"] = kSchemaId;
  hdr["protocol"] = protocol_name(R::protocol);
  io_detail::ojson meta;
  meta["seed"] = d.meta.seed;
  meta["scenario"] = d.meta.scenario;
  if (d.meta.capture_end_us) meta["capture_end_us"] = *d.meta.capture_end_us;
  hdr["meta"] = std::move(meta);
  out << hdr.dump() << '\n';
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    auto j = io_detail::record_json(d.records[i]);
    j["label"] = class_name(d.labels[i]);
    out << j.dump() << '\n';
  }
}

inline void save_jsonl(const LabeledDataset& d, std::ostream& out) {
  std::visit([&](const auto& ds) { save_jsonl(ds, out); }, d);
}

template <class D>
void save_jsonl(const D& d, const std::filesystem::path& path) {
  std::ostringstream buf;
  save_jsonl(d, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + path.string());
  out << buf.str();
  if (!out) throw Error(Errc::io_error, "write failed: " + path.string());
}

inline LabeledDataset load_jsonl(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw Error(Errc::schema_error, "empty file", 1, "schema");
  const nlohmann::json hdr = nlohmann::json::parse(line, nullptr, false);
  if (hdr.is_discarded() || !hdr.is_object())
    throw Error(Errc::schema_error, "header is not a JSON object", 1, "schema");
  if (!hdr.contains("schema") || hdr["schema"] != kSchemaId)
    throw Error(Errc::schema_error, "unknown schema", 1, "schema");
  if (!hdr.contains("protocol") || !hdr["protocol"].is_string())
    throw Error(Errc::schema_error, "missing protocol", 1, "protocol");
  const auto proto = hdr["protocol"].get<std::string>();
  if (proto != "GOOSE" && proto != "SV")
    throw Error(Errc::schema_error, "protocol must be GOOSE or SV", 1, "protocol");

  DatasetMeta meta;
  if (hdr.contains("meta")) {
    const auto& m = hdr["meta"];
    if (!m.is_object()) throw Error(Errc::schema_error, "meta is not an object", 1, "meta");
    if (m.contains("seed")) {
      if (!m["seed"].is_number_unsigned())
        throw Error(Errc::schema_error, "seed must be unsigned", 1, "seed");
      meta.seed = m["seed"].get<std::uint64_t>();
    }
    if (m.contains("scenario")) {
      if (!m["scenario"].is_string())
        throw Error(Errc::schema_error, "scenario must be a string", 1, "scenario");
      meta.scenario = m["scenario"].get<std::string>();
    }
    if (m.contains("capture_end_us")) {
      if (!m["capture_end_us"].is_number_integer())
        throw Error(Errc::schema_error, "capture_end_us must be an integer", 1, "capture_end_us");
      meta.capture_end_us = m["capture_end_us"].get<std::int64_t>();
    }
  }

  if (proto == "GOOSE") {
    GooseDataset d;
    d.meta = std::move(meta);
    io_detail::load_rows(in, line_no, d);
    return d;
  }
  SvDataset d;
  d.meta = std::move(meta);
  io_detail::load_rows(in, line_no, d);
  return d;
}

inline LabeledDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return load_jsonl(in);
}

template <FeatureRecord R>
void export_csv(const Dataset<R>& d, std::ostream& out) {
  using io_detail::csv_quote;
  using io_detail::hex16;
  validate(d);
  if constexpr (std::same_as<R, GooseRecord>)
    out << kGooseCsvHeader << '\n';
  else
    out << kSvCsvHeader << '\n';
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const R& r = d.records[i];
    out << format_time_of_day(r.time_us) << ',' << r.time_us << ',' << r.dm.to_string() << ','
        << r.sm.to_string() << ',' << hex16(r.ethertype) << ',' << hex16(r.appid) << ',';
    if constexpr (std::same_as<R, GooseRecord>) {
      out << csv_quote(r.datSet) << ',' << csv_quote(r.goID) << ',' << csv_quote(r.gocbRef)
          << ',' << r.stNum << ',' << r.sqNum << ',' << (r.data1 ? "true" : "false") << ','
          << (r.data2 ? "true" : "false");
    } else {
      out << csv_quote(r.svID) << ',' << r.smpCnt;
    }
    out << ',' << class_name(d.labels[i]) << '\n';
  }
}

inline void export_csv(const LabeledDataset& d, std::ostream& out) {
  std::visit([&](const auto& ds) { export_csv(ds, out); }, d);
}

template <class D>
void export_csv(const D& d, const std::filesystem::path& path) {
  std::ostringstream buf;
  export_csv(d, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + path.string());
  out << buf.str();
}

/// Reads a CSV produced by export_csv. The `time` column is display-only;
/// `time_us` is authoritative. Metadata is not carried by CSV.
inline LabeledDataset import_csv(std::istream& in) {
  using namespace io_detail;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::schema_error, "empty file", 1, "header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const bool goose = line == kGooseCsvHeader;
  if (!goose && line != kSvCsvHeader)
    throw Error(Errc::schema_error, "unrecognised header", 1, "header");
  const std::size_t ncols = goose ? 14 : 9;

  GooseDataset gd;
  SvDataset sd;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = csv_split(line, line_no);
    if (c.size() != ncols)
      throw Error(Errc::schema_error, "wrong column count", line_no, "row");
    auto mac = [&](const std::string& s, const char* f) {
      auto m = MacAddress::parse(s);
      if (!m) throw Error(Errc::schema_error, "malformed MAC address", line_no, f);
      return *m;
    };
    auto text = [&](const std::string& s, const char* f) {
      if (s.empty() || !is_visible_string(s))
        throw Error(Errc::schema_error, "empty or non-printable", line_no, f);
      return s;
    };
    const auto label = parse_class(c.back());
    if (!label) throw Error(Errc::schema_error, "unknown class", line_no, "label");
    const auto t = csv_number<std::int64_t>(c[1], line_no, "time_us");
    if (t < 0) throw Error(Errc::schema_error, "negative", line_no, "time_us");
    const auto type = csv_number<std::uint16_t>(c[4], line_no, "type", 16);
    if (type != (goose ? kEthertypeGoose : kEthertypeSv))
      throw Error(Errc::schema_error, "wrong ethertype", line_no, "type");
    if (goose) {
      GooseRecord r;
      r.time_us = t;
      r.dm = mac(c[2], "dm");
      r.sm = mac(c[3], "sm");
      r.ethertype = type;
      r.appid = csv_number<std::uint16_t>(c[5], line_no, "appid", 16);
      r.datSet = text(c[6], "datSet");
      r.goID = text(c[7], "goID");
      r.gocbRef = text(c[8], "gocbRef");
      r.stNum = csv_number<std::uint32_t>(c[9], line_no, "stNum");
      r.sqNum = csv_number<std::uint32_t>(c[10], line_no, "sqNum");
      r.data1 = csv_bool(c[11], line_no, "data1");
      r.data2 = csv_bool(c[12], line_no, "data2");
      if (!gd.records.empty() && t < gd.records.back().time_us)
        throw Error(Errc::schema_error, "records not sorted by time", line_no, "time_us");
      gd.push_back(std::move(r), *label);
    } else {
      SvRecord r;
      r.time_us = t;
      r.dm = mac(c[2], "dm");
      r.sm = mac(c[3], "sm");
      r.ethertype = type;
      r.appid = csv_number<std::uint16_t>(c[5], line_no, "appid", 16);
      r.svID = text(c[6], "svID");
      r.smpCnt = csv_number<std::uint16_t>(c[7], line_no, "smpCnt");
      if (!sd.records.empty() && t < sd.records.back().time_us)
        throw Error(Errc::schema_error, "records not sorted by time", line_no, "time_us");
      sd.push_back(std::move(r), *label);
    }
  }
  if (goose) return gd;
  return sd;
}

inline LabeledDataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return import_csv(in);
}

}  // namespace gridsentry
