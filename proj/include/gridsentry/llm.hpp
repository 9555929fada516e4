#pragma once

// Rules-to-text prompting and response parsing for chat-completion detectors.
//
// A dataset is cut into consecutive windows. Each window becomes one prompt:
// a system text with the output contract, the serialized rule set (empty at
// the WITHOUT level) and a fixed-width table of the window's records with
// window-relative row numbers. Replies must contain {"anomalies":[rows]}.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsentry/engine.hpp"
#include "gridsentry/error.hpp"
#include "gridsentry/keyvalue.hpp"
#include "gridsentry/records.hpp"
#include "gridsentry/rules.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

struct PromptBundle {
  std::string system_text;
  std::string rules_text;
  std::string records_text;
  std::size_t window_id = 0;
  std::size_t window_start = 0;
  std::size_t window_length = 0;

  /// The user message: rules (if any) followed by the record table.
  std::string user_text() const {
    return rules_text.empty() ? records_text : rules_text + "\n" + records_text;
  }

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

struct ChatClientConfig {
  std::string endpoint_url;
  std::string model_name;
  std::string token_env = "GRIDSENTRY_API_TOKEN";
  std::uint32_t timeout_ms = 30'000;
  std::uint32_t max_retries = 2;
  std::size_t window_size = 20;

  void validate() const {
    if (window_size == 0) throw Error(Errc::invariant_violation, "window_size must be >= 1");
  }
};

struct DetectorResponse {
  std::set<std::size_t> anomalous_indices;
  std::string raw_text;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Rule text

namespace llm_detail {

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string rounded(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string rule_sentence(RuleId id, const TimingConfig& t) {
  const auto n = [](auto v) { return std::to_string(v); };
  switch (id) {
    case RuleId::G_DI_1:
      return "While stNum, data1 and data2 stay the same, every message must carry a larger "
             "sqNum than the last genuine message; an equal or smaller sqNum is a data injection.";
    case RuleId::G_DI_2:
      return "A change of data1 or data2 is genuine only if stNum grows by exactly 1 and sqNum "
             "restarts at 0; any other data change is a data injection.";
    case RuleId::G_DI_3:
      return "stNum must never drop below the stNum of the last genuine message; a smaller "
             "stNum is a data injection.";
    case RuleId::G_DOS_1:
      return "More than " + n(t.goose_dos_max_packets) + " messages of one publisher within any " +
             n(t.goose_dos_window_us) + " us span is a denial of service on every message past "
             "the limit.";
    case RuleId::G_SYS_1:
      return "A silence longer than " + n(t.goose_heartbeat_max_gap_us) +
             " us before a message of the same publisher, or after its last message until the "
             "capture end, is a system problem.";
    case RuleId::G_RE_1:
      return "A message whose (stNum, sqNum, data1, data2) was already sent by the genuine "
             "publisher and whose (stNum, sqNum) is older than the last genuine message is a "
             "replay.";
    case RuleId::S_DI_1:
      return "smpCnt must lie in 0.." + n(kSmpCntMax) + "; a larger value is a data injection.";
    case RuleId::S_DI_2:
      return "smpCnt goes back to 0 only right after " + n(kSmpCntMax) + ", and " +
             n(kSmpCntMax) + " is always followed by 0; any other reset is a data injection.";
    case RuleId::S_DI_3:
      return "Apart from the " + n(kSmpCntMax) +
             " to 0 wrap, smpCnt must never decrease; a decrease is a data injection.";
    case RuleId::S_DOS_1:
      return "Samples are due every " + rounded(t.sv_nominal_interval_us) +
             " us; a message arriving less than " + rounded(t.sv_min_interval_us()) +
             " us after the previous one is a denial of service.";
    case RuleId::S_DOS_2:
      return "More than " + n(t.sv_dos_max_packets) + " messages of one stream within any " +
             n(t.sv_dos_window_us) + " us span is a denial of service on every message past "
             "the limit.";
    case RuleId::S_SYS_1:
      return "Each smpCnt must equal the last genuine smpCnt plus 1 (" + n(kSmpCntMax) +
             " wraps to 0); a skipped or repeated value is a system problem.";
  }
  return {};
}

inline std::string parameter_line(Protocol p, const TimingConfig& t) {
  if (p == Protocol::goose)
    return "Parameters: goose_dos_window_us=" + std::to_string(t.goose_dos_window_us) +
           ", goose_dos_max_packets=" + std::to_string(t.goose_dos_max_packets) +
           ", goose_heartbeat_max_gap_us=" + std::to_string(t.goose_heartbeat_max_gap_us);
  return "Parameters: sv_nominal_interval_us=" + num(t.sv_nominal_interval_us) +
         ", sv_interval_tolerance_pct=" + num(t.sv_interval_tolerance_pct) +
         ", sv_dos_window_us=" + std::to_string(t.sv_dos_window_us) +
         ", sv_dos_max_packets=" + std::to_string(t.sv_dos_max_packets);
}

}  // namespace llm_detail

/// One numbered sentence per enabled rule of `protocol`, each tagged with its
/// rule id, then a parameter line. Empty at the WITHOUT level.
inline std::string serialize_rules(const RuleSet& rules, Protocol protocol) {
  const auto ids = rules.enabled_rules(protocol);
  if (ids.empty()) return {};
  std::ostringstream os;
  os << "Rules:\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    os << (i + 1) << ". [" << rule_name(ids[i]) << "] "
       << llm_detail::rule_sentence(ids[i], rules.timing()) << '\n';
  os << llm_detail::parameter_line(protocol, rules.timing()) << '\n';
  return os.str();
}

/// Inverse of serialize_rules for text this library produced. nullopt when
/// the text is not in that shape.
inline std::optional<RuleSet> parse_rules_text(std::string_view text, Protocol protocol) {
  if (KeyValues::trim(text).empty()) return RuleSet(TrainingLevel::without);
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<RuleId> tags;
  TimingConfig t;
  bool have_params = false;
  while (std::getline(in, line)) {
    const auto open = line.find('[');
    const auto close = line.find(']');
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0])) &&
        open != std::string::npos && close != std::string::npos && open < close) {
      const auto id = parse_rule(std::string_view(line).substr(open + 1, close - open - 1));
      if (!id || rule_protocol(*id) != protocol) return std::nullopt;
      tags.insert(*id);
    } else if (line.rfind("Parameters:", 0) == 0) {
      have_params = true;
      std::string kv_text;
      for (const auto& item : KeyValues::split_list(std::string_view(line).substr(11)))
        kv_text += item + '\n';
      try {
        apply_timing_overrides(KeyValues::parse(kv_text), t);
        t.validate();
      } catch (const Error&) {
        return std::nullopt;
      }
    }
  }
  if (!have_params || tags.empty()) return std::nullopt;
  for (auto level : {TrainingLevel::partial, TrainingLevel::full}) {
    RuleSet rs(level, t);
    const auto ids = rs.enabled_rules(protocol);
    if (std::set<RuleId>(ids.begin(), ids.end()) == tags) return rs;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Record tables

namespace llm_detail {

inline std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

inline std::string hex4(std::uint16_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04x", v);
  return buf;
}

inline std::vector<std::string> row_cells(std::size_t row, const GooseRecord& r) {
  return {std::to_string(row), std::to_string(r.time_us), r.dm.to_string(), r.sm.to_string(),
          hex4(r.ethertype), hex4(r.appid), quoted(r.gocbRef), quoted(r.datSet),
          quoted(r.goID), std::to_string(r.stNum), std::to_string(r.sqNum),
          r.data1 ? "true" : "false", r.data2 ? "true" : "false"};
}

inline std::vector<std::string> row_cells(std::size_t row, const SvRecord& r) {
  return {std::to_string(row), std::to_string(r.time_us), r.dm.to_string(), r.sm.to_string(),
          hex4(r.ethertype), hex4(r.appid), quoted(r.svID), std::to_string(r.smpCnt)};
}

inline const std::vector<std::string>& columns(Protocol p) {
  static const std::vector<std::string> goose = {"row",   "time_us", "dm",     "sm",   "type",
                                                 "appid", "gocbRef", "datSet", "goID", "stNum",
                                                 "sqNum", "data1",   "data2"};
  static const std::vector<std::string> sv = {"row",  "time_us", "dm",   "sm",
                                              "type", "appid",   "svID", "smpCnt"};
  return p == Protocol::goose ? goose : sv;
}

/// Whitespace-separated tokens; a token starting with '"' runs to its
/// closing quote and is decoded as a JSON string.
inline std::optional<std::vector<std::string>> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ') {
      ++i;
      continue;
    }
    if (line[i] == '"') {
      std::size_t j = i + 1;
      while (j < line.size() && line[j] != '"') j += line[j] == '\\' ? 2 : 1;
      if (j >= line.size()) return std::nullopt;
      try {
        out.push_back(nlohmann::json::parse(line.substr(i, j - i + 1)).get<std::string>());
      } catch (const nlohmann::json::exception&) {
        return std::nullopt;
      }
      i = j + 1;
    } else {
      const auto j = std::min(line.find(' ', i), line.size());
      out.emplace_back(line.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

}  // namespace llm_detail

/// Fixed-width table of records [start, start+length). The header names the
/// protocol and absolute span; `capture_end_us` is appended when given.
template <FeatureRecord R>
std::string format_records_table(const Dataset<R>& d, std::size_t start, std::size_t length,
                                 std::optional<TimeUs> capture_end_us = std::nullopt) {
  std::vector<std::vector<std::string>> rows = {llm_detail::columns(R::protocol)};
  for (std::size_t k = 0; k < length; ++k) rows.push_back(llm_detail::row_cells(k, d.records[start + k]));
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::ostringstream os;
  os << protocol_name(R::protocol) << " records " << start << ".." << (start + length - 1)
     << " of " << d.size() << ", rows 0.." << (length - 1) << '\n';
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    os << line << '\n';
  }
  if (capture_end_us) os << "capture_end_us " << *capture_end_us << '\n';
  return os.str();
}

/// A record table read back: protocol, records in row order, capture end.
struct ParsedTable {
  Protocol protocol = Protocol::goose;
  std::vector<GooseRecord> goose;
  std::vector<SvRecord> sv;
  std::optional<TimeUs> capture_end_us;
};

/// Inverse of format_records_table. nullopt when the text is not a table.
inline std::optional<ParsedTable> parse_records_table(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  ParsedTable out;
  const auto space = line.find(' ');
  const auto proto = parse_protocol(line.substr(0, space));
  if (!proto) return std::nullopt;
  out.protocol = *proto;
  const auto& cols = llm_detail::columns(out.protocol);
  if (!std::getline(in, line)) return std::nullopt;
  if (auto head = llm_detail::tokenize(line); !head || *head != cols) return std::nullopt;

  auto number = [](const std::string& s, auto& v) {
    int base = 10;
    std::string_view sv = s;
    if (sv.rfind("0x", 0) == 0) {
      sv.remove_prefix(2);
      base = 16;
    }
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v, base);
    return ec == std::errc{} && p == sv.data() + sv.size();
  };
  auto boolean = [](const std::string& s, bool& b) {
    if (s != "true" && s != "false") return false;
    b = s == "true";
    return true;
  };

  std::size_t expected_row = 0;
  while (std::getline(in, line)) {
    if (line.rfind("capture_end_us ", 0) == 0) {
      TimeUs t = 0;
      if (!number(line.substr(15), t)) return std::nullopt;
      out.capture_end_us = t;
      continue;
    }
    if (KeyValues::trim(line).empty()) continue;
    auto cells = llm_detail::tokenize(line);
    if (!cells || cells->size() != cols.size()) return std::nullopt;
    const auto& c = *cells;
    std::size_t row = 0;
    if (!number(c[0], row) || row != expected_row++) return std::nullopt;
    auto dm = MacAddress::parse(c[2]);
    auto sm = MacAddress::parse(c[3]);
    if (!dm || !sm) return std::nullopt;
    bool ok = true;
    if (out.protocol == Protocol::goose) {
      GooseRecord r;
      r.dm = *dm;
      r.sm = *sm;
      ok = number(c[1], r.time_us) && number(c[4], r.ethertype) && number(c[5], r.appid) &&
           number(c[9], r.stNum) && number(c[10], r.sqNum) && boolean(c[11], r.data1) &&
           boolean(c[12], r.data2);
      r.gocbRef = c[6];
      r.datSet = c[7];
      r.goID = c[8];
      out.goose.push_back(std::move(r));
    } else {
      SvRecord r;
      r.dm = *dm;
      r.sm = *sm;
      ok = number(c[1], r.time_us) && number(c[4], r.ethertype) && number(c[5], r.appid) &&
           number(c[7], r.smpCnt);
      r.svID = c[6];
      out.sv.push_back(std::move(r));
    }
    if (!ok) return std::nullopt;
  }
  return out;
}

inline std::string system_prompt(Protocol p, TrainingLevel level) {
  std::string s = "You are an intrusion detection system for IEC 61850 " +
                  std::string(protocol_name(p)) +
                  " traffic captured in a substation. Each table row is one captured message; "
                  "rows are numbered from 0 within this prompt and later prompts continue the "
                  "same capture.\n";
  if (level != TrainingLevel::without)
    s += "Check every message against the rules given. Compare each message with the last "
         "genuine message of the same publisher (same sm, dm and " +
         std::string(p == Protocol::goose ? "gocbRef" : "svID") +
         "). A message that breaks a data injection or replay rule is not genuine and does not "
         "replace that reference.\n";
  s += "Answer with one JSON object {\"anomalies\": [row numbers]} listing every anomalous row "
       "and nothing else.\n";
  return s;
}

template <FeatureRecord R>
std::vector<PromptBundle> build_prompts(const Dataset<R>& d, const RuleSet& rules,
                                        const ChatClientConfig& cfg) {
  cfg.validate();
  const std::string sys = system_prompt(R::protocol, rules.level());
  const std::string rules_text = serialize_rules(rules, R::protocol);
  std::vector<PromptBundle> out;
  for (std::size_t start = 0, w = 0; start < d.size(); start += cfg.window_size, ++w) {
    const std::size_t len = std::min(cfg.window_size, d.size() - start);
    const bool last = start + len == d.size();
    PromptBundle b;
    b.system_text = sys;
    b.rules_text = rules_text;
    b.records_text = format_records_table(d, start, len, last ? d.meta.capture_end_us : std::nullopt);
    b.window_id = w;
    b.window_start = start;
    b.window_length = len;
    out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<PromptBundle> build_prompts(const LabeledDataset& d, const RuleSet& rules,
                                               const ChatClientConfig& cfg) {
  return std::visit([&](const auto& ds) { return build_prompts(ds, rules, cfg); }, d);
}

// ---------------------------------------------------------------------------
// Responses

/// Finds the first JSON object carrying an "anomalies" array, tolerating prose
/// and code fences around it. Throws unparseable-response when none exists.
inline DetectorResponse parse_response(std::string_view raw, std::size_t window_len) {
  DetectorResponse r;
  r.raw_text = std::string(raw);
  for (std::size_t open = raw.find('{'); open != std::string_view::npos;
       open = raw.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = open; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_string) {
        if (c == '\\')
          ++i;
        else if (c == '"')
          in_string = false;
      } else if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        end = i;
        break;
      }
    }
    if (end == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw.substr(open, end - open + 1));
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    if (!j.is_object() || !j.contains("anomalies") || !j["anomalies"].is_array()) continue;
    for (const auto& v : j["anomalies"]) {
      if (v.is_number_unsigned() && v.get<std::uint64_t>() < window_len) {
        r.anomalous_indices.insert(static_cast<std::size_t>(v.get<std::uint64_t>()));
      } else {
        r.warnings.push_back("dropped index " + v.dump() + " outside 0.." +
                             std::to_string(window_len ? window_len - 1 : 0));
      }
    }
    return r;
  }
  throw Error(Errc::unparseable_response, "no {\"anomalies\": [...]} object in reply");
}

inline std::string format_response(const std::set<std::size_t>& rows) {
  nlohmann::json j = {{"anomalies", nlohmann::json::array()}};
  for (auto r : rows) j["anomalies"].push_back(r);
  return j.dump();
}

// ---------------------------------------------------------------------------
// Clients

/// Text in, text out. Transport failures throw Error(io_error).
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const PromptBundle& prompt) = 0;
};

/// Replays numbered reply files: the first run of digits in each file name is
/// the window id.
class FixtureClient : public ChatClient {
 public:
  explicit FixtureClient(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
      throw Error(Errc::io_error, "fixture directory not found: " + dir.string());
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const auto name = e.path().filename().string();
      const auto b = name.find_first_of("0123456789");
      if (b == std::string::npos) continue;
      std::size_t id = 0;
      std::from_chars(name.data() + b, name.data() + name.size(), id);
      if (files_.count(id))
        throw Error(Errc::schema_error, "two fixture files for window " + std::to_string(id),
                    std::nullopt, name);
      files_[id] = e.path();
    }
  }

  std::string complete(const PromptBundle& p) override {
    auto it = files_.find(p.window_id);
    if (it == files_.end())
      throw Error(Errc::io_error, "no fixture for window " + std::to_string(p.window_id));
    std::ifstream in(it->second, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

 private:
  std::map<std::size_t, std::filesystem::path> files_;
};

/// Answers from a fixed per-record prediction vector. Windows listed in
/// `malformed` get a reply with no JSON.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::vector<bool> predictions, std::set<std::size_t> malformed = {})
      : predictions_(std::move(predictions)), malformed_(std::move(malformed)) {}

  std::string complete(const PromptBundle& p) override {
    if (malformed_.count(p.window_id)) return "I could not decide on this window.";
    std::set<std::size_t> rows;
    for (std::size_t k = 0; k < p.window_length; ++k)
      if (p.window_start + k < predictions_.size() && predictions_[p.window_start + k])
        rows.insert(k);
    return "```json\n" + format_response(rows) + "\n```";
  }

 private:
  std::vector<bool> predictions_;
  std::set<std::size_t> malformed_;
};

/// Offline stand-in that reads the prompt back and answers with the rule
/// engine's verdicts. Stream state persists across windows, so one instance
/// serves one pass over one dataset.
class RulesMockClient : public ChatClient {
 public:
  std::string complete(const PromptBundle& p) override {
    auto table = parse_records_table(p.records_text);
    if (!table) return "The record table could not be read.";
    auto rules = parse_rules_text(p.rules_text, table->protocol);
    if (!rules) return "The rules could not be read.";

    std::vector<Verdict> verdicts;
    auto run = [&](const auto& recs) {
      for (std::size_t k = 0; k < recs.size(); ++k) {
        auto& [state, last] = streams_[stream_key(recs[k])];
        advance(state, recs[k], *rules, k, verdicts);
        last = p.window_start + k;
      }
    };
    if (table->protocol == Protocol::goose)
      run(table->goose);
    else
      run(table->sv);

    std::set<std::size_t> rows;
    for (const auto& v : verdicts) rows.insert(v.record_index);
    if (table->protocol == Protocol::goose && table->capture_end_us &&
        rules->enabled(RuleId::G_SYS_1)) {
      for (const auto& [key, entry] : streams_) {
        const auto& [state, last] = entry;
        if (last >= p.window_start &&
            *table->capture_end_us - *state.last_time_us > rules->timing().goose_heartbeat_max_gap_us)
          rows.insert(last - p.window_start);
      }
    }
    return format_response(rows);
  }

 private:
  std::map<StreamKey, std::pair<StreamState, std::size_t>> streams_;
};

// ---------------------------------------------------------------------------
// Pipeline

struct TranscriptEntry {
  std::size_t window_id = 0;
  std::size_t window_start = 0;
  std::size_t window_length = 0;
  std::uint32_t attempt = 0;
  std::string status;  // ok, unparseable-response, transport-error
  std::string system_text;
  std::string user_text;
  std::string response;
  std::string error;
};

struct LlmRun {
  std::vector<bool> predictions;
  std::vector<TranscriptEntry> transcript;
  std::vector<std::string> warnings;
  std::vector<std::size_t> failed_windows;
  std::vector<std::size_t> unparseable_windows;
};

inline nlohmann::ordered_json transcript_json(const TranscriptEntry& e) {
  return {{"window", e.window_id},       {"start", e.window_start}, {"length", e.window_length},
          {"attempt", e.attempt},         {"status", e.status},      {"system", e.system_text},
          {"user", e.user_text},          {"response", e.response},  {"error", e.error}};
}

inline void write_transcript_jsonl(const std::vector<TranscriptEntry>& t, std::ostream& out) {
  for (const auto& e : t) out << transcript_json(e).dump() << '\n';
}

/// Sends each window in order, retrying transport failures up to
/// cfg.max_retries times. Failed and unparseable windows score all-normal.
inline LlmRun detect_llm(const std::vector<PromptBundle>& prompts, std::size_t n_records,
                         const ChatClientConfig& cfg, ChatClient& client) {
  LlmRun run;
  run.predictions.assign(n_records, false);
  for (const auto& p : prompts) {
    bool done = false;
    for (std::uint32_t attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      TranscriptEntry e{p.window_id, p.window_start, p.window_length, attempt, "ok",
                        p.system_text, p.user_text(), {}, {}};
      try {
        e.response = client.complete(p);
      } catch (const Error& err) {
        e.status = "transport-error";
        e.error = err.what();
        run.transcript.push_back(std::move(e));
        continue;
      }
      done = true;
      try {
        auto r = parse_response(e.response, p.window_length);
        for (auto k : r.anomalous_indices) run.predictions[p.window_start + k] = true;
        for (auto& w : r.warnings)
          run.warnings.push_back("window " + std::to_string(p.window_id) + ": " + w);
      } catch (const Error& err) {
        e.status = std::string(errc_name(err.code()));
        e.error = err.what();
        run.unparseable_windows.push_back(p.window_id);
        run.warnings.push_back("window " + std::to_string(p.window_id) +
                               ": unparseable reply, scored all-normal");
      }
      run.transcript.push_back(std::move(e));
    }
    if (!done) {
      run.failed_windows.push_back(p.window_id);
      run.warnings.push_back("window " + std::to_string(p.window_id) + ": " +
                             std::string(errc_name(Errc::window_failed)) + " after " +
                             std::to_string(cfg.max_retries + 1) + " attempts, scored all-normal");
    }
  }
  return run;
}

template <FeatureRecord R>
LlmRun detect_llm(const Dataset<R>& d, const RuleSet& rules, const ChatClientConfig& cfg,
                  ChatClient& client) {
  return detect_llm(build_prompts(d, rules, cfg), d.size(), cfg, client);
}

inline LlmRun detect_llm(const LabeledDataset& d, const RuleSet& rules,
                         const ChatClientConfig& cfg, ChatClient& client) {
  return std::visit([&](const auto& ds) { return detect_llm(ds, rules, cfg, client); }, d);
}

}  // namespace gridsentry
