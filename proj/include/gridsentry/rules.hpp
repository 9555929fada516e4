#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gridsentry/error.hpp"
#include "gridsentry/keyvalue.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

/// One identifier per expert recommendation. G_* apply to GOOSE streams, S_*
/// to SV streams.
enum class RuleId : std::uint8_t {
  G_DI_1,   // sqNum increases while stNum and data are unchanged
  G_DI_2,   // a data change comes with stNum + 1 and sqNum = 0
  G_DI_3,   // stNum never decreases
  G_DOS_1,  // at most 10 packets in any 10 ms
  G_SYS_1,  // no silence longer than 10 s
  G_RE_1,   // an older (stNum, sqNum, data) never resurfaces
  S_DI_1,   // smpCnt within 0..4799
  S_DI_2,   // wrap happens exactly 4799 -> 0
  S_DI_3,   // no decrease other than the wrap
  S_DOS_1,  // inter-arrival not far below the nominal 1/4800 s
  S_DOS_2,  // at most 12 packets in any 2.083 ms
  S_SYS_1,  // every step is the cyclic +1
};

inline constexpr std::size_t kRuleCount = 12;

inline constexpr std::array<RuleId, kRuleCount> kAllRules = {
    RuleId::G_DI_1, RuleId::G_DI_2,  RuleId::G_DI_3,  RuleId::G_DOS_1,
    RuleId::G_SYS_1, RuleId::G_RE_1, RuleId::S_DI_1,  RuleId::S_DI_2,
    RuleId::S_DI_3, RuleId::S_DOS_1, RuleId::S_DOS_2, RuleId::S_SYS_1};

constexpr std::string_view rule_name(RuleId id) noexcept {
  constexpr std::array<std::string_view, kRuleCount> names = {
      "G_DI_1", "G_DI_2", "G_DI_3", "G_DOS_1", "G_SYS_1", "G_RE_1",
      "S_DI_1", "S_DI_2", "S_DI_3", "S_DOS_1", "S_DOS_2", "S_SYS_1"};
  return names[static_cast<std::size_t>(id)];
}

inline std::optional<RuleId> parse_rule(std::string_view s) {
  for (auto id : kAllRules)
    if (rule_name(id) == s) return id;
  return std::nullopt;
}

constexpr Protocol rule_protocol(RuleId id) noexcept {
  return static_cast<std::uint8_t>(id) < 6 ? Protocol::goose : Protocol::sv;
}

/// The anomaly class a rule reports.
constexpr AnomalyClass rule_class(RuleId id) noexcept {
  switch (id) {
    case RuleId::G_DI_1:
    case RuleId::G_DI_2:
    case RuleId::G_DI_3:
    case RuleId::S_DI_1:
    case RuleId::S_DI_2:
    case RuleId::S_DI_3: return AnomalyClass::data_injection;
    case RuleId::G_DOS_1:
    case RuleId::S_DOS_1:
    case RuleId::S_DOS_2: return AnomalyClass::dos;
    case RuleId::G_SYS_1:
    case RuleId::S_SYS_1: return AnomalyClass::system_problem;
    case RuleId::G_RE_1: return AnomalyClass::replay;
  }
  return AnomalyClass::normal;
}

/// Human-recommendation coverage: none, DI + DoS only, or everything.
enum class TrainingLevel : std::uint8_t { without, partial, full };

constexpr std::string_view level_name(TrainingLevel l) noexcept {
  switch (l) {
    case TrainingLevel::without: return "without";
    case TrainingLevel::partial: return "partial";
    case TrainingLevel::full: return "full";
  }
  return "without";
}

inline std::optional<TrainingLevel> parse_level(std::string_view s) {
  if (s == "without") return TrainingLevel::without;
  if (s == "partial") return TrainingLevel::partial;
  if (s == "full") return TrainingLevel::full;
  return std::nullopt;
}

/// Timing knobs. All values are independent; none is derived from another.
struct TimingConfig {
  std::int64_t goose_dos_window_us = 10'000;
  std::uint32_t goose_dos_max_packets = 10;
  std::int64_t goose_heartbeat_max_gap_us = 10'000'000;
  /// 1 s / 4800 samples. Kept fractional so the tolerance band is exact.
  double sv_nominal_interval_us = 1e6 / 4800.0;
  std::int64_t sv_dos_window_us = 2'083;
  std::uint32_t sv_dos_max_packets = 12;
  double sv_interval_tolerance_pct = 50.0;

  /// Inter-arrival below this is an SV flooding symptom.
  double sv_min_interval_us() const noexcept {
    return sv_nominal_interval_us * (1.0 - sv_interval_tolerance_pct / 100.0);
  }

  void validate() const {
    if (goose_dos_window_us <= 0 || goose_dos_max_packets == 0 ||
        goose_heartbeat_max_gap_us <= 0 || !(sv_nominal_interval_us > 0) ||
        sv_dos_window_us <= 0 || sv_dos_max_packets == 0 || !(sv_interval_tolerance_pct > 0) ||
        !(sv_interval_tolerance_pct < 100))
      throw Error(Errc::invariant_violation, "timing thresholds must be strictly positive");
  }

  friend bool operator==(const TimingConfig&, const TimingConfig&) = default;
};

/// A training level plus the rules it enables. The enabled set is a function
/// of the level: WITHOUT enables nothing, PARTIAL the DI and DoS rules, FULL
/// all twelve.
class RuleSet {
 public:
  RuleSet() = default;
  explicit RuleSet(TrainingLevel level, TimingConfig timing = {})
      : level_(level), timing_(timing) {
    timing_.validate();
    for (auto id : kAllRules) {
      const auto k = rule_class(id);
      const bool on = level == TrainingLevel::full ||
                      (level == TrainingLevel::partial &&
                       (k == AnomalyClass::data_injection || k == AnomalyClass::dos));
      enabled_.set(static_cast<std::size_t>(id), on);
    }
  }

  TrainingLevel level() const noexcept { return level_; }
  const TimingConfig& timing() const noexcept { return timing_; }
  bool enabled(RuleId id) const noexcept { return enabled_.test(static_cast<std::size_t>(id)); }

  std::vector<RuleId> enabled_rules(std::optional<Protocol> only = {}) const {
    std::vector<RuleId> out;
    for (auto id : kAllRules)
      if (enabled(id) && (!only || rule_protocol(id) == *only)) out.push_back(id);
    return out;
  }

  friend bool operator==(const RuleSet& a, const RuleSet& b) {
    return a.level_ == b.level_ && a.timing_ == b.timing_ && a.enabled_ == b.enabled_;
  }

 private:
  TrainingLevel level_ = TrainingLevel::without;
  TimingConfig timing_;
  std::bitset<kRuleCount> enabled_;
};

namespace rules_detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline const std::vector<std::string_view>& timing_keys() {
  static const std::vector<std::string_view> keys = {
      "goose_dos_window_us",       "goose_dos_max_packets", "goose_heartbeat_max_gap_us",
      "sv_nominal_interval_us",    "sv_dos_window_us",      "sv_dos_max_packets",
      "sv_interval_tolerance_pct"};
  return keys;
}

}  // namespace rules_detail

/// Applies any timing overrides present in `kv`.
inline void apply_timing_overrides(const KeyValues& kv, TimingConfig& t) {
  kv.get_number("goose_dos_window_us", t.goose_dos_window_us);
  kv.get_number("goose_dos_max_packets", t.goose_dos_max_packets);
  kv.get_number("goose_heartbeat_max_gap_us", t.goose_heartbeat_max_gap_us);
  kv.get_number("sv_nominal_interval_us", t.sv_nominal_interval_us);
  kv.get_number("sv_dos_window_us", t.sv_dos_window_us);
  kv.get_number("sv_dos_max_packets", t.sv_dos_max_packets);
  kv.get_number("sv_interval_tolerance_pct", t.sv_interval_tolerance_pct);
}

/// Rule-set file text: level, enabled ids and every timing threshold.
inline std::string format_ruleset(const RuleSet& rs) {
  const auto& t = rs.timing();
  std::ostringstream os;
  os << "# gridsentry rule set\n";
  os << "level = " << level_name(rs.level()) << '\n';
  os << "enabled =";
  const auto ids = rs.enabled_rules();
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : " ") << rule_name(ids[i]);
  os << '\n';
  os << "goose_dos_window_us = " << t.goose_dos_window_us << '\n';
  os << "goose_dos_max_packets = " << t.goose_dos_max_packets << '\n';
  os << "goose_heartbeat_max_gap_us = " << t.goose_heartbeat_max_gap_us << '\n';
  os << "sv_nominal_interval_us = " << rules_detail::format_double(t.sv_nominal_interval_us) << '\n';
  os << "sv_dos_window_us = " << t.sv_dos_window_us << '\n';
  os << "sv_dos_max_packets = " << t.sv_dos_max_packets << '\n';
  os << "sv_interval_tolerance_pct = " << rules_detail::format_double(t.sv_interval_tolerance_pct)
     << '\n';
  return os.str();
}

/// Parses rule-set text. `enabled`, when present, must list exactly the rules
/// implied by `level`.
inline RuleSet parse_ruleset(const KeyValues& kv) {
  std::vector<std::string_view> known = {"level", "enabled"};
  for (auto k : rules_detail::timing_keys()) known.push_back(k);
  kv.expect_only(known);

  const auto* lv = kv.find("level");
  if (!lv) throw Error(Errc::schema_error, "missing level", std::nullopt, "level");
  const auto level = parse_level(lv->value);
  if (!level) throw Error(Errc::schema_error, "level must be without|partial|full", lv->line, "level");

  TimingConfig t;
  apply_timing_overrides(kv, t);
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(Errc::schema_error, e.detail(), std::nullopt, "timing");
  }
  RuleSet rs(*level, t);

  if (const auto* en = kv.find("enabled")) {
    std::bitset<kRuleCount> listed;
    for (const auto& name : KeyValues::split_list(en->value)) {
      auto id = parse_rule(name);
      if (!id) throw Error(Errc::schema_error, "unknown rule id " + name, en->line, "enabled");
      listed.set(static_cast<std::size_t>(*id));
    }
    for (auto id : kAllRules)
      if (listed.test(static_cast<std::size_t>(id)) != rs.enabled(id))
        throw Error(Errc::schema_error,
                    "enabled rules disagree with level " + std::string(level_name(*level)),
                    en->line, "enabled");
  }
  return rs;
}

inline RuleSet load_ruleset(const std::filesystem::path& path) {
  return parse_ruleset(KeyValues::load(path));
}

}  // namespace gridsentry
