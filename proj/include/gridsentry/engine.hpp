#pragma once

// Stateful per-stream rule engine.
//
// Each stream keeps a *reference* publisher state: the counters and data of
// the last record that did not look spoofed (no DI or replay condition held).
// Sequence rules compare against the reference, so one forged frame does not
// make the next genuine frame look anomalous. Arrival time and the DoS window
// always advance, whatever the record's verdicts. The state machine evaluates
// every rule condition regardless of the training level; the level only
// decides which verdicts are reported, so lower levels report subsets.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gridsentry/error.hpp"
#include "gridsentry/records.hpp"
#include "gridsentry/rules.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

struct Verdict {
  std::size_t record_index = 0;
  AnomalyClass klass = AnomalyClass::data_injection;
  RuleId rule = RuleId::G_DI_1;
  std::string explanation;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// True iff `next` is the sample counter that must follow `prev`: prev + 1,
/// or 0 after 4799. Both values must lie in 0..4799.
constexpr bool is_cyclic_successor(std::uint32_t prev, std::uint32_t next) noexcept {
  if (prev > kSmpCntMax || next > kSmpCntMax) return false;
  return next == (prev == kSmpCntMax ? 0u : prev + 1);
}

/// Sliding "at most N packets in any W" counter. A packet is flagged when, at
/// its arrival, more than N packets (itself included) lie within W of it.
class BurstWindow {
 public:
  /// Returns the number of packets inside the window ending at `t`.
  std::size_t push(TimeUs t, TimeUs window_us) {
    while (!times_.empty() && t - times_.front() > window_us) times_.pop_front();
    times_.push_back(t);
    return times_.size();
  }

  const std::deque<TimeUs>& times() const noexcept { return times_; }

  friend bool operator==(const BurstWindow&, const BurstWindow&) = default;

 private:
  std::deque<TimeUs> times_;
};

struct StreamState {
  std::optional<StreamKey> key;
  std::size_t records_seen = 0;
  std::optional<TimeUs> last_time_us;
  BurstWindow dos_window;

  // Reference publisher state.
  bool has_reference = false;
  std::uint32_t last_st_num = 0;
  std::uint32_t last_sq_num = 0;
  bool last_data1 = false;
  bool last_data2 = false;
  std::uint16_t last_smp_cnt = 0;

  // GOOSE (stNum, sqNum, data bits) triples the publisher has emitted.
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint8_t>> history;

  friend bool operator==(const StreamState&, const StreamState&) = default;
};

struct StepResult {
  StreamState state;
  std::vector<Verdict> verdicts;
};

namespace engine_detail {

class Emitter {
 public:
  Emitter(const RuleSet& rules, std::size_t index, std::vector<Verdict>& out)
      : rules_(rules), index_(index), out_(out) {}

  template <class... Parts>
  void fire(RuleId id, const Parts&... parts) {
    if (!rules_.enabled(id)) return;
    std::ostringstream os;
    (os << ... << parts);
    out_.push_back({index_, rule_class(id), id, os.str()});
  }

 private:
  const RuleSet& rules_;
  std::size_t index_;
  std::vector<Verdict>& out_;
};

template <FeatureRecord R>
void admit(StreamState& s, const R& rec) {
  StreamKey k = stream_key(rec);
  if (!s.key) {
    s.key = std::move(k);
  } else if (*s.key != k) {
    throw Error(Errc::wrong_stream, "record belongs to a different stream");
  }
  if (s.last_time_us && rec.time_us < *s.last_time_us)
    throw Error(Errc::input_order_error,
                "time " + std::to_string(rec.time_us) + " precedes " +
                    std::to_string(*s.last_time_us));
}

inline const char* tf(bool b) { return b ? "T" : "F"; }

}  // namespace engine_detail

/// Advances `s` by one GOOSE record, appending verdicts to `out`.
inline void advance(StreamState& s, const GooseRecord& rec, const RuleSet& rules,
                    std::size_t index, std::vector<Verdict>& out) {
  using engine_detail::tf;
  engine_detail::admit(s, rec);
  engine_detail::Emitter emit(rules, index, out);
  const auto& t = rules.timing();

  const auto in_window = s.dos_window.push(rec.time_us, t.goose_dos_window_us);
  if (in_window > t.goose_dos_max_packets)
    emit.fire(RuleId::G_DOS_1, in_window, " packets within ", t.goose_dos_window_us,
              " us, allowed at most ", t.goose_dos_max_packets);

  if (s.last_time_us && rec.time_us - *s.last_time_us > t.goose_heartbeat_max_gap_us)
    emit.fire(RuleId::G_SYS_1, "silence of ", rec.time_us - *s.last_time_us,
              " us before this packet, expected one within ", t.goose_heartbeat_max_gap_us,
              " us");

  const std::uint8_t bits = static_cast<std::uint8_t>(rec.data1 | rec.data2 << 1);
  bool spoofed = false;
  if (s.has_reference) {
    // An unaltered older message is a replay; the DI rules judge everything
    // else.
    const bool replay = std::pair(rec.stNum, rec.sqNum) < std::pair(s.last_st_num, s.last_sq_num) &&
                        s.history.count({rec.stNum, rec.sqNum, bits});
    const bool data_changed = rec.data1 != s.last_data1 || rec.data2 != s.last_data2;
    if (replay) {
      spoofed = true;
      emit.fire(RuleId::G_RE_1, "unaltered copy of earlier state stNum ", rec.stNum,
                " sqNum ", rec.sqNum, " after stNum ", s.last_st_num, " sqNum ",
                s.last_sq_num, " was observed");
    } else {
      if (rec.stNum < s.last_st_num) {
        spoofed = true;
        emit.fire(RuleId::G_DI_3, "stNum went back from ", s.last_st_num, " to ", rec.stNum);
      }
      if (data_changed && !(std::uint64_t{rec.stNum} == std::uint64_t{s.last_st_num} + 1 &&
                            rec.sqNum == 0)) {
        spoofed = true;
        emit.fire(RuleId::G_DI_2, "data changed (", tf(s.last_data1), ",", tf(s.last_data2),
                  ")->(", tf(rec.data1), ",", tf(rec.data2), "): expected stNum ",
                  std::uint64_t{s.last_st_num} + 1, " and sqNum 0, observed stNum ", rec.stNum,
                  " and sqNum ", rec.sqNum);
      }
      if (!data_changed && rec.stNum == s.last_st_num && rec.sqNum <= s.last_sq_num) {
        spoofed = true;
        emit.fire(RuleId::G_DI_1, "sqNum did not increase: expected > ", s.last_sq_num,
                  ", observed ", rec.sqNum, " (stNum ", rec.stNum, ", data unchanged)");
      }
    }
  }

  s.last_time_us = rec.time_us;
  ++s.records_seen;
  if (!spoofed) {
    s.has_reference = true;
    s.last_st_num = rec.stNum;
    s.last_sq_num = rec.sqNum;
    s.last_data1 = rec.data1;
    s.last_data2 = rec.data2;
    s.history.insert({rec.stNum, rec.sqNum, bits});
  }
}

/// Advances `s` by one SV record, appending verdicts to `out`.
inline void advance(StreamState& s, const SvRecord& rec, const RuleSet& rules,
                    std::size_t index, std::vector<Verdict>& out) {
  engine_detail::admit(s, rec);
  engine_detail::Emitter emit(rules, index, out);
  const auto& t = rules.timing();

  if (s.last_time_us) {
    const auto gap = rec.time_us - *s.last_time_us;
    if (static_cast<double>(gap) < t.sv_min_interval_us())
      emit.fire(RuleId::S_DOS_1, "inter-arrival ", gap, " us, nominal ", t.sv_nominal_interval_us,
                " us, minimum ", t.sv_min_interval_us(), " us");
  }
  const auto in_window = s.dos_window.push(rec.time_us, t.sv_dos_window_us);
  if (in_window > t.sv_dos_max_packets)
    emit.fire(RuleId::S_DOS_2, in_window, " packets within ", t.sv_dos_window_us,
              " us, allowed at most ", t.sv_dos_max_packets);

  const std::uint32_t cur = rec.smpCnt;
  bool spoofed = false;
  if (cur > kSmpCntMax) {
    spoofed = true;
    emit.fire(RuleId::S_DI_1, "smpCnt ", cur, " outside 0..", kSmpCntMax);
  } else if (s.has_reference) {
    const std::uint32_t prev = s.last_smp_cnt;
    if (prev == kSmpCntMax && cur != 0) {
      spoofed = true;
      emit.fire(RuleId::S_DI_2, "smpCnt must reset to 0 after ", kSmpCntMax, ", observed ", cur);
    } else if (cur == 0 && prev != kSmpCntMax) {
      spoofed = true;
      emit.fire(RuleId::S_DI_2, "smpCnt reset to 0 from ", prev, " before reaching ", kSmpCntMax);
    }
    if (cur < prev && !(prev == kSmpCntMax && cur == 0)) {
      spoofed = true;
      emit.fire(RuleId::S_DI_3, "smpCnt decreased from ", prev, " to ", cur);
    }
    if (!is_cyclic_successor(prev, cur))
      emit.fire(RuleId::S_SYS_1, "smpCnt step ", prev, "->", cur, ", expected ",
                prev == kSmpCntMax ? 0u : prev + 1);
  }

  s.last_time_us = rec.time_us;
  ++s.records_seen;
  if (!spoofed) {
    s.has_reference = true;
    s.last_smp_cnt = static_cast<std::uint16_t>(cur);
  }
}

inline StepResult step_goose(StreamState state, const GooseRecord& rec, const RuleSet& rules,
                             std::size_t record_index = 0) {
  StepResult r{std::move(state), {}};
  advance(r.state, rec, rules, record_index, r.verdicts);
  return r;
}

inline StepResult step_sv(StreamState state, const SvRecord& rec, const RuleSet& rules,
                          std::size_t record_index = 0) {
  StepResult r{std::move(state), {}};
  advance(r.state, rec, rules, record_index, r.verdicts);
  return r;
}

/// Deterministic verdict order: record index, then rule id.
inline void sort_verdicts(std::vector<Verdict>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Verdict& a, const Verdict& b) {
    return std::pair(a.record_index, a.rule) < std::pair(b.record_index, b.rule);
  });
}

/// Runs the stepper over every stream of `d` in record order.
template <FeatureRecord R>
std::vector<Verdict> detect_batch(const Dataset<R>& d, const RuleSet& rules) {
  std::vector<Verdict> out;
  std::map<StreamKey, std::pair<StreamState, std::size_t>> streams;  // state, last index
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    auto& [state, last] = streams[stream_key(d.records[i])];
    advance(state, d.records[i], rules, i, out);
    last = i;
  }
  if constexpr (R::protocol == Protocol::goose) {
    // Silence between a stream's last packet and the known end of capture.
    const auto& t = rules.timing();
    if (d.meta.capture_end_us && rules.enabled(RuleId::G_SYS_1)) {
      for (const auto& [key, entry] : streams) {
        const auto& [state, last] = entry;
        const auto gap = *d.meta.capture_end_us - *state.last_time_us;
        if (gap > t.goose_heartbeat_max_gap_us)
          out.push_back({last, AnomalyClass::system_problem, RuleId::G_SYS_1,
                         "silence of " + std::to_string(gap) +
                             " us after this packet until capture end"});
      }
    }
  }
  sort_verdicts(out);
  return out;
}

inline std::vector<Verdict> detect_batch(const LabeledDataset& d, const RuleSet& rules) {
  return std::visit([&](const auto& ds) { return detect_batch(ds, rules); }, d);
}

/// Position i is true iff at least one verdict targets record i.
inline std::vector<bool> verdicts_to_predictions(std::span<const Verdict> verdicts,
                                                 std::size_t n_records) {
  std::vector<bool> p(n_records, false);
  for (const auto& v : verdicts) {
    if (v.record_index >= n_records)
      throw Error(Errc::invariant_violation, "verdict targets a record past the end",
                  v.record_index);
    p[v.record_index] = true;
  }
  return p;
}

}  // namespace gridsentry
