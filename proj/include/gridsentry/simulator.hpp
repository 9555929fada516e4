#pragma once

// Labeled scenario generation: clean GOOSE/SV publisher streams plus
// injected anomalies with ground truth.
//
// Injected frames (DI, DoS, replay) are inserted into a *slot*: the span after
// a genuine record `a` and before the next genuine record `b` of the same
// stream. Each forged frame is built from `a`, so it breaks at least one rule
// relative to the publisher's real state. If the insertion would crowd a later
// genuine frame into a DoS window or below the SV minimum spacing, the rest of
// that stream is delayed by the smallest shift that avoids it. System problems
// delete genuine frames and label the first frame after the hole.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "gridsentry/codec.hpp"
#include "gridsentry/error.hpp"
#include "gridsentry/keyvalue.hpp"
#include "gridsentry/records.hpp"
#include "gridsentry/rules.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

struct Injection {
  AnomalyClass klass = AnomalyClass::data_injection;
  std::uint32_t count = 0;

  friend bool operator==(const Injection&, const Injection&) = default;
};

struct ScenarioConfig {
  Protocol protocol = Protocol::goose;
  TimeUs duration_us = 10'000'000;
  std::uint64_t seed = 0;
  TimeUs start_us = 0;
  TimeUs goose_heartbeat_us = 2'000'000;
  std::uint32_t goose_event_count = 0;
  std::uint32_t sv_rate_hz = 4800;
  /// Each timestamp is displaced by up to +/- jitter_pct/2 of its nominal
  /// interval, so consecutive intervals stay within +/- jitter_pct.
  double jitter_pct = 0.0;
  std::vector<Injection> injections;
  std::string scenario;
  /// Thresholds the injector keeps genuine frames clear of.
  TimingConfig timing;
};

// ---------------------------------------------------------------------------
// Randomness

/// Seeded source with portable bounded draws (std distributions differ across
/// standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = eng_();
    while (x >= limit);
    return x % n;
  }

  /// Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool coin() { return eng_() >> 63; }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 eng_;
};

/// splitmix64 finalizer; derives independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Text forms

inline std::optional<AnomalyClass> parse_injection_class(std::string_view s) {
  if (s == "di" || s == "DI" || s == "DATA_INJECTION") return AnomalyClass::data_injection;
  if (s == "dos" || s == "DOS") return AnomalyClass::dos;
  if (s == "sys" || s == "SYS" || s == "SYSTEM_PROBLEM") return AnomalyClass::system_problem;
  if (s == "re" || s == "RE" || s == "REPLAY") return AnomalyClass::replay;
  return std::nullopt;
}

constexpr std::string_view injection_class_token(AnomalyClass c) noexcept {
  switch (c) {
    case AnomalyClass::data_injection: return "di";
    case AnomalyClass::dos: return "dos";
    case AnomalyClass::system_problem: return "sys";
    case AnomalyClass::replay: return "re";
    case AnomalyClass::normal: break;
  }
  return "normal";
}

/// "dos:2,di:3" -> [{DOS,2},{DI,3}].
inline std::vector<Injection> parse_injections(std::string_view text) {
  std::vector<Injection> out;
  for (const auto& item : KeyValues::split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw Error(Errc::schema_error, "expected class:count, got " + item, std::nullopt, "inject");
    const auto k = parse_injection_class(KeyValues::trim(std::string_view(item).substr(0, colon)));
    if (!k) throw Error(Errc::schema_error, "unknown anomaly class in " + item, std::nullopt, "inject");
    const auto num = KeyValues::trim(std::string_view(item).substr(colon + 1));
    std::uint32_t n = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), n);
    if (ec != std::errc{} || p != num.data() + num.size())
      throw Error(Errc::schema_error, "bad count in " + item, std::nullopt, "inject");
    out.push_back({*k, n});
  }
  return out;
}

inline std::string format_injections(const std::vector<Injection>& v) {
  std::string s;
  for (const auto& i : v) {
    if (!s.empty()) s += ',';
    s += std::string(injection_class_token(i.klass)) + ':' + std::to_string(i.count);
  }
  return s;
}

/// "10s", "500ms", "250us" or a bare microsecond count.
inline std::optional<TimeUs> parse_duration_us(std::string_view text) {
  text = KeyValues::trim(text);
  std::int64_t scale = 1;
  if (text.ends_with("us")) {
    text.remove_suffix(2);
  } else if (text.ends_with("ms")) {
    text.remove_suffix(2);
    scale = 1'000;
  } else if (text.ends_with("s")) {
    text.remove_suffix(1);
    scale = 1'000'000;
  }
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || p != text.data() + text.size() || v < 0)
    return std::nullopt;
  const double us = std::round(v * static_cast<double>(scale));
  if (us > 9.2e18) return std::nullopt;
  return static_cast<TimeUs>(us);
}

/// Reads a scenario file (key = value). Durations accept us/ms/s suffixes.
inline ScenarioConfig parse_scenario(const KeyValues& kv) {
  kv.expect_only({"protocol", "duration", "seed", "start", "heartbeat", "events", "sv_rate_hz",
                  "jitter_pct", "inject", "scenario"});
  ScenarioConfig c;
  std::string s;
  auto duration = [&](const char* key, TimeUs& out) {
    if (!kv.get_string(key, s)) return;
    auto v = parse_duration_us(s);
    if (!v) throw Error(Errc::schema_error, "bad duration " + s, kv.find(key)->line, key);
    out = *v;
  };
  duration("duration", c.duration_us);
  duration("start", c.start_us);
  duration("heartbeat", c.goose_heartbeat_us);
  if (kv.get_string("protocol", s)) {
    auto p = parse_protocol(s);
    if (!p) throw Error(Errc::schema_error, "protocol must be goose or sv", std::nullopt, "protocol");
    c.protocol = *p;
  }
  kv.get_number("seed", c.seed);
  kv.get_number("events", c.goose_event_count);
  kv.get_number("sv_rate_hz", c.sv_rate_hz);
  kv.get_number("jitter_pct", c.jitter_pct);
  if (kv.get_string("inject", s)) c.injections = parse_injections(s);
  kv.get_string("scenario", c.scenario);
  return c;
}

namespace sim_detail {

inline void check_config(const ScenarioConfig& c) {
  if (c.duration_us <= 0) throw Error(Errc::invariant_violation, "duration must be positive");
  if (c.start_us < 0) throw Error(Errc::invariant_violation, "start time must be non-negative");
  if (c.sv_rate_hz == 0) throw Error(Errc::invariant_violation, "sv_rate_hz must be positive");
  if (c.goose_heartbeat_us <= 0)
    throw Error(Errc::invariant_violation, "heartbeat must be positive");
  if (!(c.jitter_pct >= 0.0 && c.jitter_pct <= 40.0))
    throw Error(Errc::invariant_violation, "jitter_pct must lie in [0, 40]");
}

/// Random displacement in [-j, j] with j = interval * jitter_pct / 200.
inline TimeUs jitter(Rng& rng, double interval_us, double jitter_pct) {
  const auto j = static_cast<TimeUs>(std::floor(interval_us * jitter_pct / 200.0));
  return j > 0 ? rng.between(-j, j) : 0;
}

inline std::string default_scenario_name(const ScenarioConfig& c) {
  if (!c.scenario.empty()) return c.scenario;
  std::string s = c.protocol == Protocol::goose ? "goose" : "sv";
  s += c.injections.empty() ? ":normal" : ":" + format_injections(c.injections);
  return s;
}

}  // namespace sim_detail

// ---------------------------------------------------------------------------
// Clean streams

/// Heartbeat retransmissions every goose_heartbeat_us with sqNum + 1. At each
/// event the data toggles, stNum + 1 and sqNum = 0, followed by fast
/// retransmissions 4, 8, 16, ... ms apart until the interval reaches the
/// heartbeat. Transmissions at times <= duration are kept.
inline GooseDataset gen_goose_normal(const ScenarioConfig& cfg) {
  sim_detail::check_config(cfg);
  if (cfg.protocol != Protocol::goose)
    throw Error(Errc::invariant_violation, "gen_goose_normal needs protocol GOOSE");
  Rng rng(mix_seed(cfg.seed));

  constexpr TimeUs kMinEventSpacing = 100'000;
  std::vector<TimeUs> events;
  for (std::uint32_t attempts = 0; events.size() < cfg.goose_event_count; ++attempts) {
    if (attempts > 100 * (cfg.goose_event_count + 10))
      throw Error(Errc::invariant_violation, "too many events for the scenario duration");
    const TimeUs t = rng.between(1, cfg.duration_us);
    bool clear = true;
    for (auto e : events) clear = clear && (t > e ? t - e : e - t) >= kMinEventSpacing;
    if (clear) events.push_back(t);
  }
  std::sort(events.begin(), events.end());

  GooseDataset d;
  d.meta.seed = cfg.seed;
  d.meta.scenario = sim_detail::default_scenario_name(cfg);
  d.meta.capture_end_us = cfg.start_us + cfg.duration_us;

  GooseRecord proto;
  proto.dm = kDefaultGooseDst;
  proto.sm = kDefaultGooseSrc;
  proto.appid = 0x0003;
  proto.gocbRef = "IED1/LLN0$GO$gcb1";
  proto.datSet = "IED1/LLN0$ds1";
  proto.goID = "gcb1";
  proto.stNum = 1;
  proto.sqNum = 0;

  auto emit = [&](TimeUs nominal, TimeUs displacement) {
    GooseRecord r = proto;
    r.time_us = cfg.start_us + nominal + displacement;
    d.push_back(std::move(r));
  };

  const TimeUs hb = cfg.goose_heartbeat_us;
  constexpr TimeUs kFirstRetransmit = 4'000;
  TimeUs now = 0;
  TimeUs interval = hb;  // interval to the next scheduled transmission
  std::size_t next_event = 0;
  emit(0, 0);
  while (true) {
    const TimeUs scheduled = now + interval;
    const bool event_first = next_event < events.size() && events[next_event] <= scheduled;
    const TimeUs t = event_first ? events[next_event] : scheduled;
    if (t > cfg.duration_us) break;
    if (event_first) {
      std::uint8_t flip = static_cast<std::uint8_t>(rng.between(1, 3));
      if (flip & 1) proto.data1 = !proto.data1;
      if (flip & 2) proto.data2 = !proto.data2;
      ++proto.stNum;
      proto.sqNum = 0;
      emit(t, 0);
      interval = kFirstRetransmit;
      ++next_event;
    } else {
      ++proto.sqNum;
      TimeUs shift = sim_detail::jitter(rng, static_cast<double>(interval), cfg.jitter_pct);
      // A late retransmission must not overtake the next state change.
      if (next_event < events.size() && t + shift >= events[next_event])
        shift = events[next_event] - 1 - t;
      emit(t, shift);
      if (interval < hb) interval = std::min(hb, interval * 2);
    }
    now = t;
  }
  sort_by_time(d);
  return d;
}

/// floor(duration * rate) samples at 1/rate nominal spacing; smpCnt counts
/// 0..4799 and wraps.
inline SvDataset gen_sv_normal(const ScenarioConfig& cfg) {
  sim_detail::check_config(cfg);
  if (cfg.protocol != Protocol::sv)
    throw Error(Errc::invariant_violation, "gen_sv_normal needs protocol SV");
  Rng rng(mix_seed(cfg.seed));

  SvDataset d;
  d.meta.seed = cfg.seed;
  d.meta.scenario = sim_detail::default_scenario_name(cfg);
  d.meta.capture_end_us = cfg.start_us + cfg.duration_us;

  const std::int64_t rate = cfg.sv_rate_hz;
  const std::int64_t n = cfg.duration_us * rate / 1'000'000;
  const double interval = 1e6 / static_cast<double>(rate);
  d.records.reserve(static_cast<std::size_t>(n));
  d.labels.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    SvRecord r;
    r.dm = kDefaultSvDst;
    r.sm = kDefaultSvSrc;
    r.appid = 0x0040;
    r.svID = "MU01";
    r.smpCnt = static_cast<std::uint16_t>(i % (kSmpCntMax + 1));
    const TimeUs nominal = (i * 1'000'000 + rate / 2) / rate;
    r.time_us = cfg.start_us + nominal + (i ? sim_detail::jitter(rng, interval, cfg.jitter_pct) : 0);
    d.push_back(std::move(r));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Injection

namespace sim_detail {

inline bool genuine(AnomalyClass c) {
  return c == AnomalyClass::normal || c == AnomalyClass::system_problem;
}

/// How a single injection chooses among its candidate positions.
enum class Placement { random, first_fit };

template <FeatureRecord R>
class Injector {
 public:
  Injector(Dataset<R>& d, Rng& rng, const TimingConfig& timing)
      : d_(d), rng_(rng), t_(timing) {}

  /// Inserts one forged frame (DI/replay) or one burst (DoS) of `burst` copies.
  void insert_one(AnomalyClass klass, std::uint32_t burst) {
    if constexpr (R::protocol == Protocol::sv)
      if (klass == AnomalyClass::replay)
        throw Error(Errc::unsupported_injection, "SV streams have no replay rule");

    auto slots = collect_slots(klass);
    while (!slots.empty()) {
      const auto k = rng_.below(slots.size());
      const Slot s = slots[k];
      if (try_insert(s, klass, burst)) return;
      slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(k));
    }
    throw Error(Errc::insufficient_carrier,
                "no position can host a " + std::string(class_name(klass)) + " injection");
  }

  /// Deletes genuine frames to open a hole; `deleted` is the SV run length
  /// (ignored for GOOSE, where the hole must exceed the silence bound).
  void system_problem_one(std::uint32_t deleted, Placement placement) {
    std::vector<std::pair<std::size_t, std::size_t>> cands;  // (a, b) dataset indices
    for (const auto& [key, idx] : streams()) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (!genuine(d_.labels[idx[i]])) continue;
        if (auto j = hole_end(idx, i, deleted)) cands.push_back({idx[i], idx[*j]});
      }
    }
    if (cands.empty())
      throw Error(Errc::insufficient_carrier, "no clean run long enough for a system problem");
    std::sort(cands.begin(), cands.end());
    const auto [a, b] = placement == Placement::first_fit ? cands.front() : rng_.pick(cands);
    d_.labels[b] = AnomalyClass::system_problem;
    std::vector<bool> drop(d_.size(), false);
    const auto key = stream_key(d_.records[a]);
    for (std::size_t i = a + 1; i < b; ++i)
      if (stream_key(d_.records[i]) == key) drop[i] = true;
    erase_marked(drop);
  }

 private:
  struct Slot {
    std::size_t a = 0;                  // dataset index of the reference frame
    std::size_t last = 0;               // latest record before b (>= a)
    std::optional<std::size_t> b;       // next genuine frame, if any
  };

  std::map<StreamKey, std::vector<std::size_t>> streams() const {
    std::map<StreamKey, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < d_.size(); ++i) out[stream_key(d_.records[i])].push_back(i);
    return out;
  }

  std::vector<Slot> collect_slots(AnomalyClass klass) const {
    std::vector<Slot> out;
    for (const auto& [key, idx] : streams()) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (!genuine(d_.labels[idx[i]])) continue;
        Slot s{idx[i], idx[i], std::nullopt};
        std::size_t j = i + 1;
        for (; j < idx.size() && !genuine(d_.labels[idx[j]]); ++j) s.last = idx[j];
        if (j < idx.size()) s.b = idx[j];
        // A GOOSE silence hole must stay silent.
        if constexpr (R::protocol == Protocol::goose)
          if (s.b && d_.labels[*s.b] == AnomalyClass::system_problem) continue;
        if (!reference_can_host(d_.records[s.a], klass, idx, i)) continue;
        out.push_back(s);
      }
    }
    return out;
  }

  bool reference_can_host(const R& a, AnomalyClass klass, const std::vector<std::size_t>& idx,
                          std::size_t pos) const {
    if constexpr (R::protocol == Protocol::goose) {
      if (klass == AnomalyClass::replay) return replay_sources(idx, pos).size() > 0;
      return true;
    } else {
      (void)idx;
      (void)pos;
      return a.smpCnt <= kSmpCntMax;
    }
  }

  /// Earlier genuine frames whose (stNum, sqNum) precede the reference's.
  std::vector<std::size_t> replay_sources(const std::vector<std::size_t>& idx,
                                          std::size_t pos) const {
    std::vector<std::size_t> out;
    if constexpr (R::protocol == Protocol::goose) {
      const auto& a = d_.records[idx[pos]];
      for (std::size_t i = 0; i < pos; ++i) {
        const auto& r = d_.records[idx[i]];
        if (genuine(d_.labels[idx[i]]) &&
            std::pair(r.stNum, r.sqNum) < std::pair(a.stNum, a.sqNum))
          out.push_back(idx[i]);
      }
    }
    return out;
  }

  /// (stNum, sqNum, data) of genuine frames of the reference's stream up to
  /// and including dataset index `upto`.
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint8_t>> genuine_triples(
      std::size_t upto) const {
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint8_t>> out;
    if constexpr (R::protocol == Protocol::goose) {
      const auto key = stream_key(d_.records[upto]);
      for (std::size_t i = 0; i <= upto; ++i) {
        const auto& r = d_.records[i];
        if (genuine(d_.labels[i]) && stream_key(r) == key)
          out.insert({r.stNum, r.sqNum, static_cast<std::uint8_t>(r.data1 | r.data2 << 1)});
      }
    }
    return out;
  }

  std::vector<R> forge(const Slot& s, AnomalyClass klass, std::uint32_t burst) {
    const R& a = d_.records[s.a];
    const TimeUs base = d_.records[s.last].time_us;
    std::vector<R> out;
    if (klass == AnomalyClass::dos) {
      const TimeUs window = R::protocol == Protocol::goose ? t_.goose_dos_window_us : t_.sv_dos_window_us;
      const TimeUs cap = R::protocol == Protocol::goose ? 500 : 50;
      const TimeUs spacing = std::max<TimeUs>(1, std::min<TimeUs>(cap, window / (burst + 1)));
      for (std::uint32_t k = 1; k <= burst; ++k) {
        R copy = a;
        copy.time_us = base + spacing * k;
        out.push_back(std::move(copy));
      }
      return out;
    }

    R x = a;
    x.time_us = base + (R::protocol == Protocol::goose ? 1'000 : 20);
    if constexpr (R::protocol == Protocol::goose) {
      if (klass == AnomalyClass::replay) {
        const auto idx = streams().at(stream_key(a));
        const auto pos = static_cast<std::size_t>(
            std::find(idx.begin(), idx.end(), s.a) - idx.begin());
        x = d_.records[rng_.pick(replay_sources(idx, pos))];
        x.time_us = base + 1'000;
      } else {
        // Forged counters must not reproduce a genuine earlier message, which
        // would make the frame a replay.
        const auto seen = genuine_triples(s.a);
        auto fresh = [&](std::uint32_t st, std::uint32_t sq, bool d1, bool d2) {
          return !seen.count({st, sq, static_cast<std::uint8_t>(d1 | d2 << 1)});
        };
        std::vector<std::uint32_t> lower_sq;
        for (std::uint32_t q = 0; q < a.sqNum && lower_sq.size() < 4096; ++q)
          if (fresh(a.stNum, q, a.data1, a.data2)) lower_sq.push_back(q);
        std::vector<int> variants = {2};  // flip data without counter discipline
        if (!lower_sq.empty()) variants.push_back(0);
        if (a.stNum >= 1) variants.push_back(1);
        switch (rng_.pick(variants)) {
          case 0:  // sqNum goes backwards
            x.sqNum = rng_.pick(lower_sq);
            break;
          case 1:  // stNum goes backwards, data unchanged
            x.stNum = static_cast<std::uint32_t>(rng_.between(0, a.stNum - 1));
            do x.sqNum = static_cast<std::uint32_t>(rng_.between(0, 100'000));
            while (!fresh(x.stNum, x.sqNum, x.data1, x.data2));
            break;
          default: {
            const auto flip = rng_.between(1, 3);
            if (flip & 1) x.data1 = !x.data1;
            if (flip & 2) x.data2 = !x.data2;
            x.sqNum = a.sqNum + 1;
            break;
          }
        }
      }
    } else {
      const std::uint32_t c = a.smpCnt;
      if (c >= 1 && rng_.coin()) {
        // Any smaller value except the legitimate 4799 -> 0 wrap.
        const std::int64_t lo = c == kSmpCntMax ? 1 : 0;
        x.smpCnt = static_cast<std::uint16_t>(rng_.between(lo, c - 1));
      } else {
        x.smpCnt = static_cast<std::uint16_t>(rng_.between(kSmpCntMax + 1, 0xFFFF));
      }
    }
    out.push_back(std::move(x));
    return out;
  }

  bool try_insert(const Slot& s, AnomalyClass klass, std::uint32_t burst) {
    auto forged = forge(s, klass, burst);
    const auto key = stream_key(d_.records[s.a]);

    TimeUs shift = 0;
    if (s.b) {
      // Stream records at or after b form the suffix that may be delayed.
      std::vector<TimeUs> prefix, suffix;
      std::vector<bool> suffix_genuine;
      for (std::size_t i = 0; i < d_.size(); ++i) {
        if (stream_key(d_.records[i]) != key) continue;
        if (i < *s.b) {
          prefix.push_back(d_.records[i].time_us);
        } else {
          suffix.push_back(d_.records[i].time_us);
          suffix_genuine.push_back(genuine(d_.labels[i]));
        }
      }
      for (const auto& f : forged) prefix.push_back(f.time_us);
      std::sort(prefix.begin(), prefix.end());
      const auto found = minimal_shift(prefix, suffix, suffix_genuine);
      if (!found) return false;
      shift = *found;
    }

    for (std::size_t i = s.b.value_or(d_.size()); i < d_.size(); ++i)
      if (stream_key(d_.records[i]) == key) d_.records[i].time_us += shift;
    if (d_.meta.capture_end_us) *d_.meta.capture_end_us += shift;
    for (auto& f : forged) d_.push_back(std::move(f), klass);
    sort_by_time(d_);
    if (d_.meta.capture_end_us)
      d_.meta.capture_end_us = std::max(*d_.meta.capture_end_us, d_.records.back().time_us);
    return true;
  }

  /// Smallest delay for the suffix so that no genuine suffix frame sees more
  /// than the allowed packets in its window (and, for SV, b keeps the minimum
  /// spacing). nullopt when the GOOSE silence bound would be crossed.
  std::optional<TimeUs> minimal_shift(const std::vector<TimeUs>& prefix,
                                      const std::vector<TimeUs>& suffix,
                                      const std::vector<bool>& suffix_genuine) const {
    const bool goose = R::protocol == Protocol::goose;
    const TimeUs window = goose ? t_.goose_dos_window_us : t_.sv_dos_window_us;
    const std::size_t max_packets = goose ? t_.goose_dos_max_packets : t_.sv_dos_max_packets;
    const TimeUs min_gap =
        goose ? 0 : static_cast<TimeUs>(std::ceil(t_.sv_min_interval_us()));
    const TimeUs last_prefix = prefix.back();

    const TimeUs lo = std::max<TimeUs>(0, last_prefix + 1 - suffix.front());
    const TimeUs hi = std::max(lo, last_prefix + window + min_gap + 1 - suffix.front());

    if (goose && suffix_genuine.front() &&
        suffix.front() + lo - last_prefix > t_.goose_heartbeat_max_gap_us)
      return std::nullopt;

    auto ok = [&](TimeUs shift) {
      if (!goose && suffix_genuine.front() && suffix.front() + shift - last_prefix < min_gap)
        return false;
      for (std::size_t k = 0; k < suffix.size(); ++k) {
        const TimeUs t = suffix[k] + shift;
        if (t - window > last_prefix) break;
        if (!suffix_genuine[k]) continue;
        const auto from_prefix = static_cast<std::size_t>(
            prefix.end() - std::lower_bound(prefix.begin(), prefix.end(), t - window));
        std::size_t from_suffix = 0;
        for (std::size_t m = 0; m <= k; ++m)
          if (suffix[m] >= suffix[k] - window) ++from_suffix;
        if (from_prefix + from_suffix > max_packets) return false;
      }
      return true;
    };

    TimeUs l = lo, h = hi;
    if (ok(l)) return l;
    while (h - l > 1) {
      const TimeUs mid = l + (h - l) / 2;
      (ok(mid) ? h : l) = mid;
    }
    return h;
  }

  /// For a genuine frame at stream position i, the stream position of the
  /// frame that would follow a deletion hole, or nullopt.
  std::optional<std::size_t> hole_end(const std::vector<std::size_t>& idx, std::size_t i,
                                      std::uint32_t deleted) const {
    const R& a = d_.records[idx[i]];
    if constexpr (R::protocol == Protocol::goose) {
      (void)deleted;
      for (std::size_t j = i + 1; j < idx.size(); ++j) {
        const auto& r = d_.records[idx[j]];
        if (d_.labels[idx[j]] != AnomalyClass::normal) return std::nullopt;
        if (r.stNum != a.stNum || r.data1 != a.data1 || r.data2 != a.data2) return std::nullopt;
        if (r.time_us - a.time_us > t_.goose_heartbeat_max_gap_us)
          return j > i + 1 && r.sqNum > a.sqNum ? std::optional(j) : std::nullopt;
      }
      return std::nullopt;
    } else {
      const std::size_t j = i + deleted + 1;
      if (deleted == 0 || j >= idx.size()) return std::nullopt;
      for (std::size_t k = i + 1; k <= j; ++k)
        if (d_.labels[idx[k]] != AnomalyClass::normal) return std::nullopt;
      const auto& b = d_.records[idx[j]];
      if (a.smpCnt > kSmpCntMax || b.smpCnt > kSmpCntMax || b.smpCnt <= a.smpCnt)
        return std::nullopt;
      return j;
    }
  }

  void erase_marked(const std::vector<bool>& drop) {
    std::vector<R> recs;
    std::vector<AnomalyClass> labels;
    for (std::size_t i = 0; i < d_.size(); ++i) {
      if (drop[i]) continue;
      recs.push_back(std::move(d_.records[i]));
      labels.push_back(d_.labels[i]);
    }
    d_.records = std::move(recs);
    d_.labels = std::move(labels);
  }

  Dataset<R>& d_;
  Rng& rng_;
  const TimingConfig& t_;
};

template <FeatureRecord R>
std::pair<std::uint32_t, std::uint32_t> burst_range(const TimingConfig& t) {
  const std::uint32_t n =
      R::protocol == Protocol::goose ? t.goose_dos_max_packets : t.sv_dos_max_packets;
  return {n + 1, 3 * n};
}

}  // namespace sim_detail

/// Adds `count` labeled anomalies of `klass` and returns the new dataset.
/// DI and replay add one forged frame each; DoS adds `count` bursts of
/// threshold+1 .. 3x threshold copies; system problems open `count` holes and
/// label the frame after each hole.
template <FeatureRecord R>
Dataset<R> inject(Dataset<R> d, AnomalyClass klass, std::uint32_t count, std::uint64_t seed,
                  const TimingConfig& timing = {}) {
  if (klass == AnomalyClass::normal)
    throw Error(Errc::unsupported_injection, "NORMAL is not an anomaly class");
  if (count == 0) throw Error(Errc::invariant_violation, "injection count must be >= 1");
  if constexpr (R::protocol == Protocol::sv)
    if (klass == AnomalyClass::replay)
      throw Error(Errc::unsupported_injection, "SV streams have no replay rule");
  validate(d);
  Rng rng(mix_seed(seed ^ 0x5A5A5A5A5A5A5A5Aull));
  sim_detail::Injector<R> inj(d, rng, timing);
  const auto [bmin, bmax] = sim_detail::burst_range<R>(timing);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (klass == AnomalyClass::system_problem) {
      inj.system_problem_one(static_cast<std::uint32_t>(rng.between(1, 3)),
                             sim_detail::Placement::random);
    } else {
      const auto burst =
          klass == AnomalyClass::dos ? static_cast<std::uint32_t>(rng.between(bmin, bmax)) : 1u;
      inj.insert_one(klass, burst);
    }
  }
  return d;
}

inline LabeledDataset inject(LabeledDataset d, AnomalyClass klass, std::uint32_t count,
                             std::uint64_t seed, const TimingConfig& timing = {}) {
  return std::visit(
      [&](auto& ds) -> LabeledDataset { return inject(std::move(ds), klass, count, seed, timing); },
      d);
}

/// Clean stream for cfg.protocol followed by every configured injection.
inline LabeledDataset generate(const ScenarioConfig& cfg) {
  LabeledDataset d;
  if (cfg.protocol == Protocol::goose)
    d = gen_goose_normal(cfg);
  else
    d = gen_sv_normal(cfg);
  for (std::size_t k = 0; k < cfg.injections.size(); ++k) {
    const auto& inj = cfg.injections[k];
    if (inj.count == 0) continue;
    d = inject(std::move(d), inj.klass, inj.count, mix_seed(cfg.seed + k + 1), cfg.timing);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation sets

/// Relative weights of anomaly classes in an evaluation set.
struct AnomalyMix {
  double data_injection = 1.0;
  double dos = 1.0;
  double system_problem = 1.0;
  double replay = 1.0;  // ignored for SV
};

/// "di:2,dos:1,sys:1,re:0" -> weights.
inline AnomalyMix parse_mix(std::string_view text) {
  AnomalyMix m{0, 0, 0, 0};
  for (const auto& item : KeyValues::split_list(text)) {
    const auto colon = item.find(':');
    const auto k = colon == std::string::npos
                       ? std::nullopt
                       : parse_injection_class(KeyValues::trim(std::string_view(item).substr(0, colon)));
    if (!k) throw Error(Errc::schema_error, "expected class:weight, got " + item, std::nullopt, "mix");
    double w = 0;
    const auto num = KeyValues::trim(std::string_view(item).substr(colon + 1));
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), w);
    if (ec != std::errc{} || p != num.data() + num.size() || w < 0)
      throw Error(Errc::schema_error, "bad weight in " + item, std::nullopt, "mix");
    switch (*k) {
      case AnomalyClass::data_injection: m.data_injection = w; break;
      case AnomalyClass::dos: m.dos = w; break;
      case AnomalyClass::system_problem: m.system_problem = w; break;
      case AnomalyClass::replay: m.replay = w; break;
      case AnomalyClass::normal: break;
    }
  }
  return m;
}

namespace sim_detail {

/// Largest-remainder apportionment of `total` over `weights`.
inline std::vector<std::uint32_t> apportion(std::uint32_t total, const std::vector<double>& weights) {
  double sum = 0;
  for (double w : weights) sum += w;
  std::vector<std::uint32_t> out(weights.size(), 0);
  if (total == 0 || sum <= 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  std::uint32_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    out[i] = static_cast<std::uint32_t>(std::floor(exact));
    given += out[i];
    rem.push_back({exact - out[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& x, auto& y) { return x.first > y.first; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[rem[k % rem.size()].second];
  return out;
}

template <FeatureRecord R>
Dataset<R> make_eval_set_impl(std::uint32_t anomalies, std::uint32_t normals, AnomalyMix mix,
                              std::uint64_t seed, const TimingConfig& timing) {
  constexpr bool goose = R::protocol == Protocol::goose;
  if (normals < 2) throw Error(Errc::insufficient_carrier, "need at least two normal records");
  Rng rng(mix_seed(seed ^ 0xE7A1u));

  // Classes: DI, DOS, SYS, RE.
  std::vector<double> w = {mix.data_injection, mix.dos, mix.system_problem,
                           goose ? mix.replay : 0.0};
  auto counts = apportion(anomalies, w);
  const auto [bmin, bmax] = burst_range<R>(timing);
  // DoS labels come in whole bursts; move a short remainder elsewhere.
  if (counts[1] > 0 && counts[1] < bmin) {
    const std::uint32_t moved = counts[1];
    counts[1] = 0;
    w[1] = 0;
    if (anomalies >= bmin && (w[0] + w[2] + w[3]) == 0) {
      counts[1] = anomalies;
    } else {
      auto extra = apportion(moved, w);
      for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += extra[i];
    }
  }
  std::vector<std::uint32_t> bursts;
  if (counts[1] > 0) {
    const std::uint32_t k = (counts[1] + bmax - 1) / bmax;
    for (std::uint32_t i = 0; i < k; ++i) bursts.push_back(counts[1] / k + (i < counts[1] % k));
  }

  std::vector<std::uint32_t> holes;  // records deleted per system problem
  std::uint32_t deleted = 0;
  const TimeUs hb = 2'000'000;
  for (std::uint32_t i = 0; i < counts[2]; ++i) {
    const auto m = goose ? static_cast<std::uint32_t>(timing.goose_heartbeat_max_gap_us / hb)
                         : static_cast<std::uint32_t>(rng.between(1, 3));
    holes.push_back(m);
    deleted += m;
  }
  const std::uint32_t initial = normals + counts[2] + deleted;

  ScenarioConfig cfg;
  cfg.protocol = R::protocol;
  cfg.seed = seed;
  cfg.scenario = std::string(goose ? "goose" : "sv") + ":eval:" + std::to_string(anomalies) +
                 "+" + std::to_string(normals);
  Dataset<R> d;
  if constexpr (goose) {
    cfg.goose_heartbeat_us = hb;
    cfg.duration_us = static_cast<TimeUs>(initial - 1) * hb;
    d = gen_goose_normal(cfg);
  } else {
    cfg.duration_us = (static_cast<TimeUs>(initial) * 1'000'000 + cfg.sv_rate_hz - 1) / cfg.sv_rate_hz;
    d = gen_sv_normal(cfg);
  }
  d.records.resize(initial);
  d.labels.resize(initial);
  d.meta.capture_end_us = d.records.back().time_us;

  Injector<R> inj(d, rng, timing);
  for (auto m : holes) inj.system_problem_one(m, Placement::first_fit);
  for (std::uint32_t i = 0; i < counts[0]; ++i) inj.insert_one(AnomalyClass::data_injection, 1);
  for (std::uint32_t i = 0; i < counts[3]; ++i) inj.insert_one(AnomalyClass::replay, 1);
  for (auto b : bursts) inj.insert_one(AnomalyClass::dos, b);
  return d;
}

}  // namespace sim_detail

/// Evaluation set with exactly `anomalies` non-NORMAL and `normals` NORMAL
/// records. Classes are apportioned by `mix`; DoS shares smaller than one
/// burst are redistributed.
inline LabeledDataset make_eval_set(Protocol protocol, std::uint32_t anomalies,
                                    std::uint32_t normals, AnomalyMix mix, std::uint64_t seed,
                                    const TimingConfig& timing = {}) {
  if (protocol == Protocol::goose)
    return sim_detail::make_eval_set_impl<GooseRecord>(anomalies, normals, mix, seed, timing);
  return sim_detail::make_eval_set_impl<SvRecord>(anomalies, normals, mix, seed, timing);
}

}  // namespace gridsentry
