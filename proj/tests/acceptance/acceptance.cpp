// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridsentry/gridsentry.hpp"
#include "../reference_results.hpp"

namespace fs = std::filesystem;
using namespace gridsentry;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1

Outcome metric_reproduction() {
  const auto t0 = Clock::now();
  Outcome o;
  int matched = 0, inconsistent = 0;
  std::ostringstream notes;
  for (const auto& cell : reference::cells()) {
    const auto s = reference::enumerate(cell);
    if (s.exact.size() == 1) {
      // Recompute through the library and compare each published figure.
      const auto got = reference::percents(s.exact[0].counts);
      bool ok = true;
      for (int i = 0; i < 5; ++i)
        ok = ok && std::fabs(got[i] - cell.published[i]) <= reference::kTolerancePp + 1e-9;
      if (ok) {
        ++matched;
        continue;
      }
      o.pass = false;
      notes << " " << reference::cell_name(cell) << " mismatch;";
    } else if (s.exact.empty()) {
      // No integer geometry reproduces all five figures. Report the closest.
      ++inconsistent;
      const auto& c = s.closest.counts;
      notes << " " << reference::cell_name(cell) << " has no integer solution (closest tp=" << c.tp
            << " fn=" << c.fn << " fp=" << c.fp << " tn=" << c.tn << ", "
            << reference::kMetricLabel(s.closest.worst_metric) << " off by "
            << fmt("%.3f", s.closest.worst_residual_pp) << " pp);";
    } else {
      o.pass = false;
      notes << " " << reference::cell_name(cell) << " ambiguous;";
    }
  }
  // The two anchor geometries must come out exactly.
  const auto a = reference::enumerate(reference::cells()[2]);
  const auto b = reference::enumerate(reference::cells()[11]);
  const bool anchors = a.exact.size() == 1 && a.exact[0].counts == ConfusionCounts{54, 1, 24, 1} &&
                       b.exact.size() == 1 && b.exact[0].counts == ConfusionCounts{58, 0, 20, 2};
  const double secs = seconds_since(t0);
  o.pass = o.pass && anchors && matched == 14 && secs < 1.0;
  o.detail = std::to_string(matched) + "/18 cells reproduced within 0.05 pp, " +
             std::to_string(inconsistent) + " published cells internally inconsistent:" +
             notes.str() + " anchors " + (anchors ? "ok" : "WRONG") + ", " + fmt("%.3f s", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2, 3, 8 share one scenario corpus.

std::vector<LabeledDataset> scenario_corpus() {
  std::vector<LabeledDataset> out;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    ScenarioConfig g;
    g.protocol = Protocol::goose;
    g.seed = seed;
    g.duration_us = 120'000'000;
    g.goose_event_count = static_cast<std::uint32_t>(rng() % 4);
    g.jitter_pct = static_cast<double>(rng() % 11);
    g.injections = {{AnomalyClass::dos, static_cast<std::uint32_t>(1 + rng() % 2)},
                    {AnomalyClass::data_injection, static_cast<std::uint32_t>(1 + rng() % 3)},
                    {AnomalyClass::system_problem, static_cast<std::uint32_t>(rng() % 2)},
                    {AnomalyClass::replay, static_cast<std::uint32_t>(1 + rng() % 2)}};
    std::shuffle(g.injections.begin(), g.injections.end(), rng);
    out.push_back(generate(g));

    ScenarioConfig s;
    s.protocol = Protocol::sv;
    s.seed = seed;
    s.duration_us = 500'000;
    s.jitter_pct = static_cast<double>(rng() % 11);
    s.injections = {{AnomalyClass::dos, static_cast<std::uint32_t>(1 + rng() % 2)},
                    {AnomalyClass::data_injection, static_cast<std::uint32_t>(1 + rng() % 3)},
                    {AnomalyClass::system_problem, static_cast<std::uint32_t>(1 + rng() % 2)}};
    std::shuffle(s.injections.begin(), s.injections.end(), rng);
    out.push_back(generate(s));
  }
  return out;
}

std::size_t size_of(const LabeledDataset& d) {
  return std::visit([](const auto& x) { return x.size(); }, d);
}

const std::vector<AnomalyClass>& labels_of(const LabeledDataset& d) {
  return std::visit([](const auto& x) -> const std::vector<AnomalyClass>& { return x.labels; }, d);
}

Outcome engine_soundness(const std::vector<LabeledDataset>& corpus, double build_secs) {
  const auto t0 = Clock::now();
  Outcome o;
  const RuleSet full(TrainingLevel::full);
  ConfusionCounts total;
  std::size_t largest = 0, bad = 0;
  for (const auto& d : corpus) {
    largest = std::max(largest, size_of(d));
    const auto p = verdicts_to_predictions(detect_batch(d, full), size_of(d));
    const auto c = confusion(labels_of(d), p);
    if (c.fn || c.fp) ++bad;
    total.tp += c.tp;
    total.fp += c.fp;
    total.tn += c.tn;
    total.fn += c.fn;
  }
  const auto m = metrics(total);
  const double secs = seconds_since(t0) + build_secs;
  o.pass = bad == 0 && total.tp > 0 && largest <= 5000 && secs < 60.0;
  o.detail = std::to_string(corpus.size()) + " scenarios (largest " + std::to_string(largest) +
             " records), tp=" + std::to_string(total.tp) + " fn=" + std::to_string(total.fn) +
             " fp=" + std::to_string(total.fp) + " tn=" + std::to_string(total.tn) + ", TPR " +
             format_percent(m.tpr) + "%, FPR " + format_percent(m.fpr) + "%, " +
             std::to_string(bad) + " scenario(s) off, " + fmt("%.2f s", secs);
  return o;
}

Outcome level_monotonicity(const std::vector<LabeledDataset>& corpus) {
  Outcome o;
  using Key = std::pair<std::size_t, RuleId>;
  auto keyed = [](const std::vector<Verdict>& v) {
    std::set<Key> s;
    for (const auto& x : v) s.insert({x.record_index, x.rule});
    return s;
  };
  std::size_t violations = 0, forbidden = 0;
  for (const auto& d : corpus) {
    const auto w = keyed(detect_batch(d, RuleSet(TrainingLevel::without)));
    const auto p = keyed(detect_batch(d, RuleSet(TrainingLevel::partial)));
    const auto f = keyed(detect_batch(d, RuleSet(TrainingLevel::full)));
    if (!std::includes(p.begin(), p.end(), w.begin(), w.end())) ++violations;
    if (!std::includes(f.begin(), f.end(), p.begin(), p.end())) ++violations;
    for (const auto& [i, id] : p) {
      const auto k = rule_class(id);
      if (k == AnomalyClass::system_problem || k == AnomalyClass::replay) ++forbidden;
    }
  }
  o.pass = violations == 0 && forbidden == 0;
  o.detail = std::to_string(violations) + " nesting violation(s), " + std::to_string(forbidden) +
             " partial-level SYS/RE verdict(s)";
  return o;
}

Outcome pipeline_equivalence(const std::vector<LabeledDataset>& corpus) {
  Outcome o;
  std::size_t mismatched = 0, windows = 0;
  for (const auto& d : corpus) {
    for (auto lv : {TrainingLevel::partial, TrainingLevel::full}) {
      const RuleSet rules(lv);
      const auto expect = verdicts_to_predictions(detect_batch(d, rules), size_of(d));
      RulesMockClient client;
      ChatClientConfig cfg;
      const auto run = detect_llm(d, rules, cfg, client);
      windows += run.transcript.size();
      if (run.predictions != expect || !run.failed_windows.empty()) ++mismatched;
    }
  }
  o.pass = mismatched == 0;
  o.detail = std::to_string(corpus.size() * 2) + " runs over " + std::to_string(windows) +
             " prompt windows, " + std::to_string(mismatched) + " mismatch(es)";
  return o;
}

// ---------------------------------------------------------------------------
// 4

std::vector<bool> brute_force_window(const std::vector<TimeUs>& t, TimeUs w, std::size_t n) {
  std::vector<bool> out(t.size(), false);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j <= i; ++j) c += t[i] - t[j] <= w;
    out[i] = c > n;
  }
  return out;
}

Outcome dos_window_oracle() {
  Outcome o;
  std::mt19937_64 rng(4);
  const RuleSet full(TrainingLevel::full);
  std::size_t mismatches = 0, flagged = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 500;
    const bool goose = trial & 1;
    // Spans from dense bursts to sparse traffic.
    const TimeUs span = 1 + static_cast<TimeUs>(rng() % (goose ? 400'000 : 80'000));
    std::vector<TimeUs> t(n);
    for (auto& x : t) x = static_cast<TimeUs>(rng() % span);
    std::sort(t.begin(), t.end());
    std::vector<bool> got(n, false);
    if (goose) {
      GooseDataset d;
      for (std::size_t i = 0; i < n; ++i) {
        GooseRecord r;
        r.time_us = t[i];
        r.gocbRef = "IED1/LLN0$GO$gcb1";
        r.goID = "gcb1";
        r.datSet = "IED1/LLN0$ds1";
        r.stNum = 1;
        r.sqNum = static_cast<std::uint32_t>(i);
        d.push_back(r);
      }
      for (const auto& v : detect_batch(d, full))
        if (v.rule == RuleId::G_DOS_1) got[v.record_index] = true;
      mismatches += got != brute_force_window(t, 10'000, 10);
    } else {
      SvDataset d;
      for (std::size_t i = 0; i < n; ++i) {
        SvRecord r;
        r.time_us = t[i];
        r.svID = "MU01";
        r.smpCnt = static_cast<std::uint16_t>(i % 4800);
        d.push_back(r);
      }
      for (const auto& v : detect_batch(d, full))
        if (v.rule == RuleId::S_DOS_2) got[v.record_index] = true;
      mismatches += got != brute_force_window(t, 2'083, 12);
    }
    flagged += std::count(got.begin(), got.end(), true);
  }
  o.pass = mismatches == 0 && flagged > 0;
  o.detail = "1000 multisets, " + std::to_string(flagged) + " flagged packets, " +
             std::to_string(mismatches) + " mismatch(es)";
  return o;
}

// ---------------------------------------------------------------------------
// 5

Outcome wrap_exhaustion() {
  const auto t0 = Clock::now();
  Outcome o;
  std::size_t accepted = 0, wrong = 0;
  for (std::uint32_t a = 0; a <= kSmpCntMax; ++a)
    for (std::uint32_t b = 0; b <= kSmpCntMax; ++b) {
      const bool expect = (b == a + 1) || (a == 4799 && b == 0);
      const bool got = is_cyclic_successor(a, b);
      accepted += got;
      wrong += got != expect;
    }
  const double secs = seconds_since(t0);
  o.pass = accepted == 4800 && wrong == 0 && secs < 60.0;
  o.detail = "4800^2 pairs, " + std::to_string(accepted) + " accepted, " + std::to_string(wrong) +
             " wrong, " + fmt("%.2f s", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 6

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

template <class F>
bool survives(F&& f) {
  try {
    f();
  } catch (const Error&) {
  }
  return true;  // anything else propagates and aborts the run
}

Outcome codec_round_trip() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::size_t apdu_bad = 0, pcap_bad = 0, decoded = 0;
  for (int i = 0; i < 10'000; ++i) {
    if (i & 1) {
      const auto a = random_goose(rng);
      apdu_bad += !(decode_goose(encode_goose(a, kDefaultGooseDst, kDefaultGooseSrc, i)) == a);
    } else {
      const auto a = random_sv(rng);
      apdu_bad += !(decode_sv(encode_sv(a, kDefaultSvDst, kDefaultSvSrc, i)) == a);
    }
  }
  for (int i = 0; i < 1000; ++i) {
    std::vector<RawFrame> frames;
    TimeUs t = static_cast<TimeUs>(rng() % 1'000'000'000);
    for (int k = 0, n = static_cast<int>(rng() % 40); k < n; ++k) {
      t += static_cast<TimeUs>(rng() % 5'000'000);
      if (rng() & 1) {
        frames.push_back(encode_goose(random_goose(rng), kDefaultGooseDst, kDefaultGooseSrc, t));
      } else if (rng() % 4) {
        frames.push_back(encode_sv(random_sv(rng), kDefaultSvDst, kDefaultSvSrc, t));
      } else {
        RawFrame f;
        f.timestamp = t;
        f.ethertype = static_cast<std::uint16_t>(rng());
        f.payload.resize(rng() % 200);
        for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
        frames.push_back(f);
      }
    }
    pcap_bad += pcap::parse(pcap::serialize(frames)) != frames;
  }
  const auto goose = encode_goose(random_goose(rng), kDefaultGooseDst, kDefaultGooseSrc, 0);
  const auto capture = pcap::serialize(std::vector<RawFrame>{goose, goose});
  for (int i = 0; i < 100'000; ++i) {
    std::vector<std::uint8_t> bytes(rng() % 160);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    if (i % 3 == 0) {
      // Damage a valid capture so the parser gets past the header.
      bytes = capture;
      for (int k = 0; k < 3; ++k) bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
      bytes.resize(rng() % (bytes.size() + 1));
      survives([&] { pcap::parse(bytes); });
      continue;
    }
    RawFrame f;
    f.ethertype = (i & 1) ? kEthertypeGoose : kEthertypeSv;
    f.payload = std::move(bytes);
    survives([&] {
      if (f.ethertype == kEthertypeGoose)
        decode_goose(f);
      else
        decode_sv(f);
      ++decoded;
    });
  }
  o.pass = apdu_bad == 0 && pcap_bad == 0;
  o.detail = "10000 APDUs (" + std::to_string(apdu_bad) + " differ), 1000 captures (" +
             std::to_string(pcap_bad) + " differ), 100000 random inputs without a crash (" +
             std::to_string(decoded) + " happened to decode)";
  return o;
}

// ---------------------------------------------------------------------------
// 7

Outcome sv_timing() {
  Outcome o;
  ScenarioConfig c;
  c.protocol = Protocol::sv;
  c.duration_us = 1'000'000;
  const auto d = gen_sv_normal(c);
  double mean = 0;
  if (d.size() > 1)
    mean = static_cast<double>(d.records.back().time_us - d.records.front().time_us) /
           static_cast<double>(d.size() - 1);
  const double nominal = 1e6 / 4800.0;
  std::size_t dos = 0;
  for (const auto& v : detect_batch(LabeledDataset{d}, RuleSet(TrainingLevel::full)))
    dos += rule_class(v.rule) == AnomalyClass::dos;
  const double off = std::fabs(mean - nominal) / nominal * 100.0;
  o.pass = d.size() == 4800 && off < 1.0 && dos == 0;
  o.detail = std::to_string(d.size()) + " records, mean interval " + fmt("%.3f us", mean) + " (" +
             fmt("%.3f%%", off) + " from nominal), " + std::to_string(dos) + " DoS verdict(s)";
  return o;
}

// ---------------------------------------------------------------------------
// 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool run_pipeline(const fs::path& dir, std::string& err) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = GRIDSENTRY_CLI;
  const std::string d = dir.string();
  const std::vector<std::string> steps = {
      cli + " gen --protocol goose --eval-set --anomalies 55 --normals 25 --seed 42 -o " + d +
          "/eval.jsonl",
      cli + " detect -i " + d + "/eval.jsonl --level full --detector rules --verdicts " + d +
          "/verdicts.jsonl --predictions " + d + "/full.json",
      cli + " detect -i " + d + "/eval.jsonl --engine mock --level partial --detector mock --transcript " +
          d + "/transcript.jsonl --predictions " + d + "/partial.json",
      cli + " eval -l " + d + "/eval.jsonl -p " + d + "/full.json -p " + d + "/partial.json -o " + d +
          "/report",
  };
  for (const auto& s : steps) {
    const int rc = std::system((s + " 2>>" + d + "/stderr.txt").c_str());
    if (rc != 0) {
      err = "command failed: " + s;
      return false;
    }
  }
  return true;
}

Outcome cli_determinism() {
  Outcome o;
  const fs::path root = GRIDSENTRY_TEST_TMP;
  std::string err;
  const auto t0 = Clock::now();
  const bool ok1 = run_pipeline(root / "run1", err);
  const double secs = seconds_since(t0);
  const bool ok2 = ok1 && run_pipeline(root / "run2", err);
  if (!ok1 || !ok2) {
    o.pass = false;
    o.detail = err;
    return o;
  }
  const std::vector<std::string> artifacts = {"eval.jsonl", "verdicts.jsonl", "full.json",
                                              "transcript.jsonl", "partial.json", "report.md",
                                              "report.csv", "report.json"};
  std::size_t differ = 0;
  for (const auto& a : artifacts) {
    const auto x = slurp(root / "run1" / a);
    differ += x.empty() || x != slurp(root / "run2" / a);
  }
  const auto lines = slurp(root / "run1" / "eval.jsonl");
  const auto records = std::count(lines.begin(), lines.end(), '\n') - 1;
  o.pass = differ == 0 && records == 80 && secs < 5.0;
  o.detail = std::to_string(artifacts.size()) + " artifacts, " + std::to_string(differ) +
             " differ between runs, " + std::to_string(records) + " records, pipeline " +
             fmt("%.2f s", secs);
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail
              << std::endl;
  };

  report(1, "metric reproduction", metric_reproduction);

  std::vector<LabeledDataset> corpus;
  double build_secs = 0;
  std::string corpus_error;
  try {
    const auto t0 = Clock::now();
    corpus = scenario_corpus();
    build_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    corpus_error = e.what();
  }
  auto with_corpus = [&](std::function<Outcome()> f) {
    return [&, f]() -> Outcome {
      if (!corpus_error.empty()) return {false, "scenario generation failed: " + corpus_error};
      return f();
    };
  };
  report(2, "rule-engine soundness", with_corpus([&] { return engine_soundness(corpus, build_secs); }));
  report(3, "level monotonicity", with_corpus([&] { return level_monotonicity(corpus); }));
  report(4, "DoS window oracle", dos_window_oracle);
  report(5, "smpCnt wrap exhaustion", wrap_exhaustion);
  report(6, "codec round trip", codec_round_trip);
  report(7, "SV timing fidelity", sv_timing);
  report(8, "pipeline equivalence", with_corpus([&] { return pipeline_equivalence(corpus); }));
  report(9, "CLI determinism", cli_determinism);
  return failures ? 1 : 0;
}
