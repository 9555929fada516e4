// gridsentry command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsentry/gridsentry.hpp"
#include "gridsentry/http_client.hpp"

namespace fs = std::filesystem;
using namespace gridsentry;
using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + p.string());
  out << text;
  if (!out) throw Error(Errc::io_error, "write failed: " + p.string());
}

bool has_extension(const fs::path& p, const char* ext) { return p.extension() == ext; }

LabeledDataset load_dataset(const fs::path& p) {
  return has_extension(p, ".csv") ? import_csv(p) : load_jsonl(p);
}

void save_dataset(const LabeledDataset& d, const fs::path& p) {
  std::ostringstream os;
  if (has_extension(p, ".csv"))
    export_csv(d, os);
  else
    save_jsonl(d, os);
  write_file(p, os.str());
}

std::size_t dataset_size(const LabeledDataset& d) {
  return std::visit([](const auto& ds) { return ds.size(); }, d);
}

const std::vector<AnomalyClass>& dataset_labels(const LabeledDataset& d) {
  return std::visit([](const auto& ds) -> const std::vector<AnomalyClass>& { return ds.labels; },
                    d);
}

std::vector<RawFrame> dataset_frames(const LabeledDataset& d) {
  return std::visit(
      [](const auto& ds) {
        std::vector<RawFrame> frames;
        frames.reserve(ds.size());
        for (const auto& r : ds.records) frames.push_back(to_frame(r));
        return frames;
      },
      d);
}

/// Fills options the user did not set from a key = value file.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  const auto kv = KeyValues::load(path);
  for (const auto& [key, entry] : kv.entries()) {
    if (key == "config") continue;
    auto* opt = sub->get_option_no_throw("--" + key);
    if (!opt)
      throw UsageError(path + ":" + std::to_string(entry.line) + ": unknown option " + key);
    if (opt->count() != 0) continue;
    opt->add_result(entry.value);
    opt->run_callback();
  }
}

TimeUs duration_arg(const std::string& s, const char* flag) {
  auto v = parse_duration_us(s);
  if (!v) throw UsageError(std::string(flag) + ": expected a duration like 10s, 500ms or 250us");
  return *v;
}

Protocol protocol_arg(const std::string& s) {
  auto p = parse_protocol(s);
  if (!p) throw UsageError("--protocol must be goose or sv");
  return *p;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string protocol = "goose";
  std::string duration = "10s";
  std::string heartbeat = "2s";
  std::string start = "0us";
  std::uint64_t seed = 0;
  std::uint32_t events = 0;
  std::uint32_t rate = 4800;
  double jitter = 0.0;
  std::string inject;
  std::string scenario_file;
  bool eval_set = false;
  std::optional<std::uint32_t> anomalies;
  std::optional<std::uint32_t> normals;
  std::string mix;
  std::string output;
  std::string pcap;
  std::string config;
};

void run_gen(const GenArgs& a) {
  LabeledDataset d;
  if (a.eval_set) {
    const auto p = protocol_arg(a.protocol);
    const bool goose = p == Protocol::goose;
    const auto mix = a.mix.empty() ? AnomalyMix{} : parse_mix(a.mix);
    d = make_eval_set(p, a.anomalies.value_or(goose ? 55 : 60), a.normals.value_or(goose ? 25 : 20),
                      mix, a.seed);
  } else {
    ScenarioConfig c;
    if (!a.scenario_file.empty()) c = parse_scenario(KeyValues::load(a.scenario_file));
    c.protocol = protocol_arg(a.protocol);
    c.duration_us = duration_arg(a.duration, "--duration");
    c.goose_heartbeat_us = duration_arg(a.heartbeat, "--heartbeat");
    c.start_us = duration_arg(a.start, "--start");
    c.seed = a.seed;
    c.goose_event_count = a.events;
    c.sv_rate_hz = a.rate;
    c.jitter_pct = a.jitter;
    if (!a.inject.empty()) c.injections = parse_injections(a.inject);
    d = generate(c);
  }
  save_dataset(d, a.output);
  if (!a.pcap.empty()) write_pcap(dataset_frames(d), a.pcap);
  std::size_t anomalous = 0;
  for (auto l : dataset_labels(d)) anomalous += is_anomalous(l);
  std::cerr << "wrote " << dataset_size(d) << " records (" << anomalous << " anomalous) to "
            << a.output << '\n';
}

// ---------------------------------------------------------------------------

struct InjectArgs {
  std::string input, output, inject, config;
  std::uint64_t seed = 0;
};

void run_inject(const InjectArgs& a) {
  auto d = load_dataset(a.input);
  const auto list = parse_injections(a.inject);
  for (std::size_t k = 0; k < list.size(); ++k)
    if (list[k].count) d = gridsentry::inject(std::move(d), list[k].klass, list[k].count, mix_seed(a.seed + k + 1));
  save_dataset(d, a.output);
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string input, output, config;
};

void run_convert(const ConvertArgs& a) { save_dataset(load_dataset(a.input), a.output); }

// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string input;
  std::string engine = "rules";
  std::optional<std::string> level;
  std::string rules_file;
  std::string detector;
  std::string verdicts;
  std::string predictions;
  std::string transcript;
  std::string fixtures;
  std::string endpoint;
  std::string model;
  std::string token_env = "GRIDSENTRY_API_TOKEN";
  std::uint32_t timeout_ms = 30'000;
  std::uint32_t max_retries = 2;
  std::size_t window = 20;
  std::string config;
};

RuleSet detect_rules(const DetectArgs& a) {
  std::optional<TrainingLevel> lv;
  if (a.level) {
    lv = parse_level(*a.level);
    if (!lv) throw UsageError("--level must be without, partial or full");
  }
  if (!a.rules_file.empty()) {
    auto rs = load_ruleset(a.rules_file);
    if (lv && *lv != rs.level())
      throw UsageError("--level " + *a.level + " disagrees with the rule-set file level " +
                       std::string(level_name(rs.level())));
    return rs;
  }
  return RuleSet(lv.value_or(TrainingLevel::full));
}

void run_detect(const DetectArgs& a) {
  if (a.engine != "rules" && a.engine != "llm" && a.engine != "mock")
    throw UsageError("--engine must be rules, llm or mock");
  if (a.engine == "llm" && (a.endpoint.empty() || a.model.empty()))
    throw UsageError("--engine llm needs --endpoint and --model");
  if (a.verdicts.empty() && a.predictions.empty())
    throw UsageError("give --verdicts and/or --predictions");
  const auto rules = detect_rules(a);
  const auto d = load_dataset(a.input);
  const std::size_t n = dataset_size(d);

  std::vector<bool> predictions;
  std::ostringstream verdict_lines;
  std::string detector = a.detector;
  if (a.engine == "rules") {
    if (detector.empty()) detector = "rules";
    const auto verdicts = detect_batch(d, rules);
    for (const auto& v : verdicts) {
      ojson j = {{"record", v.record_index},
                 {"class", class_name(v.klass)},
                 {"rule", rule_name(v.rule)},
                 {"explanation", v.explanation}};
      verdict_lines << j.dump() << '\n';
    }
    predictions = verdicts_to_predictions(verdicts, n);
  } else {
    ChatClientConfig cfg;
    cfg.endpoint_url = a.endpoint;
    cfg.model_name = a.model;
    cfg.token_env = a.token_env;
    cfg.timeout_ms = a.timeout_ms;
    cfg.max_retries = a.max_retries;
    cfg.window_size = a.window;
    if (cfg.window_size == 0) throw UsageError("--window must be >= 1");
    std::unique_ptr<ChatClient> client;
    if (a.engine == "llm") {
      client = std::make_unique<HttpChatClient>(cfg);
      if (detector.empty()) detector = a.model;
    } else if (!a.fixtures.empty()) {
      client = std::make_unique<FixtureClient>(a.fixtures);
      if (detector.empty()) detector = "mock";
    } else {
      client = std::make_unique<RulesMockClient>();
      if (detector.empty()) detector = "rules-mock";
    }
    const auto run = detect_llm(d, rules, cfg, *client);
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
    if (!run.failed_windows.empty())
      std::cerr << run.failed_windows.size() << " window(s) failed and were scored all-normal\n";
    predictions = run.predictions;
    for (std::size_t i = 0; i < n; ++i)
      if (predictions[i]) {
        ojson j = {{"record", i},
                   {"class", nullptr},
                   {"rule", nullptr},
                   {"explanation", "flagged by " + detector}};
        verdict_lines << j.dump() << '\n';
      }
    if (!a.transcript.empty()) {
      std::ostringstream os;
      write_transcript_jsonl(run.transcript, os);
      write_file(a.transcript, os.str());
    }
  }

  if (!a.verdicts.empty()) write_file(a.verdicts, verdict_lines.str());
  if (!a.predictions.empty()) {
    ojson j = {{"detector", detector},
               {"level", level_name(rules.level())},
               {"protocol", protocol_name(protocol_of(d))},
               {"records", n},
               {"predictions", ojson::array()}};
    for (bool p : predictions) j["predictions"].push_back(p ? 1 : 0);
    write_file(a.predictions, j.dump() + "\n");
  }
  std::size_t flagged = 0;
  for (bool p : predictions) flagged += p;
  std::cerr << detector << "/" << level_name(rules.level()) << ": flagged " << flagged << " of "
            << n << " records\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string labels;
  std::vector<std::string> predictions;
  std::string output;
  std::string format = "markdown";
  std::string config;
};

struct PredictionFile {
  ReportCell cell;
  std::vector<bool> predictions;
};

PredictionFile load_predictions(const fs::path& p) {
  const auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  auto bad = [&](const std::string& what) {
    return Error(Errc::schema_error, p.string() + ": " + what);
  };
  if (!j.is_object()) throw bad("not a JSON object");
  PredictionFile f;
  if (!j.contains("detector") || !j["detector"].is_string()) throw bad("missing detector");
  f.cell.detector = j["detector"].get<std::string>();
  auto lv = j.contains("level") && j["level"].is_string()
                ? parse_level(j["level"].get<std::string>())
                : std::nullopt;
  auto pr = j.contains("protocol") && j["protocol"].is_string()
                ? parse_protocol(j["protocol"].get<std::string>())
                : std::nullopt;
  if (!lv) throw bad("missing or bad level");
  if (!pr) throw bad("missing or bad protocol");
  f.cell.level = *lv;
  f.cell.protocol = *pr;
  if (!j.contains("predictions") || !j["predictions"].is_array()) throw bad("missing predictions");
  for (const auto& v : j["predictions"]) {
    if (v.is_boolean())
      f.predictions.push_back(v.get<bool>());
    else if (v.is_number_unsigned() && v.get<std::uint64_t>() <= 1)
      f.predictions.push_back(v.get<std::uint64_t>() == 1);
    else
      throw bad("predictions must be 0/1 or booleans");
  }
  return f;
}

void run_eval(const EvalArgs& a) {
  const auto d = load_dataset(a.labels);
  const auto& labels = dataset_labels(d);
  std::vector<MetricsReport> reports;
  for (const auto& path : a.predictions) {
    auto f = load_predictions(path);
    if (f.cell.protocol != protocol_of(d))
      throw Error(Errc::invariant_violation, path + ": protocol differs from the labels file");
    reports.push_back(metrics(confusion(labels, f.predictions), f.cell));
  }

  if (a.output.empty()) {
    auto fmt = parse_table_format(a.format);
    if (!fmt) throw UsageError("--format must be markdown, csv or json");
    std::cout << render_table(reports, *fmt);
    return;
  }
  write_file(a.output + ".md", render_table(reports, TableFormat::markdown));
  write_file(a.output + ".csv", render_table(reports, TableFormat::csv));
  write_file(a.output + ".json", render_table(reports, TableFormat::json));
  std::cerr << "wrote " << a.output << ".{md,csv,json}\n";
}

// ---------------------------------------------------------------------------

struct PcapArgs {
  std::string input, output, skipped, protocol, config;
};

void run_pcap_decode(const PcapArgs& a) {
  const auto frames = read_pcap(a.input);
  const auto ex = extract_records(frames);
  std::ostringstream report;
  for (const auto& s : ex.skipped) {
    char type[8];
    std::snprintf(type, sizeof type, "0x%04x", s.ethertype);
    ojson j = {{"frame", s.frame_index},
               {"ethertype", type},
               {"reason", errc_name(s.reason)},
               {"detail", s.detail}};
    report << j.dump() << '\n';
  }
  if (!ex.skipped.empty()) std::cerr << "skipped " << ex.skipped.size() << " frame(s)\n";
  if (!a.skipped.empty()) write_file(a.skipped, report.str());

  Protocol p = Protocol::goose;
  if (!a.protocol.empty()) {
    p = protocol_arg(a.protocol);
  } else if (!ex.goose.empty() && !ex.sv.empty()) {
    throw UsageError("capture holds both GOOSE and SV frames; choose one with --protocol");
  } else if (!ex.sv.empty()) {
    p = Protocol::sv;
  }
  DatasetMeta meta;
  meta.scenario = "pcap:" + fs::path(a.input).filename().string();
  LabeledDataset d;
  if (p == Protocol::goose)
    d = make_dataset(ex.goose, meta);
  else
    d = make_dataset(ex.sv, meta);
  save_dataset(d, a.output);
}

void run_pcap_encode(const PcapArgs& a) {
  write_pcap(dataset_frames(load_dataset(a.input)), a.output);
}

// ---------------------------------------------------------------------------

struct RulesArgs {
  std::string level = "full";
  std::string protocol;
  bool prompt = false;
  std::string output;
  std::string config;
};

void run_rules(const RulesArgs& a) {
  auto lv = parse_level(a.level);
  if (!lv) throw UsageError("--level must be without, partial or full");
  RuleSet rs(*lv);
  std::string text;
  if (a.prompt) {
    if (a.protocol.empty()) throw UsageError("--prompt needs --protocol");
    text = serialize_rules(rs, protocol_arg(a.protocol));
  } else {
    text = format_ruleset(rs);
  }
  if (a.output.empty())
    std::cout << text;
  else
    write_file(a.output, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IEC 61850 GOOSE/SV anomaly detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a labeled scenario or evaluation set");
  g->add_option("--protocol", gen.protocol, "goose or sv")->capture_default_str();
  g->add_option("--duration", gen.duration, "Scenario length (e.g. 10s, 500ms)")->capture_default_str();
  g->add_option("--heartbeat", gen.heartbeat, "GOOSE heartbeat interval")->capture_default_str();
  g->add_option("--start", gen.start, "Timestamp of the first record")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--events", gen.events, "GOOSE state changes")->capture_default_str();
  g->add_option("--rate", gen.rate, "SV samples per second")->capture_default_str();
  g->add_option("--jitter", gen.jitter, "Timing jitter in percent (0-40)")->capture_default_str();
  g->add_option("--inject", gen.inject, "Injections, e.g. dos:2,di:3");
  g->add_option("--scenario", gen.scenario_file, "Scenario key = value file");
  g->add_flag("--eval-set", gen.eval_set, "Build an evaluation set with exact label counts");
  g->add_option("--anomalies", gen.anomalies, "Anomalous records in the evaluation set");
  g->add_option("--normals", gen.normals, "Normal records in the evaluation set");
  g->add_option("--mix", gen.mix, "Class weights, e.g. di:1,dos:1,sys:1,re:1");
  g->add_option("-o,--output", gen.output, "Dataset file (.jsonl or .csv)")->required();
  g->add_option("--pcap", gen.pcap, "Also write the frames as pcap");
  g->add_option("--config", gen.config, "Defaults file (key = value)");

  InjectArgs inj;
  auto* in = app.add_subcommand("inject", "Add labeled anomalies to a dataset");
  in->add_option("-i,--input", inj.input, "Input dataset")->required();
  in->add_option("-o,--output", inj.output, "Output dataset")->required();
  in->add_option("--inject", inj.inject, "Injections, e.g. dos:2,di:3")->required();
  in->add_option("--seed", inj.seed, "Random seed")->capture_default_str();
  in->add_option("--config", inj.config, "Defaults file (key = value)");

  ConvertArgs conv;
  auto* cv = app.add_subcommand("convert", "Convert between JSONL and CSV datasets");
  cv->add_option("-i,--input", conv.input, "Input dataset")->required();
  cv->add_option("-o,--output", conv.output, "Output dataset")->required();
  cv->add_option("--config", conv.config, "Defaults file (key = value)");

  DetectArgs det;
  auto* dt = app.add_subcommand("detect", "Run a detector over a dataset");
  dt->add_option("-i,--input", det.input, "Dataset")->required();
  dt->add_option("--engine", det.engine, "rules, llm or mock")->capture_default_str();
  dt->add_option("--level", det.level, "without, partial or full (default full)");
  dt->add_option("--rules", det.rules_file, "Rule-set file");
  dt->add_option("--detector", det.detector, "Name used in reports");
  dt->add_option("--verdicts", det.verdicts, "Verdict JSONL output");
  dt->add_option("--predictions", det.predictions, "Prediction JSON output");
  dt->add_option("--transcript", det.transcript, "Prompt/response audit JSONL (llm, mock)");
  dt->add_option("--fixtures", det.fixtures, "Reply files for the mock engine");
  dt->add_option("--endpoint", det.endpoint, "Chat-completion URL (llm)");
  dt->add_option("--model", det.model, "Model name (llm)");
  dt->add_option("--token-env", det.token_env, "Environment variable holding the API token")
      ->capture_default_str();
  dt->add_option("--timeout-ms", det.timeout_ms, "Request timeout")->capture_default_str();
  dt->add_option("--max-retries", det.max_retries, "Retries per window")->capture_default_str();
  dt->add_option("--window", det.window, "Records per prompt")->capture_default_str();
  dt->add_option("--config", det.config, "Defaults file (key = value)");

  EvalArgs ev;
  auto* el = app.add_subcommand("eval", "Score prediction files against labels");
  el->add_option("-l,--labels", ev.labels, "Labeled dataset")->required();
  el->add_option("-p,--predictions", ev.predictions, "Prediction files")->required();
  el->add_option("-o,--output", ev.output, "Write PREFIX.md, PREFIX.csv and PREFIX.json");
  el->add_option("--format", ev.format, "stdout format: markdown, csv or json")->capture_default_str();
  el->add_option("--config", ev.config, "Defaults file (key = value)");

  auto* pc = app.add_subcommand("pcap", "Convert between pcap captures and datasets");
  pc->require_subcommand(1);
  PcapArgs pdec, penc;
  auto* pd = pc->add_subcommand("decode", "pcap to dataset");
  pd->add_option("-i,--input", pdec.input, "Capture file")->required();
  pd->add_option("-o,--output", pdec.output, "Dataset file")->required();
  pd->add_option("--protocol", pdec.protocol, "Which stream type to keep (goose or sv)");
  pd->add_option("--skipped", pdec.skipped, "Skip report JSONL");
  pd->add_option("--config", pdec.config, "Defaults file (key = value)");
  auto* pe = pc->add_subcommand("encode", "Dataset to pcap");
  pe->add_option("-i,--input", penc.input, "Dataset file")->required();
  pe->add_option("-o,--output", penc.output, "Capture file")->required();
  pe->add_option("--config", penc.config, "Defaults file (key = value)");

  RulesArgs rl;
  auto* ru = app.add_subcommand("rules", "Print a rule-set file or its prompt text");
  ru->add_option("--level", rl.level, "without, partial or full")->capture_default_str();
  ru->add_option("--protocol", rl.protocol, "goose or sv (with --prompt)");
  ru->add_flag("--prompt", rl.prompt, "Print the serialized rule text");
  ru->add_option("-o,--output", rl.output, "Output file");
  ru->add_option("--config", rl.config, "Defaults file (key = value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*g) {
      apply_config(g, gen.config);
      run_gen(gen);
    } else if (*in) {
      apply_config(in, inj.config);
      run_inject(inj);
    } else if (*cv) {
      apply_config(cv, conv.config);
      run_convert(conv);
    } else if (*dt) {
      apply_config(dt, det.config);
      run_detect(det);
    } else if (*el) {
      apply_config(el, ev.config);
      run_eval(ev);
    } else if (*pd) {
      apply_config(pd, pdec.config);
      run_pcap_decode(pdec);
    } else if (*pe) {
      apply_config(pe, penc.config);
      run_pcap_encode(penc);
    } else if (*ru) {
      apply_config(ru, rl.config);
      run_rules(rl);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
