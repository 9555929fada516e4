#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridsentry/gridsentry.hpp"

namespace fs = std::filesystem;
using namespace gridsentry;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::path(GRIDSENTRY_TEST_TMP) / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(GRIDSENTRY_CLI) + " " + args + " >" + p("stdout.txt") +
                            " 2>" + p("stderr.txt");
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string out() const { return slurp(p("stdout.txt")); }
  std::string err() const { return slurp(p("stderr.txt")); }

  static std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  static std::size_t lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(p(name), std::ios::binary) << text;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenSvOneSecond) {
  ASSERT_EQ(run("gen --protocol sv --duration 1s --seed 1 -o " + p("sv.jsonl")), 0) << err();
  const auto d = load_jsonl(fs::path(p("sv.jsonl")));
  ASSERT_TRUE(std::holds_alternative<SvDataset>(d));
  EXPECT_EQ(std::get<SvDataset>(d).size(), 4800u);
  EXPECT_NE(err().find("wrote 4800 records (0 anomalous)"), std::string::npos) << err();
}

TEST_F(Cli, GenIsDeterministic) {
  const std::string args = "gen --protocol goose --duration 60s --events 3 --jitter 5 --inject dos:1,di:2,re:1 --seed 9 -o ";
  ASSERT_EQ(run(args + p("a.jsonl")), 0) << err();
  ASSERT_EQ(run(args + p("b.jsonl")), 0) << err();
  EXPECT_EQ(slurp(p("a.jsonl")), slurp(p("b.jsonl")));
  ASSERT_EQ(run(args.substr(0, args.find("--seed")) + "--seed 10 -o " + p("c.jsonl")), 0);
  EXPECT_NE(slurp(p("a.jsonl")), slurp(p("c.jsonl")));
}

TEST_F(Cli, InjectListLabels) {
  ASSERT_EQ(run("gen --protocol goose --duration 60s --inject dos:2,di:3 --seed 3 -o " + p("g.jsonl")), 0)
      << err();
  const auto d = std::get<GooseDataset>(load_jsonl(fs::path(p("g.jsonl"))));
  const auto di = std::count(d.labels.begin(), d.labels.end(), AnomalyClass::data_injection);
  const auto dos = std::count(d.labels.begin(), d.labels.end(), AnomalyClass::dos);
  EXPECT_EQ(di, 3);
  // Two bursts, each longer than the packet limit.
  EXPECT_GE(dos, 2 * 11);
  EXPECT_LE(dos, 2 * 30);
}

TEST_F(Cli, InjectSubcommandMatchesGen) {
  ASSERT_EQ(run("gen --protocol sv --duration 200ms --seed 4 -o " + p("clean.jsonl")), 0);
  ASSERT_EQ(run("inject -i " + p("clean.jsonl") + " -o " + p("dirty.jsonl") + " --inject di:2 --seed 4"), 0)
      << err();
  const auto d = std::get<SvDataset>(load_jsonl(fs::path(p("dirty.jsonl"))));
  EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), AnomalyClass::data_injection), 2);
}

TEST_F(Cli, DetectCleanAndWithout) {
  ASSERT_EQ(run("gen --protocol goose --duration 30s --events 2 --seed 2 -o " + p("clean.jsonl")), 0);
  ASSERT_EQ(run("detect -i " + p("clean.jsonl") + " --verdicts " + p("v.jsonl")), 0) << err();
  EXPECT_EQ(slurp(p("v.jsonl")), "");

  ASSERT_EQ(run("gen --protocol goose --eval-set --seed 2 -o " + p("eval.jsonl")), 0);
  ASSERT_EQ(run("detect -i " + p("eval.jsonl") + " --level without --verdicts " + p("w.jsonl") +
                " --predictions " + p("w.json")),
            0);
  EXPECT_EQ(slurp(p("w.jsonl")), "");
  const auto j = nlohmann::json::parse(slurp(p("w.json")));
  EXPECT_EQ(j["level"], "without");
  EXPECT_EQ(j["records"], 80);
  for (const auto& v : j["predictions"]) EXPECT_EQ(v, 0);
}

TEST_F(Cli, DetectVerdictShape) {
  ASSERT_EQ(run("gen --protocol sv --eval-set --seed 5 -o " + p("eval.jsonl")), 0);
  ASSERT_EQ(run("detect -i " + p("eval.jsonl") + " --verdicts " + p("v.jsonl")), 0) << err();
  std::istringstream in(slurp(p("v.jsonl")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j["record"].is_number_unsigned());
    EXPECT_TRUE(j["rule"].is_string());
    EXPECT_FALSE(j["explanation"].get<std::string>().empty());
    ++n;
  }
  EXPECT_GT(n, 0u);
}

TEST_F(Cli, MockFixtures) {
  ASSERT_EQ(run("gen --protocol goose --eval-set --anomalies 10 --normals 10 --seed 1 -o " + p("e.jsonl")), 0);
  fs::create_directories(p("fx"));
  write("fx/window_0.txt", "Rows 0 and 3 look forged.\n{\"anomalies\": [0, 3]}\n");
  ASSERT_EQ(run("detect -i " + p("e.jsonl") + " --engine mock --fixtures " + p("fx") +
                " --window 10 --predictions " + p("m.json") + " --transcript " + p("t.jsonl")),
            0)
      << err();
  const auto j = nlohmann::json::parse(slurp(p("m.json")));
  EXPECT_EQ(j["detector"], "mock");
  std::vector<int> preds = j["predictions"].get<std::vector<int>>();
  ASSERT_EQ(preds.size(), 20u);
  EXPECT_EQ(preds[0], 1);
  EXPECT_EQ(preds[3], 1);
  // Second window has no reply file and scores all-normal.
  EXPECT_EQ(std::count(preds.begin(), preds.end(), 1), 2);
  // One attempt for window 0, three for the missing window 1.
  EXPECT_EQ(lines(slurp(p("t.jsonl"))), 4u);
  EXPECT_NE(err().find("failed"), std::string::npos) << err();
}

TEST_F(Cli, MockRulesAgreesWithEngine) {
  ASSERT_EQ(run("gen --protocol sv --eval-set --seed 8 -o " + p("e.jsonl")), 0);
  ASSERT_EQ(run("detect -i " + p("e.jsonl") + " --predictions " + p("r.json")), 0);
  ASSERT_EQ(run("detect -i " + p("e.jsonl") + " --engine mock --predictions " + p("m.json")), 0);
  const auto r = nlohmann::json::parse(slurp(p("r.json")));
  const auto m = nlohmann::json::parse(slurp(p("m.json")));
  EXPECT_EQ(r["predictions"], m["predictions"]);
}

TEST_F(Cli, EvalTwoDetectors) {
  ASSERT_EQ(run("gen --protocol goose --eval-set --seed 3 -o " + p("e.jsonl")), 0);
  ASSERT_EQ(run("detect -i " + p("e.jsonl") + " --level full --predictions " + p("f.json")), 0);
  ASSERT_EQ(run("detect -i " + p("e.jsonl") + " --level partial --predictions " + p("q.json")), 0);
  ASSERT_EQ(run("eval -l " + p("e.jsonl") + " -p " + p("q.json") + " -p " + p("f.json")), 0) << err();
  const auto md = out();
  EXPECT_NE(md.find("### GOOSE"), std::string::npos);
  EXPECT_NE(md.find("| Metric | rules partial | rules full |"), std::string::npos) << md;
  EXPECT_NE(md.find("| TPR |"), std::string::npos);
  // The engine at full training recovers every label.
  EXPECT_NE(md.find("| 100.00 |\n| FPR |"), std::string::npos) << md;

  ASSERT_EQ(run("eval -l " + p("e.jsonl") + " -p " + p("f.json") + " -o " + p("rep")), 0);
  EXPECT_FALSE(slurp(p("rep.md")).empty());
  EXPECT_EQ(slurp(p("rep.csv")).rfind("protocol,metric,rules full\n", 0), 0u);
  EXPECT_EQ(load_reports_json(slurp(p("rep.json"))).size(), 1u);
}

TEST_F(Cli, EvalRejectsLengthMismatch) {
  ASSERT_EQ(run("gen --protocol goose --eval-set --seed 3 -o " + p("e.jsonl")), 0);
  write("bad.json", R"({"detector":"x","level":"full","protocol":"GOOSE","predictions":[0,1]})");
  EXPECT_EQ(run("eval -l " + p("e.jsonl") + " -p " + p("bad.json")), 1);
  write("sv.json", R"({"detector":"x","level":"full","protocol":"SV","predictions":[]})");
  EXPECT_EQ(run("eval -l " + p("e.jsonl") + " -p " + p("sv.json")), 1);
}

TEST_F(Cli, PcapRoundTrip) {
  ASSERT_EQ(run("gen --protocol sv --duration 100ms --seed 1 -o " + p("a.jsonl") + " --pcap " + p("a.pcap")), 0);
  ASSERT_EQ(run("pcap encode -i " + p("a.jsonl") + " -o " + p("b.pcap")), 0);
  EXPECT_EQ(slurp(p("a.pcap")), slurp(p("b.pcap")));
  ASSERT_EQ(run("pcap decode -i " + p("a.pcap") + " -o " + p("c.jsonl")), 0) << err();
  const auto a = std::get<SvDataset>(load_jsonl(fs::path(p("a.jsonl"))));
  const auto c = std::get<SvDataset>(load_jsonl(fs::path(p("c.jsonl"))));
  EXPECT_EQ(a.records, c.records);
}

TEST_F(Cli, PcapEmptyDataset) {
  write("empty.jsonl", "{\"schema\":\"gridsentry/v1\",\"protocol\":\"GOOSE\"}\n");
  ASSERT_EQ(run("pcap encode -i " + p("empty.jsonl") + " -o " + p("e.pcap")), 0) << err();
  EXPECT_EQ(fs::file_size(p("e.pcap")), 24u);
  ASSERT_EQ(run("pcap decode -i " + p("e.pcap") + " -o " + p("back.jsonl")), 0) << err();
  EXPECT_EQ(lines(slurp(p("back.jsonl"))), 1u);
}

TEST_F(Cli, PcapMixedCaptureReportsSkips) {
  std::vector<RawFrame> frames;
  GooseRecord g;
  g.gocbRef = "IED1/LLN0$GO$gcb1";
  g.goID = "gcb1";
  g.datSet = "IED1/LLN0$ds1";
  g.time_us = 1000;
  frames.push_back(to_frame(g));
  SvRecord s;
  s.svID = "MU01";
  s.time_us = 2000;
  frames.push_back(to_frame(s));
  RawFrame ip;
  ip.ethertype = 0x0800;
  ip.timestamp = 3000;
  ip.payload = {1, 2, 3};
  frames.push_back(ip);
  write_pcap(frames, p("mixed.pcap"));

  EXPECT_EQ(run("pcap decode -i " + p("mixed.pcap") + " -o " + p("x.jsonl")), 2);
  ASSERT_EQ(run("pcap decode -i " + p("mixed.pcap") + " --protocol sv -o " + p("sv.jsonl") +
                " --skipped " + p("skip.jsonl")),
            0)
      << err();
  EXPECT_EQ(std::get<SvDataset>(load_jsonl(fs::path(p("sv.jsonl")))).size(), 1u);
  const auto skip = nlohmann::json::parse(slurp(p("skip.jsonl")));
  EXPECT_EQ(skip["frame"], 2);
  EXPECT_EQ(skip["ethertype"], "0x0800");
  EXPECT_EQ(skip["reason"], "protocol-mismatch");
}

TEST_F(Cli, ConvertCsvRoundTrip) {
  ASSERT_EQ(run("gen --protocol goose --eval-set --seed 6 -o " + p("a.jsonl")), 0);
  ASSERT_EQ(run("convert -i " + p("a.jsonl") + " -o " + p("a.csv")), 0) << err();
  ASSERT_EQ(run("convert -i " + p("a.csv") + " -o " + p("b.csv")), 0) << err();
  EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
}

TEST_F(Cli, RulesPrompt) {
  ASSERT_EQ(run("rules --level partial --protocol goose --prompt"), 0);
  EXPECT_EQ(out(), serialize_rules(RuleSet(TrainingLevel::partial), Protocol::goose));
  ASSERT_EQ(run("rules --level partial -o " + p("r.txt")), 0);
  EXPECT_EQ(load_ruleset(fs::path(p("r.txt"))).level(), TrainingLevel::partial);
}

TEST_F(Cli, ConfigFileFillsDefaults) {
  write("gen.conf", "protocol = sv\nduration = 10ms\n");
  ASSERT_EQ(run("gen --config " + p("gen.conf") + " -o " + p("a.jsonl")), 0) << err();
  EXPECT_EQ(std::get<SvDataset>(load_jsonl(fs::path(p("a.jsonl")))).size(), 48u);
  // Command line wins over the file.
  ASSERT_EQ(run("gen --config " + p("gen.conf") + " --duration 20ms -o " + p("b.jsonl")), 0);
  EXPECT_EQ(std::get<SvDataset>(load_jsonl(fs::path(p("b.jsonl")))).size(), 96u);
  write("bad.conf", "colour = red\n");
  EXPECT_EQ(run("gen --config " + p("bad.conf") + " -o " + p("c.jsonl")), 2);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(out().find("detect"), std::string::npos);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gen --bogus -o x"), 2);
  EXPECT_EQ(run("gen --protocol mms -o " + p("x.jsonl")), 2);
  EXPECT_EQ(run("gen --duration soon -o " + p("x.jsonl")), 2);
  EXPECT_EQ(run("detect -i " + p("missing.jsonl") + " --verdicts " + p("v")), 1);
  EXPECT_EQ(run("detect -i " + p("missing.jsonl")), 2);
  EXPECT_EQ(run("detect -i x --engine llm --verdicts v"), 2);
}
