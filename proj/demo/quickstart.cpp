// Generates a small labeled GOOSE set, runs the rule engine at each training
// level and prints the metrics table.

#include <iostream>
#include <vector>

#include "gridsentry/gridsentry.hpp"

using namespace gridsentry;

int main() {
  const LabeledDataset d = make_eval_set(Protocol::goose, 55, 25, {}, 7);
  const auto& labels = std::get<GooseDataset>(d).labels;

  std::vector<MetricsReport> reports;
  for (auto lv : {TrainingLevel::without, TrainingLevel::partial, TrainingLevel::full}) {
    const RuleSet rules(lv);
    const auto verdicts = detect_batch(d, rules);
    const auto predictions = verdicts_to_predictions(verdicts, labels.size());
    reports.push_back(metrics(confusion(labels, predictions), {"rules", lv, Protocol::goose}));
  }
  std::cout << render_table(reports, TableFormat::markdown);

  const auto verdicts = detect_batch(d, RuleSet(TrainingLevel::full));
  std::cout << "\nfirst verdicts:\n";
  for (std::size_t i = 0; i < verdicts.size() && i < 5; ++i)
    std::cout << "  #" << verdicts[i].record_index << ' ' << rule_name(verdicts[i].rule) << ": "
              << verdicts[i].explanation << '\n';
}
