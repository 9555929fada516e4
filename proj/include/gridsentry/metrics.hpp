#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsentry/error.hpp"
#include "gridsentry/rules.hpp"
#include "gridsentry/types.hpp"

namespace gridsentry {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive class = anomalous record.
inline ConfusionCounts confusion(const std::vector<AnomalyClass>& labels,
                                 const std::vector<bool>& predictions) {
  if (labels.size() != predictions.size())
    throw Error(Errc::invariant_violation, "labels and predictions differ in length (" +
                                               std::to_string(labels.size()) + " vs " +
                                               std::to_string(predictions.size()) + ")");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (is_anomalous(labels[i]))
      ++(predictions[i] ? c.tp : c.fn);
    else
      ++(predictions[i] ? c.fp : c.tn);
  }
  return c;
}

struct ReportCell {
  std::string detector;
  TrainingLevel level = TrainingLevel::without;
  Protocol protocol = Protocol::goose;

  friend auto operator<=>(const ReportCell&, const ReportCell&) = default;
};

/// Ratios in [0,1]; nullopt where the denominator is zero.
struct MetricsReport {
  ConfusionCounts counts;
  ReportCell cell;
  std::optional<double> tpr, fpr, fnr, precision, f1;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

namespace metrics_detail {
inline std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace metrics_detail

inline MetricsReport metrics(const ConfusionCounts& c, ReportCell cell = {}) {
  using metrics_detail::ratio;
  MetricsReport r;
  r.counts = c;
  r.cell = std::move(cell);
  r.tpr = ratio(c.tp, c.tp + c.fn);
  r.fpr = ratio(c.fp, c.fp + c.tn);
  r.fnr = ratio(c.fn, c.fn + c.tp);
  r.precision = ratio(c.tp, c.tp + c.fp);
  if (r.tpr && r.precision) {
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); undefined only when tp == 0.
    r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    if (c.tp == 0) r.f1.reset();
  }
  return r;
}

enum class TableFormat { markdown, csv, json };

inline std::optional<TableFormat> parse_table_format(std::string_view s) {
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 5> kMetricNames = {"TPR", "FPR", "FNR",
                                                                 "Precision", "F1"};

inline std::array<std::optional<double>, 5> metric_values(const MetricsReport& r) {
  return {r.tpr, r.fpr, r.fnr, r.precision, r.f1};
}

/// Percentage with two decimals, or an em-width dash when undefined.
inline std::string format_percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

namespace metrics_detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

struct ProtocolTable {
  Protocol protocol;
  std::vector<const MetricsReport*> columns;
};

/// Column groups: detectors in first-appearance order, levels in training order.
inline std::vector<ProtocolTable> arrange(std::span<const MetricsReport> reports) {
  std::vector<ReportCell> seen;
  for (const auto& r : reports) {
    if (std::find(seen.begin(), seen.end(), r.cell) != seen.end())
      throw Error(Errc::invariant_violation, "duplicate report cell " + r.cell.detector + "/" +
                                                 std::string(level_name(r.cell.level)) + "/" +
                                                 std::string(protocol_name(r.cell.protocol)));
    seen.push_back(r.cell);
  }
  std::vector<std::string> detectors;
  for (const auto& r : reports)
    if (std::find(detectors.begin(), detectors.end(), r.cell.detector) == detectors.end())
      detectors.push_back(r.cell.detector);

  std::vector<ProtocolTable> out;
  for (auto p : {Protocol::goose, Protocol::sv}) {
    ProtocolTable t{p, {}};
    for (const auto& det : detectors)
      for (auto lv : {TrainingLevel::without, TrainingLevel::partial, TrainingLevel::full})
        for (const auto& r : reports)
          if (r.cell.protocol == p && r.cell.detector == det && r.cell.level == lv)
            t.columns.push_back(&r);
    if (!t.columns.empty()) out.push_back(std::move(t));
  }
  return out;
}

inline std::string column_title(const MetricsReport& r) {
  return r.cell.detector + " " + std::string(level_name(r.cell.level));
}

}  // namespace metrics_detail

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  using metrics_detail::optional_json;
  return {{"detector", r.cell.detector},
          {"level", level_name(r.cell.level)},
          {"protocol", protocol_name(r.cell.protocol)},
          {"tp", r.counts.tp},
          {"fn", r.counts.fn},
          {"fp", r.counts.fp},
          {"tn", r.counts.tn},
          {"tpr", optional_json(r.tpr)},
          {"fpr", optional_json(r.fpr)},
          {"fnr", optional_json(r.fnr)},
          {"precision", optional_json(r.precision)},
          {"f1", optional_json(r.f1)}};
}

/// Metric rows, detector x level columns, one table per protocol.
inline std::string render_table(std::span<const MetricsReport> reports, TableFormat format) {
  const auto tables = metrics_detail::arrange(reports);
  std::ostringstream os;
  switch (format) {
    case TableFormat::markdown: {
      if (tables.empty()) {
        os << "| Metric |\n|---|\n";
        break;
      }
      for (std::size_t k = 0; k < tables.size(); ++k) {
        const auto& t = tables[k];
        if (k) os << '\n';
        os << "### " << protocol_name(t.protocol) << "\n\n| Metric |";
        for (auto* r : t.columns) os << ' ' << metrics_detail::column_title(*r) << " |";
        os << "\n|---|";
        for (std::size_t i = 0; i < t.columns.size(); ++i) os << "---:|";
        os << '\n';
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
          os << "| " << kMetricNames[m] << " |";
          for (auto* r : t.columns) os << ' ' << format_percent(metric_values(*r)[m]) << " |";
          os << '\n';
        }
      }
      break;
    }
    case TableFormat::csv: {
      if (tables.empty()) {
        os << "protocol,metric\n";
        break;
      }
      for (std::size_t k = 0; k < tables.size(); ++k) {
        const auto& t = tables[k];
        if (k) os << '\n';
        os << "protocol,metric";
        for (auto* r : t.columns) os << ',' << metrics_detail::csv_cell(metrics_detail::column_title(*r));
        os << '\n';
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
          os << protocol_name(t.protocol) << ',' << kMetricNames[m];
          for (auto* r : t.columns) {
            const auto v = metric_values(*r)[m];
            os << ',' << (v ? format_percent(v) : std::string());
          }
          os << '\n';
        }
      }
      break;
    }
    case TableFormat::json: {
      nlohmann::ordered_json j = {{"reports", nlohmann::ordered_json::array()}};
      for (const auto& t : tables)
        for (auto* r : t.columns) j["reports"].push_back(report_json(*r));
      os << j.dump(2) << '\n';
      break;
    }
  }
  return os.str();
}

/// Reads the JSON rendering back. Metrics are recomputed from the counts.
inline std::vector<MetricsReport> load_reports_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, std::string("report JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("reports") || !j["reports"].is_array())
    throw Error(Errc::schema_error, "report JSON needs a reports array", std::nullopt, "reports");
  std::vector<MetricsReport> out;
  std::size_t n = 0;
  for (const auto& e : j["reports"]) {
    ++n;
    try {
      ReportCell cell;
      cell.detector = e.at("detector").get<std::string>();
      const auto lv = parse_level(e.at("level").get<std::string>());
      const auto pr = parse_protocol(e.at("protocol").get<std::string>());
      if (!lv || !pr) throw Error(Errc::schema_error, "bad level or protocol", n, "cell");
      cell.level = *lv;
      cell.protocol = *pr;
      ConfusionCounts c{e.at("tp").get<std::uint64_t>(), e.at("fp").get<std::uint64_t>(),
                        e.at("tn").get<std::uint64_t>(), e.at("fn").get<std::uint64_t>()};
      out.push_back(metrics(c, std::move(cell)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::schema_error, std::string("report entry: ") + ex.what(), n);
    }
  }
  metrics_detail::arrange(out);
  return out;
}

/// Auxiliary per-class view: how many records of each label were flagged.
struct ClassRecall {
  AnomalyClass klass;
  std::uint64_t flagged = 0;
  std::uint64_t total = 0;
};

inline std::vector<ClassRecall> class_breakdown(const std::vector<AnomalyClass>& labels,
                                                const std::vector<bool>& predictions) {
  if (labels.size() != predictions.size())
    throw Error(Errc::invariant_violation, "labels and predictions differ in length");
  std::vector<ClassRecall> out;
  for (auto k : {AnomalyClass::normal, AnomalyClass::data_injection, AnomalyClass::dos,
                 AnomalyClass::system_problem, AnomalyClass::replay}) {
    ClassRecall c{k, 0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == k) {
        ++c.total;
        c.flagged += predictions[i];
      }
    if (c.total) out.push_back(c);
  }
  return out;
}

}  // namespace gridsentry
