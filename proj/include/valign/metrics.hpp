#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "valign/dataset.hpp"

namespace valign {

// Gold label rows, predicted label columns. Abstentions are a separate
// column that is never correct.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> counts{};
  std::array<std::size_t, kNumLabels> abstained{};

  void add(Label gold, std::optional<Label> pred) {
    if (pred) {
      ++counts[index_of(gold)][index_of(*pred)];
    } else {
      ++abstained[index_of(gold)];
    }
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t g = 0; g < kNumLabels; ++g) {
      for (auto c : counts[g]) n += c;
      n += abstained[g];
    }
    return n;
  }

  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kNumLabels; ++i) n += counts[i][i];
    return n;
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::size_t predicted = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::array<ClassMetrics, kNumLabels> per_class{};
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::size_t n_samples = 0;
  std::size_t abstentions = 0;
};

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.n_samples = cm.total();
  for (auto a : cm.abstained) r.abstentions += a;
  r.accuracy = safe_ratio(static_cast<double>(cm.trace()), static_cast<double>(r.n_samples));
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& m = r.per_class[c];
    const auto tp = static_cast<double>(cm.counts[c][c]);
    for (std::size_t p = 0; p < kNumLabels; ++p) m.support += cm.counts[c][p];
    m.support += cm.abstained[c];
    for (std::size_t g = 0; g < kNumLabels; ++g) m.predicted += cm.counts[g][c];
    m.precision = safe_ratio(tp, static_cast<double>(m.predicted));
    m.recall = safe_ratio(tp, static_cast<double>(m.support));
    m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    const double w = safe_ratio(static_cast<double>(m.support), static_cast<double>(r.n_samples));
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
    r.macro_f1 += m.f1 / static_cast<double>(kNumLabels);
  }
  return r;
}

inline MetricsReport compute_metrics(std::span<const Label> golds, std::span<const std::optional<Label>> preds) {
  if (golds.size() != preds.size()) {
    throw InputError("gold/prediction length mismatch: " + std::to_string(golds.size()) + " vs " +
                     std::to_string(preds.size()));
  }
  if (golds.empty()) throw InputError("cannot compute metrics on empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < golds.size(); ++i) cm.add(golds[i], preds[i]);
  return metrics_from_confusion(cm);
}

inline MetricsReport compute_metrics(std::span<const Label> golds, std::span<const Label> preds) {
  std::vector<std::optional<Label>> wrapped(preds.begin(), preds.end());
  return compute_metrics(golds, std::span<const std::optional<Label>>(wrapped));
}

inline std::vector<Label> gold_labels(const std::vector<Triplet>& triplets) {
  std::vector<Label> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) out.push_back(t.label);
  return out;
}

// Slices by the content's source category.
inline std::map<std::string, MetricsReport> per_category_metrics(const std::vector<Triplet>& test,
                                                                 std::span<const std::optional<Label>> preds) {
  if (test.size() != preds.size()) {
    throw InputError("predictions not aligned with test set: " + std::to_string(preds.size()) + " vs " +
                     std::to_string(test.size()));
  }
  std::map<std::string, ConfusionMatrix> slices;
  for (std::size_t i = 0; i < test.size(); ++i) slices[test[i].content_category_id].add(test[i].label, preds[i]);
  std::map<std::string, MetricsReport> out;
  for (const auto& [id, cm] : slices) out.emplace(id, metrics_from_confusion(cm));
  return out;
}

inline std::map<std::string, MetricsReport> per_category_metrics(const std::vector<Triplet>& test,
                                                                 std::span<const Label> preds) {
  std::vector<std::optional<Label>> wrapped(preds.begin(), preds.end());
  return per_category_metrics(test, std::span<const std::optional<Label>>(wrapped));
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation over seeds.
struct AggregateReport {
  std::map<std::string, MetricSummary> metrics;
  std::size_t n_reports = 0;
};

inline std::map<std::string, double> scalar_metrics(const MetricsReport& r) {
  std::map<std::string, double> out{{"accuracy", r.accuracy},
                                    {"weighted_precision", r.weighted_precision},
                                    {"weighted_recall", r.weighted_recall},
                                    {"weighted_f1", r.weighted_f1},
                                    {"macro_f1", r.macro_f1}};
  for (auto l : kLabelOrder) {
    const auto& m = r.per_class[index_of(l)];
    const std::string name(to_string(l));
    out[name + ".precision"] = m.precision;
    out[name + ".recall"] = m.recall;
    out[name + ".f1"] = m.f1;
  }
  return out;
}

inline AggregateReport aggregate_seeds(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw InputError("cannot aggregate an empty list of reports");
  AggregateReport agg;
  agg.n_reports = reports.size();
  std::map<std::string, std::vector<double>> columns;
  for (const auto& r : reports) {
    for (const auto& [name, v] : scalar_metrics(r)) columns[name].push_back(v);
  }
  const auto n = static_cast<double>(reports.size());
  for (const auto& [name, values] : columns) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    agg.metrics[name] = {mean, std::sqrt(var / n)};
  }
  return agg;
}

inline ordered_json to_json(const MetricsReport& r) {
  ordered_json per_class = ordered_json::object();
  for (auto l : kLabelOrder) {
    const auto& m = r.per_class[index_of(l)];
    per_class[std::string(to_string(l))] = {{"precision", m.precision},
                                            {"recall", m.recall},
                                            {"f1", m.f1},
                                            {"support", m.support},
                                            {"predicted", m.predicted}};
  }
  return {{"accuracy", r.accuracy},
          {"weighted_precision", r.weighted_precision},
          {"weighted_recall", r.weighted_recall},
          {"weighted_f1", r.weighted_f1},
          {"macro_f1", r.macro_f1},
          {"n_samples", r.n_samples},
          {"abstentions", r.abstentions},
          {"per_class", per_class}};
}

inline ordered_json to_json(const AggregateReport& a) {
  ordered_json metrics = ordered_json::object();
  for (const auto& [name, s] : a.metrics) metrics[name] = {{"mean", s.mean}, {"std", s.std}};
  return {{"n_reports", a.n_reports}, {"std_convention", "population"}, {"metrics", metrics}};
}

}  // namespace valign
