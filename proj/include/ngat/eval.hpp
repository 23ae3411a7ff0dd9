#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngat/errors.hpp"
#include "ngat/market_data.hpp"
#include "ngat/model.hpp"

namespace ngat {

struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }

  void add(int predicted, int actual) {
    if (predicted == 1) (actual == 1 ? tp : fp) += 1;
    else (actual == 1 ? fn : tn) += 1;
  }
};

inline constexpr double kDecisionThreshold = 0.5;

inline int predicted_class(double probability) { return probability >= kDecisionThreshold ? 1 : 0; }

inline ConfusionMatrix confusion(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw DimensionError("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(predicted_class(probabilities[i]), labels[i]);
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractViolation("accuracy: empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

// Zero when any marginal is empty.
inline double mcc(const ConfusionMatrix& cm) {
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

// Mann-Whitney AUC with midranks for ties. Empty when a class is missing.
inline std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j + 1;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

inline double mse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw DimensionError("mse: length mismatch");
  if (predicted.empty()) throw ContractViolation("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

// 1 - SSE/SST around the mean of `actual`. Empty when SST is zero.
inline std::optional<double> r_squared(std::span<const double> predicted,
                                       std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw DimensionError("r_squared: length mismatch");
  if (actual.size() < 2) return std::nullopt;
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    sse += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    sst += (actual[i] - mean) * (actual[i] - mean);
  }
  if (sst == 0.0) return std::nullopt;
  return 1.0 - sse / sst;
}

// ---------------------------------------------------------------------------
// Scenario quadrants
// ---------------------------------------------------------------------------

struct QuadrantCell {
  std::size_t correct = 0;
  std::size_t total = 0;

  std::optional<double> accuracy() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
  }

  // "correct/total (acc)" with four decimals; "0/0 (—)" when empty.
  std::string format() const {
    char buf[64];
    if (total == 0) return "0/0 (—)";
    // Four decimals, truncated exactly in integer arithmetic.
    const std::size_t q = correct * 10000 / total;
    std::snprintf(buf, sizeof(buf), "%zu/%zu (%zu.%04zu)", correct, total, q / 10000, q % 10000);
    return buf;
  }
};

// Indexed by Scenario::index(): (LN,N-), (LN,N+), (LP,N-), (LP,N+).
struct ScenarioTable {
  std::array<QuadrantCell, 4> cells{};

  QuadrantCell& at(const Scenario& s) { return cells[s.index()]; }
  const QuadrantCell& at(const Scenario& s) const { return cells[s.index()]; }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& c : cells) t += c.total;
    return t;
  }
};

struct PredictionRecord {
  std::size_t ticker = 0;
  std::size_t day = 0;
  double prediction = 0.0;
  double label = 0.0;  // 0/1 for trend, realized volatility otherwise
  Scenario scenario;
};

inline ScenarioTable scenario_table(std::span<const PredictionRecord> records) {
  ScenarioTable t;
  for (const auto& r : records) {
    auto& cell = t.at(r.scenario);
    ++cell.total;
    if (predicted_class(r.prediction) == static_cast<int>(r.label)) ++cell.correct;
  }
  return t;
}

// Left-aligns `s` in `width` terminal columns, counting UTF-8 code points.
inline std::string pad_right(const std::string& s, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char ch : s) cols += (ch & 0xC0) != 0x80;
  return cols >= width ? s : s + std::string(width - cols, ' ');
}

// Layout mirrors the scenario-group table: rows N+/N-, columns LN/LP.
inline std::string render_scenario_table(const ScenarioTable& t) {
  const auto cell = [&](bool lp, bool up) { return pad_right(t.at(Scenario{lp, up}).format(), 22); };
  std::ostringstream os;
  os << pad_right("", 5) << pad_right("LN", 22) << "LP\n";
  os << pad_right("N+", 5) << cell(false, true) << cell(true, true) << "\n";
  os << pad_right("N-", 5) << cell(false, false) << cell(true, false) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Per-company averaging
// ---------------------------------------------------------------------------

struct AveragedMetric {
  double mean = 0.0;
  std::size_t companies = 0;
  std::vector<std::string> excluded;
};

// Unweighted mean over companies with a defined value; the rest are listed.
inline AveragedMetric per_company_average(const std::map<std::string, std::optional<double>>& values) {
  AveragedMetric out;
  double sum = 0.0;
  for (const auto& [ticker, v] : values) {
    if (v) {
      sum += *v;
      ++out.companies;
    } else {
      out.excluded.push_back(ticker);
    }
  }
  if (out.companies == 0) throw ContractViolation("per_company_average: no eligible companies");
  out.mean = sum / static_cast<double>(out.companies);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvaluationReport {
  Task task = Task::trend;
  std::string split;
  std::size_t samples = 0;
  // metric name -> ticker -> value (absent when undefined)
  std::map<std::string, std::map<std::string, std::optional<double>>> per_company;
  std::map<std::string, AveragedMetric> averaged;
  std::map<std::string, std::optional<double>> pooled;
  std::optional<ScenarioTable> scenarios;
  nlohmann::json config;

  double averaged_or_nan(const std::string& metric) const {
    auto it = averaged.find(metric);
    return it == averaged.end() ? std::nan("") : it->second.mean;
  }
};

inline std::vector<std::string> metric_names(Task task) {
  if (task == Task::trend) return {"acc", "mcc", "auc"};
  return {"r2", "mse"};
}

namespace detail {

inline std::map<std::string, std::optional<double>> metrics_for(Task task,
                                                               std::span<const double> pred,
                                                               std::span<const double> label) {
  std::map<std::string, std::optional<double>> m;
  if (pred.empty()) return m;
  if (task == Task::trend) {
    std::vector<int> y(label.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(label[i]);
    const auto cm = confusion(pred, y);
    m["acc"] = accuracy(cm);
    m["mcc"] = mcc(cm);
    m["auc"] = auc(pred, y);
  } else {
    m["r2"] = r_squared(pred, label);
    m["mse"] = mse(pred, label);
  }
  return m;
}

}  // namespace detail

inline EvaluationReport evaluate_predictions(Task task, const std::vector<std::string>& tickers,
                                             std::span<const PredictionRecord> records,
                                             std::string split = "test") {
  EvaluationReport rep;
  rep.task = task;
  rep.split = std::move(split);
  rep.samples = records.size();
  if (records.empty()) return rep;
  std::vector<std::vector<double>> pred(tickers.size()), lab(tickers.size());
  std::vector<double> all_pred, all_lab;
  for (const auto& r : records) {
    pred.at(r.ticker).push_back(r.prediction);
    lab.at(r.ticker).push_back(r.label);
    all_pred.push_back(r.prediction);
    all_lab.push_back(r.label);
  }
  for (std::size_t t = 0; t < tickers.size(); ++t) {
    if (pred[t].empty()) continue;
    for (auto& [name, v] : detail::metrics_for(task, pred[t], lab[t])) rep.per_company[name][tickers[t]] = v;
  }
  for (const auto& [name, values] : rep.per_company) {
    const bool any = std::any_of(values.begin(), values.end(), [](const auto& kv) { return kv.second.has_value(); });
    if (any) rep.averaged[name] = per_company_average(values);
  }
  rep.pooled = detail::metrics_for(task, all_pred, all_lab);
  if (task == Task::trend) rep.scenarios = scenario_table(records);
  return rep;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

inline nlohmann::json to_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["task"] = to_string(rep.task);
  j["split"] = rep.split;
  j["samples"] = rep.samples;
  j["r2_baseline"] = "mean of evaluated actuals";
  for (const auto& [name, m] : rep.averaged) {
    j["averaged"][name] = {{"mean", m.mean}, {"companies", m.companies}, {"excluded", m.excluded}};
  }
  for (const auto& [name, v] : rep.pooled) j["pooled"][name] = optional_json(v);
  for (const auto& [name, values] : rep.per_company)
    for (const auto& [ticker, v] : values) j["per_company"][ticker][name] = optional_json(v);
  if (rep.scenarios) {
    for (bool lp : {true, false})
      for (bool up : {true, false}) {
        const Scenario s{lp, up};
        const auto& c = rep.scenarios->at(s);
        j["scenarios"][s.label()] = {{"correct", c.correct},
                                     {"total", c.total},
                                     {"accuracy", optional_json(c.accuracy())},
                                     {"cell", c.format()}};
      }
  }
  if (!rep.config.is_null()) j["config"] = rep.config;
  return j;
}

inline std::string to_text(const EvaluationReport& rep) {
  std::ostringstream os;
  char line[256];
  os << "task: " << to_string(rep.task) << "   split: " << rep.split << "   samples: " << rep.samples << "\n";
  std::snprintf(line, sizeof(line), "%-8s %12s %12s %10s\n", "metric", "averaged", "pooled", "excluded");
  os << line;
  for (const auto& name : metric_names(rep.task)) {
    const auto a = rep.averaged.find(name);
    const auto p = rep.pooled.find(name);
    const std::string avg = a == rep.averaged.end() ? "-" : format_double(std::round(a->second.mean * 1e4) / 1e4);
    const std::string pooled = (p == rep.pooled.end() || !p->second) ? "-" : format_double(std::round(*p->second * 1e4) / 1e4);
    const std::size_t ex = a == rep.averaged.end() ? 0 : a->second.excluded.size();
    std::snprintf(line, sizeof(line), "%-8s %12s %12s %10zu\n", name.c_str(), avg.c_str(), pooled.c_str(), ex);
    os << line;
  }
  if (rep.scenarios) os << "\nscenario groups\n" << render_scenario_table(*rep.scenarios);
  return os.str();
}

}  // namespace ngat
