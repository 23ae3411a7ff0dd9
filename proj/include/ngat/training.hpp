#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ngat/errors.hpp"
#include "ngat/eval.hpp"
#include "ngat/market_data.hpp"
#include "ngat/model.hpp"
#include "ngat/numerics.hpp"
#include "ngat/relation_graph.hpp"

namespace ngat {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  Task task = Task::trend;
  ModelKind model = ModelKind::ngat;
  std::size_t horizon = 1;
  std::size_t window = 21;
  std::size_t hidden = 16;
  std::size_t heads = 1;
  MergeMode merge = MergeMode::concat;
  AttentionReduction reduction = AttentionReduction::sum;
  double dropout = 0.0;
  std::size_t memory = 5;
  double threshold = 0.0;
  std::string graph_method = "cooccurrence";
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  SplitRatios split;
  // Keep only the first k training days (0 keeps all).
  std::size_t max_train_days = 0;
  // Empty selects the canonical six features.
  std::vector<std::string> features;
  bool standardize_targets = true;
  std::string prices;
  std::string documents;
  std::string graph;
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "task",    "model",          "horizon",  "window",     "hidden",         "heads",
      "merge",   "reduction",      "dropout",  "memory",     "threshold",      "graph_method",
      "lr",      "weight_decay",   "max_epochs", "patience", "seed",           "split_train",
      "split_val", "split_test",   "max_train_days", "features", "standardize_targets",
      "prices",  "documents",      "graph"};
  return keys;
}

// Sets one field from its textual form. Unknown keys are rejected.
inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim_copy(raw);
  if (key == "task") c.task = parse_task(v);
  else if (key == "model") c.model = parse_model_kind(v);
  else if (key == "horizon") c.horizon = parse_unsigned(key, v);
  else if (key == "window") c.window = parse_unsigned(key, v);
  else if (key == "hidden") c.hidden = parse_unsigned(key, v);
  else if (key == "heads") c.heads = parse_unsigned(key, v);
  else if (key == "merge") c.merge = parse_merge_mode(v);
  else if (key == "reduction") c.reduction = parse_reduction(v);
  else if (key == "dropout") c.dropout = parse_real(key, v);
  else if (key == "memory") c.memory = parse_unsigned(key, v);
  else if (key == "threshold") c.threshold = parse_real(key, v);
  else if (key == "graph_method") c.graph_method = v;
  else if (key == "lr") c.lr = parse_real(key, v);
  else if (key == "weight_decay") c.weight_decay = parse_real(key, v);
  else if (key == "max_epochs") c.max_epochs = parse_unsigned(key, v);
  else if (key == "patience") c.patience = parse_unsigned(key, v);
  else if (key == "seed") c.seed = parse_unsigned(key, v);
  else if (key == "split_train") c.split.train = parse_real(key, v);
  else if (key == "split_val") c.split.val = parse_real(key, v);
  else if (key == "split_test") c.split.test = parse_real(key, v);
  else if (key == "max_train_days") c.max_train_days = parse_unsigned(key, v);
  else if (key == "features") c.features = split_list(v);
  else if (key == "standardize_targets") c.standardize_targets = parse_bool(key, v);
  else if (key == "prices") c.prices = v;
  else if (key == "documents") c.documents = v;
  else if (key == "graph") c.graph = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

// Flat `key = value` lines; `#` starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim_copy(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(base, detail::trim_copy(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

// Relative data paths are resolved against the config file's directory.
inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  const TrainConfig before = base;
  TrainConfig c = parse_config(in, std::move(base));
  const auto dir = std::filesystem::path(path).parent_path();
  for (auto [field, old] : {std::pair{&c.prices, &before.prices}, std::pair{&c.documents, &before.documents},
                            std::pair{&c.graph, &before.graph}}) {
    if (*field != *old && !field->empty() && std::filesystem::path(*field).is_relative())
      *field = (dir / *field).lexically_normal().string();
  }
  return c;
}

inline void validate(const TrainConfig& c) {
  if (c.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (c.window < 1) throw ConfigError("window must be >= 1");
  if (c.hidden < 1) throw ConfigError("hidden must be >= 1");
  if (c.heads < 1) throw ConfigError("heads must be >= 1");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (c.memory < 1) throw ConfigError("memory must be >= 1");
  if (c.threshold < 0.0 || c.threshold > 1.0) throw ConfigError("threshold must lie in [0, 1]");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  static const std::set<std::string> methods = {"cooccurrence", "correlation", "static", "file"};
  if (!methods.count(c.graph_method)) {
    throw ConfigError("graph_method must be one of cooccurrence, correlation, static, file");
  }
  for (const auto& f : c.features) feature_by_name(f);
  const double total = c.split.train + c.split.val + c.split.test;
  if (c.split.train <= 0.0 || c.split.val < 0.0 || c.split.test < 0.0 || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative, train positive, and sum to 1");
  }
}

// Fields whose values fall outside the hyperparameter search grid.
inline std::vector<std::string> off_grid_fields(const TrainConfig& c) {
  std::vector<std::string> out;
  const auto in = [](auto v, std::initializer_list<decltype(v)> allowed) {
    return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
  };
  if (!in(c.horizon, {1, 5, 10, 21})) out.push_back("horizon");
  if (c.window != 21) out.push_back("window");
  if (!in(c.hidden, {16, 32, 64})) out.push_back("hidden");
  if (!in(c.heads, {1, 4, 8})) out.push_back("heads");
  if (!in(c.dropout, {0.0, 0.2, 0.4, 0.6})) out.push_back("dropout");
  if (!in(c.memory, {1, 2, 3, 5, 7, 10})) out.push_back("memory");
  return out;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)},
          {"model", to_string(c.model)},
          {"horizon", c.horizon},
          {"window", c.window},
          {"hidden", c.hidden},
          {"heads", c.heads},
          {"merge", to_string(c.merge)},
          {"reduction", to_string(c.reduction)},
          {"dropout", c.dropout},
          {"memory", c.memory},
          {"threshold", c.threshold},
          {"graph_method", c.graph_method},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"split_train", c.split.train},
          {"split_val", c.split.val},
          {"split_test", c.split.test},
          {"max_train_days", c.max_train_days},
          {"features", c.features},
          {"standardize_targets", c.standardize_targets},
          {"prices", c.prices},
          {"documents", c.documents},
          {"graph", c.graph}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "features") {
      c.features = value.get<std::vector<std::string>>();
    } else if (value.is_string()) {
      apply_setting(c, key, value.get<std::string>());
    } else if (value.is_boolean()) {
      apply_setting(c, key, value.get<bool>() ? "true" : "false");
    } else if (value.is_number_unsigned()) {
      apply_setting(c, key, std::to_string(value.get<std::uint64_t>()));
    } else if (value.is_number()) {
      apply_setting(c, key, format_double(value.get<double>()));
    } else {
      throw ConfigError("config key '" + key + "' has an unsupported JSON type");
    }
  }
  return c;
}

inline ModelConfig model_config(const TrainConfig& c, std::size_t nodes, std::size_t features) {
  ModelConfig m;
  m.kind = c.model;
  m.task = c.task;
  m.nodes = nodes;
  m.features = features;
  m.hidden = c.hidden;
  m.heads = c.heads;
  m.merge = c.merge;
  m.reduction = c.reduction;
  m.dropout = c.dropout;
  return m;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

// All N samples of one anchor day together with that day's graph.
struct DayBatch {
  std::size_t day = 0;
  std::string date;
  std::vector<Matrix> windows;
  std::vector<double> trend;
  std::vector<double> volatility;
  std::vector<Scenario> scenarios;
  RelationGraph graph;
};

struct TargetScaling {
  double mean = 0.0;
  double std = 1.0;
};

struct PreparedData {
  std::vector<std::string> tickers;
  std::vector<std::string> calendar;
  std::vector<std::string> feature_names;
  NormalizationStats stats;
  TargetScaling target;
  std::vector<DayBatch> train, val, test;
};

inline std::string legend_diff(const std::vector<std::string>& expected,
                               const std::vector<std::string>& actual, const std::string& what) {
  const std::set<std::string> e(expected.begin(), expected.end()), a(actual.begin(), actual.end());
  std::string missing, extra;
  for (const auto& t : e)
    if (!a.count(t)) missing += (missing.empty() ? "" : ", ") + t;
  for (const auto& t : a)
    if (!e.count(t)) extra += (extra.empty() ? "" : ", ") + t;
  std::string msg = "ticker legend mismatch between prices and " + what;
  if (!missing.empty()) msg += "; missing from " + what + ": [" + missing + "]";
  if (!extra.empty()) msg += "; not in prices: [" + extra + "]";
  if (missing.empty() && extra.empty()) msg += "; same tickers in a different order";
  return msg;
}

inline std::vector<FeatureTransform> feature_transforms(const TrainConfig& c) {
  if (c.features.empty()) return canonical_features();
  std::vector<FeatureTransform> out;
  for (const auto& f : c.features) out.push_back(feature_by_name(f));
  return out;
}

inline DaySplit split_for(const PricePanel& panel, const TrainConfig& c) {
  const auto days = eligible_days(panel.num_days(), c.window, c.horizon);
  if (days.empty()) {
    throw ConfigError("no eligible anchor days: " + std::to_string(panel.num_days()) +
                      " days cannot hold a " + std::to_string(c.window) + "-day window and a " +
                      std::to_string(c.horizon) + "-day horizon");
  }
  DaySplit s = split_days(days, c.split, c.horizon);
  if (c.max_train_days > 0 && s.train.size() > c.max_train_days) s.train.resize(c.max_train_days);
  return s;
}

// Calendar date of the last training anchor day.
inline std::string train_end_date(const PricePanel& panel, const TrainConfig& c) {
  return panel.calendar.at(split_for(panel, c).train.back());
}

// Builds per-day batches for all three splits. Normalization and target
// scaling are fitted on the training segment unless supplied.
inline PreparedData prepare_data(const PricePanel& panel, const GraphSeries& graphs,
                                 const TrainConfig& c,
                                 const NormalizationStats* fixed_stats = nullptr,
                                 const TargetScaling* fixed_target = nullptr) {
  validate(c);
  if (graphs.tickers != panel.tickers) throw DataError(legend_diff(panel.tickers, graphs.tickers, "graph"));
  const DaySplit split = split_for(panel, c);
  PreparedData out;
  out.tickers = panel.tickers;
  out.calendar = panel.calendar;
  out.stats = fixed_stats ? *fixed_stats : fit_normalization(panel, split.train.back() + 1);
  const auto transforms = feature_transforms(c);
  const FeatureTable table = normalize_features(panel, out.stats, transforms);
  out.feature_names = table.names;

  const auto batch_for = [&](std::size_t d) {
    if (d >= graphs.days.size() || graphs.days[d].date != panel.calendar[d]) {
      throw DataError("no graph for " + panel.calendar[d]);
    }
    DayBatch b;
    b.day = d;
    b.date = panel.calendar[d];
    b.graph = graphs.days[d];
    for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
      const std::span<const double> r = panel.returns[t];
      b.windows.push_back(make_window(table, t, d, c.window).features);
      b.trend.push_back(trend_label(r, d, c.horizon));
      b.volatility.push_back(volatility_label(r, d, c.horizon));
      b.scenarios.push_back(scenario_tag(r, d, c.horizon));
    }
    return b;
  };
  for (std::size_t d : split.train) out.train.push_back(batch_for(d));
  for (std::size_t d : split.val) out.val.push_back(batch_for(d));
  for (std::size_t d : split.test) out.test.push_back(batch_for(d));

  if (fixed_target) {
    out.target = *fixed_target;
  } else if (c.task == Task::volatility && c.standardize_targets) {
    double sum = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const auto& b : out.train)
      for (double v : b.volatility) sum += v, ++n;
    out.target.mean = sum / static_cast<double>(n);
    for (const auto& b : out.train)
      for (double v : b.volatility) ss += (v - out.target.mean) * (v - out.target.mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    out.target.std = sd > 0.0 ? sd : 1.0;
  }
  return out;
}

// Graph series selected by the config's graph_method.
inline GraphSeries build_graph_series(const PricePanel& panel, const std::vector<DocumentRecord>& docs,
                                      const TrainConfig& c,
                                      std::vector<std::string>* warnings = nullptr) {
  const std::optional<double> tau = c.threshold;
  if (c.graph_method == "cooccurrence") {
    return build_cooccurrence_series(panel.calendar, panel.tickers, docs, c.memory, tau,
                                     UnknownTickerPolicy::warn_and_drop, warnings);
  }
  if (c.graph_method == "correlation") return build_correlation_series(panel, c.memory, tau);
  if (c.graph_method == "static") {
    return build_static_series(panel.calendar, panel.tickers, docs, train_end_date(panel, c), tau);
  }
  throw ConfigError("graph_method '" + c.graph_method + "' needs a graph file");
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline std::vector<double> training_targets(const DayBatch& b, const TrainConfig& c,
                                            const TargetScaling& s) {
  if (c.task == Task::trend) return b.trend;
  std::vector<double> y(b.volatility.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (b.volatility[i] - s.mean) / s.std;
  return y;
}

// Predictions on the original label scale.
inline std::vector<PredictionRecord> predict(const Model& model, const std::vector<DayBatch>& batches,
                                             const TargetScaling& target) {
  std::vector<PredictionRecord> out;
  const Task task = model.config().task;
  for (const auto& b : batches) {
    const auto pred = model.forward(b.windows, b.graph).predictions;
    for (std::size_t t = 0; t < pred.size(); ++t) {
      PredictionRecord r;
      r.ticker = t;
      r.day = b.day;
      r.prediction = task == Task::trend ? pred[t] : pred[t] * target.std + target.mean;
      r.label = task == Task::trend ? b.trend[t] : b.volatility[t];
      r.scenario = b.scenarios[t];
      out.push_back(r);
    }
  }
  return out;
}

inline double mean_loss(const Model& model, const std::vector<DayBatch>& batches, const TrainConfig& c,
                        const TargetScaling& target) {
  double total = 0.0;
  for (const auto& b : batches) total += model.evaluate_loss(b.windows, b.graph, training_targets(b, c, target));
  return total / static_cast<double>(batches.size());
}

// Pooled validation ACC (trend) or MSE (volatility).
inline double selection_metric(Task task, const std::vector<PredictionRecord>& recs) {
  std::vector<double> p, y;
  for (const auto& r : recs) {
    p.push_back(r.prediction);
    y.push_back(r.label);
  }
  if (task == Task::volatility) return mse(p, y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += predicted_class(p[i]) == static_cast<int>(y[i]);
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double monitor = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  // "val_acc", "val_mse", or "train_loss" when there is no validation split.
  std::string monitor;
  double best_monitor = 0.0;
  double final_train_loss = 0.0;
  std::optional<EvaluationReport> test;
  double seconds = 0.0;
  nlohmann::json config;
  std::vector<std::string> warnings;
};

inline bool higher_is_better(const std::string& monitor) { return monitor == "val_acc"; }

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json j;
  j["monitor"] = r.monitor;
  j["best_epoch"] = r.best_epoch;
  j["best_monitor"] = r.best_monitor;
  j["epochs_run"] = r.epochs.size();
  j["final_train_loss"] = r.final_train_loss;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs)
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"monitor", e.monitor}});
  j["test"] = r.test ? to_json(*r.test) : nlohmann::json();
  j["seconds"] = r.seconds;
  j["config"] = r.config;
  j["warnings"] = r.warnings;
  return j;
}

struct TrainResult {
  Model model;
  TrainReport report;
};

// Adam with early stopping. Returns the parameters of the best monitored
// epoch; without a validation split the training loss is monitored.
inline TrainResult train(const TrainConfig& c, const PreparedData& data) {
  validate(c);
  if (data.train.empty()) throw ConfigError("no training days");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nodes = data.tickers.size();
  Model model(model_config(c, nodes, data.feature_names.size()), c.seed);
  std::mt19937_64 dropout_rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  const AdamConfig adam{c.lr, 0.9, 0.999, 1e-8, c.weight_decay};

  TrainReport rep;
  rep.config = to_json(c);
  for (const auto& f : off_grid_fields(c)) rep.warnings.push_back(f + " is outside the search grid");
  const bool have_val = !data.val.empty();
  rep.monitor = have_val ? (c.task == Task::trend ? "val_acc" : "val_mse") : "train_loss";
  const bool higher = higher_is_better(rep.monitor);
  double best = higher ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= c.max_epochs; ++epoch) {
    double total = 0.0;
    for (const auto& b : data.train) {
      model.zero_grad();
      double l = 0.0;
      try {
        l = model.accumulate_gradients(b.windows, b.graph, training_targets(b, c, data.target),
                                       c.dropout > 0.0 ? &dropout_rng : nullptr);
        if (!std::isfinite(l)) throw NumericError("loss is " + std::to_string(l));
        for (auto& p : model.parameters()) adam_step(p, adam);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", day " + b.date +
                           ": " + e.what());
      }
      total += l;
    }
    EpochRecord rec{epoch, total / static_cast<double>(data.train.size()), 0.0};
    rec.monitor = have_val ? selection_metric(c.task, predict(model, data.val, data.target))
                           : mean_loss(model, data.train, c, data.target);
    if (!std::isfinite(rec.monitor)) {
      throw NumericError("non-finite monitored metric at epoch " + std::to_string(epoch));
    }
    rep.epochs.push_back(rec);
    const bool improved = higher ? rec.monitor > best : rec.monitor < best;
    if (improved) {
      best = rec.monitor;
      rep.best_epoch = epoch;
      since_best = 0;
      best_values.clear();
      for (const auto& p : model.parameters()) best_values.push_back(p.value);
    } else if (++since_best > c.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < best_values.size(); ++k) model.parameters()[k].value = best_values[k];
  model.zero_grad();
  rep.best_monitor = best;
  rep.final_train_loss = mean_loss(model, data.train, c, data.target);
  if (!data.test.empty()) {
    const auto recs = predict(model, data.test, data.target);
    rep.test = evaluate_predictions(c.task, data.tickers, recs, "test");
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Grid search and seed averaging
// ---------------------------------------------------------------------------

using DataProvider = std::function<PreparedData(const TrainConfig&)>;

// Cartesian product of textual axis values applied over `base`.
inline std::vector<TrainConfig> expand_grid(const TrainConfig& base,
                                            const std::map<std::string, std::vector<std::string>>& axes) {
  std::vector<TrainConfig> out{base};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis '" + key + "' has no values");
    std::vector<TrainConfig> next;
    for (const auto& c : out)
      for (const auto& v : values) {
        TrainConfig x = c;
        apply_setting(x, key, v);
        next.push_back(std::move(x));
      }
    out = std::move(next);
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> default_search_axes() {
  return {{"hidden", {"16", "32", "64"}},
          {"heads", {"1", "4", "8"}},
          {"dropout", {"0", "0.2", "0.4", "0.6"}},
          {"memory", {"1", "2", "3", "5", "7", "10"}}};
}

struct GridResult {
  std::size_t best_index = 0;
  TrainConfig best;
  std::vector<TrainReport> reports;
};

// Exhaustive search. Best validation metric wins; ties go to the smaller
// hidden size, then fewer heads, then the earlier arm.
inline GridResult grid_search(const std::vector<TrainConfig>& space, const DataProvider& provide) {
  if (space.empty()) throw ConfigError("grid search over an empty configuration space");
  GridResult g;
  for (const auto& c : space) {
    if (c.task != space.front().task) throw ConfigError("grid arms must share one task");
    g.reports.push_back(train(c, provide(c)).report);
  }
  const bool higher = higher_is_better(g.reports.front().monitor);
  for (std::size_t i = 1; i < space.size(); ++i) {
    const double a = g.reports[i].best_monitor, b = g.reports[g.best_index].best_monitor;
    const auto& ci = space[i];
    const auto& cb = space[g.best_index];
    const bool better = higher ? a > b : a < b;
    const bool tie = a == b && std::tie(ci.hidden, ci.heads) < std::tie(cb.hidden, cb.heads);
    if (better || tie) g.best_index = i;
  }
  g.best = space[g.best_index];
  return g;
}

struct SeedSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<TrainReport> reports;
  // Mean over seeds of each averaged test metric.
  std::map<std::string, double> mean_test;
};

inline SeedSummary run_seeds(TrainConfig c, const std::vector<std::uint64_t>& seeds,
                             const DataProvider& provide) {
  SeedSummary s;
  s.seeds = seeds;
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (auto seed : seeds) {
    c.seed = seed;
    s.reports.push_back(train(c, provide(c)).report);
    if (const auto& t = s.reports.back().test)
      for (const auto& [name, m] : t->averaged) {
        acc[name].first += m.mean;
        acc[name].second += 1;
      }
  }
  for (const auto& [name, v] : acc) s.mean_test[name] = v.first / static_cast<double>(v.second);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  TrainConfig config;
  std::vector<std::string> tickers;
  std::vector<std::string> feature_names;
  NormalizationStats stats;
  TargetScaling target;
  Model model;
};

inline nlohmann::json to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = "ngat-checkpoint";
  j["version"] = 1;
  j["config"] = to_json(ck.config);
  j["tickers"] = ck.tickers;
  j["features"] = ck.feature_names;
  j["normalization"] = {{"open_mean", ck.stats.open_mean},
                        {"open_std", ck.stats.open_std},
                        {"volume_mean", ck.stats.volume_mean},
                        {"volume_std", ck.stats.volume_std},
                        {"return_mean", ck.stats.return_mean},
                        {"return_std", ck.stats.return_std}};
  j["target"] = {{"mean", ck.target.mean}, {"std", ck.target.std}};
  for (const auto& p : ck.model.parameters()) {
    j["parameters"][p.name] = {{"rows", p.value.rows()}, {"cols", p.value.cols()},
                               {"values", std::vector<double>(p.value.data().begin(), p.value.data().end())}};
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "ngat-checkpoint") throw DataError("not a checkpoint file");
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    ck.tickers = j.at("tickers").get<std::vector<std::string>>();
    ck.feature_names = j.at("features").get<std::vector<std::string>>();
    const auto& n = j.at("normalization");
    ck.stats.open_mean = n.at("open_mean").get<std::vector<double>>();
    ck.stats.open_std = n.at("open_std").get<std::vector<double>>();
    ck.stats.volume_mean = n.at("volume_mean").get<std::vector<double>>();
    ck.stats.volume_std = n.at("volume_std").get<std::vector<double>>();
    ck.stats.return_mean = n.at("return_mean").get<std::vector<double>>();
    ck.stats.return_std = n.at("return_std").get<std::vector<double>>();
    ck.target.mean = j.at("target").at("mean").get<double>();
    ck.target.std = j.at("target").at("std").get<double>();
    ck.model = Model(model_config(ck.config, ck.tickers.size(), ck.feature_names.size()), 0);
    const auto& params = j.at("parameters");
    for (auto& p : ck.model.parameters()) {
      const auto& e = params.at(p.name);
      Matrix v(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
      const auto vals = e.at("values").get<std::vector<double>>();
      if (vals.size() != v.size()) throw DataError("parameter '" + p.name + "' has the wrong value count");
      std::copy(vals.begin(), vals.end(), v.data().begin());
      ck.model.set_value(p.name, std::move(v));
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << to_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace ngat
