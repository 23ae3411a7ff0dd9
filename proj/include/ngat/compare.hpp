#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngat/eval.hpp"
#include "ngat/relation_graph.hpp"
#include "ngat/training.hpp"

namespace ngat {

// A named way of turning the shared data into one graph per calendar day.
struct GraphMethod {
  std::string name;
  std::string label;
  std::function<GraphSeries(const PricePanel&, const TrainConfig&)> build;
};

inline GraphMethod cooccurrence_method(std::vector<DocumentRecord> docs, std::size_t delta,
                                       std::optional<double> tau = 0.0) {
  return {"cooccurrence-" + std::to_string(delta), "Cooccurrence (" + std::to_string(delta) + " day)",
          [docs = std::move(docs), delta, tau](const PricePanel& p, const TrainConfig&) {
            return build_cooccurrence_series(p.calendar, p.tickers, docs, delta, tau);
          }};
}

inline GraphMethod correlation_method(std::size_t window, std::optional<double> tau = 0.0) {
  return {"correlation-" + std::to_string(window), "Correlation (" + std::to_string(window) + " day)",
          [window, tau](const PricePanel& p, const TrainConfig&) {
            return build_correlation_series(p, window, tau);
          }};
}

inline GraphMethod static_method(std::vector<DocumentRecord> docs, std::optional<double> tau = 0.0) {
  return {"static", "Static", [docs = std::move(docs), tau](const PricePanel& p, const TrainConfig& c) {
            return build_static_series(p.calendar, p.tickers, docs, train_end_date(p, c), tau);
          }};
}

// The same graph on every day.
inline GraphMethod fixed_method(std::string name, std::string label, RelationGraph g) {
  return {std::move(name), std::move(label), [g = std::move(g)](const PricePanel& p, const TrainConfig&) {
            return constant_series(p.calendar, p.tickers, g, "fixed");
          }};
}

// Parses "static", "cooccurrence-5", "correlation-20".
inline GraphMethod method_from_name(const std::string& spec, const std::vector<DocumentRecord>& docs,
                                    double tau = 0.0) {
  const auto dash = spec.find('-');
  const std::string kind = spec.substr(0, dash);
  std::size_t window = 0;
  if (dash != std::string::npos) {
    try {
      window = std::stoul(spec.substr(dash + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad memory window in graph method '" + spec + "'");
    }
  }
  if (kind == "static" && dash == std::string::npos) return static_method(docs, tau);
  if (kind == "cooccurrence" && window > 0) return cooccurrence_method(docs, window, tau);
  if (kind == "correlation" && window > 1) return correlation_method(window, tau);
  throw ConfigError("unknown graph method '" + spec +
                    "' (valid: static, cooccurrence-<days>, correlation-<days>)");
}

struct ComparisonCell {
  std::string method;
  std::string label;
  ModelKind model = ModelKind::ngat;
  std::size_t horizon = 1;
  // One entry per seed.
  std::vector<double> r2;
  std::vector<double> mse;
  std::vector<double> acc;
  bool failed = false;
  std::string error;

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  double mean_r2() const { return mean(r2); }
  double mean_mse() const { return mean(mse); }
  double mean_acc() const { return mean(acc); }
};

struct ComparisonTable {
  Task task = Task::volatility;
  std::vector<std::size_t> horizons;
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonCell> cells;

  bool any_failed() const {
    for (const auto& c : cells)
      if (c.failed) return true;
    return false;
  }
  const ComparisonCell& cell(const std::string& method, ModelKind model, std::size_t horizon) const {
    for (const auto& c : cells)
      if (c.method == method && c.model == model && c.horizon == horizon) return c;
    throw std::out_of_range("no comparison cell for " + method);
  }
};

// Trains every (method, model, horizon) cell on shared data and seeds. A
// failing cell is recorded and the rest still run.
inline ComparisonTable compare_graph_constructions(const std::vector<GraphMethod>& methods,
                                                   const std::vector<ModelKind>& models,
                                                   const std::vector<std::size_t>& horizons,
                                                   const TrainConfig& base, const PricePanel& panel,
                                                   const std::vector<std::uint64_t>& seeds) {
  if (methods.empty() || models.empty() || horizons.empty() || seeds.empty()) {
    throw ConfigError("graph comparison needs at least one method, model, horizon and seed");
  }
  ComparisonTable table;
  table.task = base.task;
  table.horizons = horizons;
  table.seeds = seeds;
  for (std::size_t h : horizons) {
    for (const auto& method : methods) {
      TrainConfig cfg = base;
      cfg.horizon = h;
      std::optional<PreparedData> data;
      std::string shared_error;
      try {
        data = prepare_data(panel, method.build(panel, cfg), cfg);
      } catch (const std::exception& e) {
        shared_error = e.what();
      }
      for (ModelKind m : models) {
        ComparisonCell cell{method.name, method.label, m, h, {}, {}, {}, false, {}};
        if (!data) {
          cell.failed = true;
          cell.error = shared_error;
          table.cells.push_back(std::move(cell));
          continue;
        }
        try {
          TrainConfig arm = cfg;
          arm.model = m;
          for (auto seed : seeds) {
            arm.seed = seed;
            const auto rep = train(arm, *data).report;
            if (!rep.test) throw ConfigError("no test split to evaluate");
            const auto& t = *rep.test;
            if (arm.task == Task::volatility) {
              cell.r2.push_back(t.averaged_or_nan("r2"));
              cell.mse.push_back(t.averaged_or_nan("mse"));
            } else {
              cell.acc.push_back(t.averaged_or_nan("acc"));
            }
          }
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
        table.cells.push_back(std::move(cell));
      }
    }
  }
  return table;
}

inline nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json j;
  j["task"] = to_string(t.task);
  j["horizons"] = t.horizons;
  j["seeds"] = t.seeds;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : t.cells) {
    nlohmann::json cj = {{"method", c.method}, {"label", c.label}, {"model", to_string(c.model)},
                         {"horizon", c.horizon}, {"failed", c.failed}};
    if (c.failed) {
      cj["error"] = c.error;
    } else if (t.task == Task::volatility) {
      cj["r2"] = c.r2;
      cj["mse"] = c.mse;
      cj["mean_r2"] = c.mean_r2();
      cj["mean_mse"] = c.mean_mse();
    } else {
      cj["acc"] = c.acc;
      cj["mean_acc"] = c.mean_acc();
    }
    j["cells"].push_back(std::move(cj));
  }
  return j;
}

// One row per (method, model); one column group per horizon.
inline std::string render_comparison(const ComparisonTable& t) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-26s %-9s", "Method", "Model");
  os << buf;
  for (auto h : t.horizons) {
    const std::string head = "T=" + std::to_string(h) + (t.task == Task::volatility ? " R2 / MSE" : " ACC");
    std::snprintf(buf, sizeof(buf), " %-24s", head.c_str());
    os << buf;
  }
  os << '\n';
  std::vector<std::pair<std::string, ModelKind>> rows;
  for (const auto& c : t.cells) {
    const std::pair<std::string, ModelKind> key{c.method, c.model};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  for (const auto& [method, model] : rows) {
    const auto& first = t.cell(method, model, t.horizons.front());
    std::snprintf(buf, sizeof(buf), "%-26s %-9s", first.label.c_str(), to_string(model).c_str());
    os << buf;
    for (auto h : t.horizons) {
      const auto& c = t.cell(method, model, h);
      std::string v;
      if (c.failed) {
        v = "failed";
      } else if (t.task == Task::volatility) {
        std::snprintf(buf, sizeof(buf), "%.4f / %.3e", c.mean_r2(), c.mean_mse());
        v = buf;
      } else {
        std::snprintf(buf, sizeof(buf), "%.4f", c.mean_acc());
        v = buf;
      }
      std::snprintf(buf, sizeof(buf), " %-24s", v.c_str());
      os << buf;
    }
    os << '\n';
  }
  for (const auto& c : t.cells)
    if (c.failed) os << "failed: " << c.label << " / " << to_string(c.model) << " / T=" << c.horizon << ": " << c.error << '\n';
  return os.str();
}

}  // namespace ngat
