#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ngat/model.hpp"
#include "ngat/numerics.hpp"
#include "ngat/relation_graph.hpp"

namespace ngat {

struct GradcheckConfig {
  ModelKind kind = ModelKind::ngat;
  Task task = Task::trend;
  std::size_t nodes = 5;
  std::size_t features = 4;
  std::size_t hidden = 8;
  std::size_t heads = 1;
  std::size_t steps = 6;
  MergeMode merge = MergeMode::concat;
  AttentionReduction reduction = AttentionReduction::sum;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Gradients smaller than this are compared on an absolute scale.
  double floor = 1e-4;
  std::uint64_t seed = 7;
  // Test hook: adds 1e-2 to every analytic gradient entry of this parameter.
  std::string corrupt_parameter;
};

struct GradcheckGroup {
  std::string group;
  std::string worst_parameter;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  bool passed = true;
  std::string worst_parameter;
  double worst_error = 0.0;
  double seconds = 0.0;
};

// Maps a parameter name to its reporting group.
inline std::string gradcheck_group(const std::string& name) {
  if (name.rfind("lstm.", 0) == 0) return "lstm";
  if (name.rfind("gcn.", 0) == 0) return "gcn";
  if (name.rfind("output.", 0) == 0) return "w_out";
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

// Random symmetric graph with self-loops and positive weights.
inline RelationGraph random_graph(std::size_t n, double edge_prob, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(edge_prob);
  std::uniform_real_distribution<double> wdist(0.2, 1.5);
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    w(i, i) = wdist(rng);
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) w(i, j) = w(j, i) = wdist(rng);
  }
  return graph_from_weights("random", std::move(w));
}

inline std::vector<Matrix> random_windows(std::size_t n, std::size_t steps, std::size_t features,
                                          std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<Matrix> out(n, Matrix(steps, features));
  for (auto& m : out)
    for (auto& v : m.data()) v = dist(rng);
  return out;
}

// Compares every analytic gradient of the composed model against central
// differences of the loss.
inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);
  ModelConfig mc;
  mc.kind = cfg.kind;
  mc.task = cfg.task;
  mc.nodes = cfg.nodes;
  mc.features = cfg.features;
  mc.hidden = cfg.hidden;
  mc.heads = cfg.heads;
  mc.merge = cfg.merge;
  mc.reduction = cfg.reduction;
  Model model(mc, rng());
  // Nonzero biases so every LSTM path is exercised.
  {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Matrix b(4 * cfg.hidden, 1);
    for (auto& v : b.data()) v = u(rng);
    model.set_value("lstm.bias", b);
  }
  const auto windows = random_windows(cfg.nodes, cfg.steps, cfg.features, rng);
  const auto graph = random_graph(cfg.nodes, 0.5, rng);
  std::vector<double> labels(cfg.nodes);
  {
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& y : labels) y = cfg.task == Task::trend ? (coin(rng) ? 1.0 : 0.0) : u(rng);
  }

  model.zero_grad();
  model.accumulate_gradients(windows, graph, labels);

  GradcheckReport report;
  std::map<std::string, std::size_t> group_index;
  for (auto& p : model.parameters()) {
    Matrix analytic = p.gradient;
    if (!cfg.corrupt_parameter.empty() && p.name == cfg.corrupt_parameter)
      for (auto& v : analytic.data()) v += 1e-2;
    const std::string name = p.name;
    const Matrix numeric = finite_difference_gradient(
        [&](const Matrix& x) {
          Matrix saved = model.parameter(name).value;
          model.parameter(name).value = x;
          const double l = model.evaluate_loss(windows, graph, labels);
          model.parameter(name).value = std::move(saved);
          return l;
        },
        p.value, cfg.step);
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k)
      worst = std::max(worst, relative_error(analytic[k], numeric[k], cfg.floor));

    const std::string g = gradcheck_group(name);
    auto [it, inserted] = group_index.emplace(g, report.groups.size());
    if (inserted) report.groups.push_back(GradcheckGroup{g, name, 0, 0.0});
    auto& grp = report.groups[it->second];
    grp.entries += analytic.size();
    if (worst >= grp.max_relative_error) {
      grp.max_relative_error = worst;
      grp.worst_parameter = name;
    }
    if (worst >= report.worst_error) {
      report.worst_error = worst;
      report.worst_parameter = name;
    }
  }
  report.passed = report.worst_error < cfg.tolerance;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ngat
