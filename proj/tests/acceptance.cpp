// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ngat/compare.hpp"
#include "ngat/eval.hpp"
#include "ngat/gradcheck.hpp"
#include "ngat/market_data.hpp"
#include "ngat/model.hpp"
#include "ngat/relation_graph.hpp"
#include "ngat/synthetic.hpp"
#include "ngat/training.hpp"

using namespace ngat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Matrix> random_windows(std::size_t n, std::size_t steps, std::size_t f, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix w(steps, f);
    for (auto& v : w.data()) v = z(rng);
    out.push_back(std::move(w));
  }
  return out;
}

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / "ngat_acceptance";
  fs::create_directories(p);
  return p;
}

// Generates a synthetic dataset through the command-line tool.
fs::path gen_synth(const std::string& name, const std::string& args) {
  const fs::path out = scratch_dir() / name;
  fs::remove_all(out);
  const std::string cmd = std::string(NGAT_CLI_PATH) + " gen-synth --quiet " + args + " --out " + out.string();
  if (std::system(cmd.c_str()) != 0) throw std::runtime_error("gen-synth failed: " + cmd);
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_where;
  int runs = 0, failed = 0;
  for (Task task : {Task::trend, Task::volatility})
    for (std::size_t heads : {1u, 4u})
      for (MergeMode merge : {MergeMode::concat, MergeMode::average}) {
        GradcheckConfig g;
        g.kind = ModelKind::ngat;
        g.task = task;
        g.nodes = 5;
        g.features = 4;
        g.hidden = 8;
        g.heads = heads;
        g.merge = merge;
        g.step = 1e-5;
        g.tolerance = 1e-4;
        const auto rep = run_gradcheck(g);
        ++runs;
        if (!rep.passed || !(rep.worst_error < 1e-4)) ++failed;
        if (rep.worst_error > worst) {
          worst = rep.worst_error;
          worst_where = to_string(task) + "/M=" + std::to_string(heads) + "/" + to_string(merge) + "/" +
                        rep.worst_parameter;
        }
      }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 60.0,
          std::to_string(runs) + " configs, max rel err " + fmt("%.2e", worst) + " (" + worst_where + "), " +
              fmt("%.1f", secs) + " s"};
}

Outcome attention_invariants() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  std::uniform_real_distribution<double> density(0.1, 0.9);
  std::size_t rows = 0, sum_violations = 0, mask_violations = 0, leak_violations = 0, perturbed = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    ModelConfig mc;
    mc.kind = trial % 2 ? ModelKind::gat : ModelKind::ngat;
    mc.nodes = n;
    mc.features = 3;
    mc.hidden = 4 + trial % 5;
    mc.heads = 1 + trial % 3;
    mc.merge = trial % 4 < 2 ? MergeMode::concat : MergeMode::average;
    Model m(mc, static_cast<std::uint64_t>(trial));
    const auto g = random_graph(n, density(rng), rng);
    auto w = random_windows(n, 5, 3, rng);
    const auto out = m.forward(w, g);
    for (const auto& beta : out.betas)
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (g.edge(i, j)) s += beta(i, j);
          else if (beta(i, j) != 0.0) ++mask_violations;
        }
        ++rows;
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        if (!(std::abs(s - 1.0) <= 1e-12)) ++sum_violations;
      }

    // Perturb every non-neighbor of one node and compare its outputs bit for bit.
    const std::size_t i = trial % n;
    auto w2 = w;
    bool any = false;
    std::normal_distribution<double> z(0.0, 3.0);
    for (std::size_t j = 0; j < n; ++j)
      if (!g.edge(i, j)) {
        for (auto& v : w2[j].data()) v += z(rng);
        any = true;
      }
    if (!any) continue;
    ++perturbed;
    const auto out2 = m.forward(w2, g);
    bool same = out.predictions[i] == out2.predictions[i];
    for (std::size_t k = 0; k < out.merged.cols(); ++k) same = same && out.merged(i, k) == out2.merged(i, k);
    if (!same) ++leak_violations;
  }
  return {sum_violations == 0 && mask_violations == 0 && leak_violations == 0 && perturbed > 0,
          std::to_string(rows) + " rows, max |sum-1| " + fmt("%.1e", worst_sum) + ", off-mask nonzeros " +
              std::to_string(mask_violations) + ", " + std::to_string(perturbed) + " perturbations with " +
              std::to_string(leak_violations) + " leaks"};
}

Outcome tied_equivalence() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    ModelConfig mc;
    mc.kind = ModelKind::gat;
    mc.task = trial % 2 ? Task::volatility : Task::trend;
    mc.nodes = n;
    mc.features = 4;
    mc.hidden = 3 + trial % 6;
    mc.heads = 1 + trial % 3;
    mc.merge = trial % 5 < 3 ? MergeMode::concat : MergeMode::average;
    Model gat(mc, static_cast<std::uint64_t>(trial));
    mc.kind = ModelKind::ngat;
    Model ngat(mc, static_cast<std::uint64_t>(trial) + 1000);
    for (const auto& p : gat.parameters()) {
      if (p.name.find("attention") == std::string::npos) {
        ngat.set_value(p.name, p.value);
        continue;
      }
      Matrix tiled(ngat.parameter(p.name).value.rows(), p.value.cols());
      for (std::size_t k = 0; k < tiled.size(); ++k) tiled[k] = p.value[k % p.value.size()];
      ngat.set_value(p.name, tiled);
    }
    const auto g = random_graph(n, 0.5, rng);
    const auto w = random_windows(n, 6, 4, rng);
    const auto a = gat.forward(w, g), b = ngat.forward(w, g);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a.predictions[i] - b.predictions[i]));
    for (std::size_t k = 0; k < a.merged.size(); ++k) worst = std::max(worst, std::abs(a.merged[k] - b.merged[k]));
  }
  return {worst <= 1e-12, "100 instances, max |NGAT - GAT| " + fmt("%.2e", worst)};
}

Outcome memory_weight_identity() {
  bool ok = true;
  double worst = 0.0;
  for (std::size_t delta : {1u, 2u, 3u, 5u, 7u, 10u}) {
    const auto w = memory_weights(delta, delta);
    if (w.size() != delta) ok = false;
    double s = 0.0;
    for (double v : w) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
    // Rational oracle: w_m = (delta - m) / (delta (delta + 1) / 2), correctly rounded.
    const std::size_t den = delta * (delta + 1) / 2;
    for (std::size_t m = 0; m < w.size(); ++m)
      if (w[m] != static_cast<double>(delta - m) / static_cast<double>(den)) ok = false;
  }
  const auto w3 = memory_weights(3, 3);
  const bool exact3 = w3.size() == 3 && w3[0] == 1.0 / 2.0 && w3[1] == 1.0 / 3.0 && w3[2] == 1.0 / 6.0;
  return {ok && exact3 && worst <= 1e-12,
          "max |sum-1| " + fmt("%.1e", worst) + ", delta=3 -> [" + fmt("%.17g", w3[0]) + ", " + fmt("%.17g", w3[1]) +
              ", " + fmt("%.17g", w3[2]) + "]"};
}

Outcome overfit_oracle() {
  const std::string cfg_path = std::string(NGAT_DATA_DIR) + "/toy/overfit.cfg";
  const auto once = [&]() {
    const TrainConfig c = load_config(cfg_path);
    const PricePanel panel = read_price_csv(c.prices);
    const auto graphs = build_graph_series(panel, read_documents_jsonl(c.documents), c);
    const PreparedData data = prepare_data(panel, graphs, c);
    auto result = train(c, data);
    const auto recs = predict(result.model, data.train, data.target);
    const auto rep = evaluate_predictions(c.task, data.tickers, recs, "train");
    return std::make_tuple(c, std::move(result.report), rep, panel.num_tickers());
  };
  const auto [c, a, eval_a, tickers] = once();
  const auto [c2, b, eval_b, tickers2] = once();
  (void)c2;
  (void)tickers2;
  bool identical = a.epochs.size() == b.epochs.size() && a.best_epoch == b.best_epoch;
  for (std::size_t k = 0; identical && k < a.epochs.size(); ++k)
    identical = std::abs(a.epochs[k].train_loss - b.epochs[k].train_loss) <= 1e-12 &&
                std::abs(a.epochs[k].monitor - b.epochs[k].monitor) <= 1e-12;
  identical = identical && std::abs(a.final_train_loss - b.final_train_loss) <= 1e-12;
  const double acc = *eval_a.pooled.at("acc");
  identical = identical && acc == *eval_b.pooled.at("acc");
  const bool pass = c.model == ModelKind::ngat && tickers == 8 && a.epochs.size() <= 2000 &&
                    a.final_train_loss < 0.01 && identical;
  return {pass, std::to_string(tickers) + " tickers, " + std::to_string(a.epochs.size()) + " steps, final BCE " +
                    fmt("%.5f", a.final_train_loss) + ", train ACC " + fmt("%.4f", acc) +
                    (identical ? ", repeat run identical" : ", repeat run DIFFERS")};
}

Outcome spillover_separation() {
  const auto t0 = std::chrono::steady_clock::now();
  double lstm = 0.0, gat = 0.0, ngat = 0.0;
  std::ostringstream per_seed;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const auto dir = gen_synth("c6_" + std::to_string(s), "--nodes 20 --days 500 --lag 1 --leaders 5 --weight 1 "
                                                          "--noise-ratio 0.5 --seed " + std::to_string(100 + s));
    TrainConfig c;
    c.task = Task::trend;
    c.horizon = 1;
    c.memory = 5;
    c.threshold = 0.0;
    c.lr = 1e-3;
    c.max_epochs = 20;
    c.patience = 5;
    c.seed = static_cast<std::uint64_t>(s);
    const PricePanel panel = read_price_csv((dir / "prices.csv").string());
    const auto graphs = build_graph_series(panel, read_documents_jsonl((dir / "documents.jsonl").string()), c);
    const PreparedData data = prepare_data(panel, graphs, c);
    double acc[3];
    int k = 0;
    for (ModelKind m : {ModelKind::lstm, ModelKind::gat, ModelKind::ngat}) {
      c.model = m;
      acc[k++] = train(c, data).report.test->averaged_or_nan("acc");
    }
    lstm += acc[0];
    gat += acc[1];
    ngat += acc[2];
    per_seed << (s ? " " : "") << fmt("%.3f", acc[0]) << "/" << fmt("%.3f", acc[1]) << "/" << fmt("%.3f", acc[2]);
  }
  lstm /= seeds;
  gat /= seeds;
  ngat /= seeds;
  const double secs = seconds_since(t0);
  const bool pass = (ngat - lstm) * 100.0 >= 5.0 && (gat - lstm) * 100.0 >= 5.0 && ngat * 100.0 >= gat * 100.0 - 1.0 &&
                    secs < 600.0;
  return {pass, "mean ACC lstm " + fmt("%.4f", lstm) + ", gat " + fmt("%.4f", gat) + ", ngat " + fmt("%.4f", ngat) +
                    " [lstm/gat/ngat per seed: " + per_seed.str() + "], " + fmt("%.0f", secs) + " s"};
}

Outcome graph_comparison() {
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0, cells = 0;
  std::ostringstream per_seed;
  for (int s = 0; s < 5; ++s) {
    const auto dir = gen_synth("c7_" + std::to_string(s), "--nodes 20 --days 500 --lag 5 --leaders 5 --weight 1 "
                                                          "--noise-ratio 0.5 --seed " + std::to_string(200 + s));
    const PricePanel panel = read_price_csv((dir / "prices.csv").string());
    std::ifstream edge_file(dir / "true_graph.json");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& e : read_edges_json(edge_file, panel.tickers)) pairs.push_back({e.source, e.target});
    const auto truth = graph_from_edges(panel.num_tickers(), pairs, "true");
    const auto random = degree_matched_random_graph(truth, 1000 + static_cast<std::uint64_t>(s));

    TrainConfig c;
    c.task = Task::volatility;
    c.horizon = 5;
    c.lr = 1e-3;
    c.max_epochs = 30;
    c.patience = 5;
    c.seed = static_cast<std::uint64_t>(s);
    c.features = {"open_z", "high_rel", "low_rel", "close_rel", "return_z", "volume_z", "abs_return_z"};
    const std::vector<GraphMethod> methods{fixed_method("true", "True graph", truth),
                                           fixed_method("random", "Degree-matched random", random)};
    const auto table = compare_graph_constructions(methods, {ModelKind::gat, ModelKind::ngat}, {5}, c, panel,
                                                   {static_cast<std::uint64_t>(s)});
    per_seed << (s ? " " : "");
    for (ModelKind m : {ModelKind::gat, ModelKind::ngat}) {
      const double rt = table.cell("true", m, 5).mean_r2(), rr = table.cell("random", m, 5).mean_r2();
      ++cells;
      if (rt > rr) ++wins;
      per_seed << to_string(m) << " " << fmt("%.3f", rt) << ">" << fmt("%.3f", rr) << (m == ModelKind::gat ? "," : ";");
    }
  }
  return {wins == cells, std::to_string(wins) + "/" + std::to_string(cells) +
                             " (model, seed) cells favour the true graph [R2 true>random: " + per_seed.str() + "], " +
                             fmt("%.0f", seconds_since(t0)) + " s"};
}

// Pearson correlation of two 0/1 vectors; MCC by another route.
double pearson_binary(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa == 0 || sbb == 0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

Outcome metric_oracles() {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<std::size_t> len(2, 24);
  std::uniform_int_distribution<int> grid(0, 10);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  std::size_t undefined_mismatch = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = len(rng);
    std::vector<double> p(n), pred(n), actual(n);
    std::vector<int> y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = grid(rng) / 10.0;  // coarse scores produce ties and hit the 0.5 threshold
      y[i] = coin(rng);
      yhat[i] = p[i] >= 0.5 ? 1 : 0;
      actual[i] = trial % 7 == 0 ? 1.0 : z(rng);
      pred[i] = z(rng);
    }
    const auto cm = confusion(p, y);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += yhat[i] == y[i];
    worst = std::max(worst, std::abs(accuracy(cm) - static_cast<double>(hits) / static_cast<double>(n)));
    worst = std::max(worst, std::abs(mcc(cm) - pearson_binary(yhat, y)));

    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1;
          wins += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
        }
    const auto a = auc(p, y);
    if (pairs == 0) undefined_mismatch += a.has_value();
    else if (!a) ++undefined_mismatch;
    else worst = std::max(worst, std::abs(*a - wins / pairs));

    double mean = 0, se = 0, st = 0;
    for (double v : actual) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      se += (pred[i] - actual[i]) * (pred[i] - actual[i]);
      st += (actual[i] - mean) * (actual[i] - mean);
    }
    worst = std::max(worst, std::abs(mse(pred, actual) - se / static_cast<double>(n)));
    const auto r2 = r_squared(pred, actual);
    if (st == 0) undefined_mismatch += r2.has_value();
    else if (!r2) ++undefined_mismatch;
    else worst = std::max(worst, std::abs(*r2 - (1.0 - se / st)));
  }

  ConfusionMatrix worked;
  worked.tp = 3;
  worked.tn = 4;
  worked.fp = 1;
  worked.fn = 2;
  const bool mcc_ok = std::abs(mcc(worked) - 10.0 / std::sqrt(600.0)) <= 1e-15;
  const bool auc_ok = *auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}) == 0.5 &&
                      *auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}) == 0.5;
  const bool r2_ok = *r_squared(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}) == 0.0;
  return {worst <= 1e-10 && undefined_mismatch == 0 && mcc_ok && auc_ok && r2_ok,
          "10000 sets, max deviation " + fmt("%.1e", worst) + ", undefined-case mismatches " +
              std::to_string(undefined_mismatch) + ", worked MCC/AUC/R2 " + (mcc_ok && auc_ok && r2_ok ? "exact" : "WRONG")};
}

Outcome label_correctness() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 0.02);
  const std::size_t days = 50, tickers = 4, window = 5;
  PricePanel panel;
  for (std::size_t d = 0; d < days; ++d) panel.calendar.push_back(civil_from_days(18000 + static_cast<long long>(d)));
  std::vector<std::vector<double>> close(tickers, std::vector<double>(days));
  for (std::size_t t = 0; t < tickers; ++t) {
    panel.tickers.push_back("R" + std::to_string(t));
    std::vector<PriceBar> bars;
    double px = 50.0;
    for (std::size_t d = 0; d < days; ++d) {
      if (d > 0) px *= std::exp(z(rng));
      close[t][d] = px;
      PriceBar b;
      b.date = panel.calendar[d];
      b.open = px * (1.0 + 0.5 * z(rng));
      b.high = std::max(b.open, px) * 1.01;
      b.low = std::min(b.open, px) * 0.99;
      b.close = b.adj_close = px;
      b.volume = 1000.0 + static_cast<double>(d);
      bars.push_back(b);
    }
    panel.bars.push_back(std::move(bars));
  }
  panel = compute_log_returns(std::move(panel));
  const auto table = normalize_features(panel, fit_normalization(panel, days));

  std::size_t checked = 0, mismatches = 0;
  bool partition = true;
  for (std::size_t T : {1u, 5u, 10u, 21u}) {
    const auto samples = build_samples(panel, table, window, T);
    // Brute force straight from the closes.
    std::vector<std::tuple<std::size_t, std::size_t, int, double, bool, bool>> want;
    for (std::size_t d = 0; d < days; ++d) {
      if (d < std::max(window, T) || d + T >= days) continue;
      for (std::size_t t = 0; t < tickers; ++t) {
        const auto r = [&](std::size_t k) { return std::log(close[t][k] / close[t][k - 1]); };
        double past = 0, fut = 0;
        for (std::size_t k = d - T + 1; k <= d; ++k) past += r(k);
        for (std::size_t k = d + 1; k <= d + T; ++k) fut += r(k);
        past /= static_cast<double>(T);
        fut /= static_cast<double>(T);
        double ss = 0;
        for (std::size_t k = d + 1; k <= d + T; ++k) ss += (r(k) - fut) * (r(k) - fut);
        want.emplace_back(d, t, fut > past ? 1 : 0, std::sqrt(ss / static_cast<double>(T)), past > 0, fut > past);
      }
    }
    if (want.size() != samples.size()) {
      ++mismatches;
      continue;
    }
    std::array<std::size_t, 4> counts{};
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      const auto& [d, t, trend, vol, lp, up] = want[k];
      ++checked;
      if (s.day() != d || s.ticker() != t || s.trend_label != trend || std::abs(s.volatility_label - vol) > 1e-12 ||
          s.scenario.last_positive != lp || s.scenario.next_higher != up) {
        ++mismatches;
      }
      ++counts[s.scenario.index()];
    }
    std::vector<PredictionRecord> recs;
    for (const auto& s : samples) {
      PredictionRecord r;
      r.ticker = s.ticker();
      r.label = s.trend_label;
      r.prediction = 0.5;
      r.scenario = s.scenario;
      recs.push_back(r);
    }
    const auto st = scenario_table(recs);
    if (st.total() != samples.size() || counts[0] + counts[1] + counts[2] + counts[3] != samples.size()) partition = false;
    for (std::size_t q = 0; q < 4; ++q)
      if (st.cells[q].total != counts[q]) partition = false;
  }
  return {mismatches == 0 && partition && checked > 0,
          std::to_string(checked) + " (day, ticker, T) labels checked, " + std::to_string(mismatches) +
              " mismatches, quadrants " + (partition ? "partition every sample set" : "DO NOT partition")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient fidelity", gradient_fidelity},
      {"2 attention invariants", attention_invariants},
      {"3 tied-parameter equivalence", tied_equivalence},
      {"4 memory weight identity", memory_weight_identity},
      {"5 overfit oracle", overfit_oracle},
      {"6 synthetic spillover separation", spillover_separation},
      {"7 graph-comparison harness", graph_comparison},
      {"8 metric oracles", metric_oracles},
      {"9 label/scenario correctness", label_correctness},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
