#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ngat/compare.hpp"
#include "ngat/errors.hpp"
#include "ngat/eval.hpp"
#include "ngat/gradcheck.hpp"
#include "ngat/market_data.hpp"
#include "ngat/relation_graph.hpp"
#include "ngat/synthetic.hpp"
#include "ngat/training.hpp"

namespace fs = std::filesystem;
using namespace ngat;

namespace {

struct Shared {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool quiet = false;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--config", s.config, "Flat key = value configuration file");
  cmd->add_option("--seed", s.seed, "Random seed (overrides the config file)");
  cmd->add_option("--out", s.out, "Output directory")->capture_default_str();
  cmd->add_flag("--quiet", s.quiet, "Suppress the summary on stdout");
}

// Generic key = value reader for commands whose settings are not a TrainConfig.
std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::map<std::string, std::string> kv;
  if (path.empty()) return kv;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim_copy(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    kv[detail::trim_copy(t.substr(0, eq))] = detail::trim_copy(t.substr(eq + 1));
  }
  return kv;
}

std::ofstream open_output(const Shared& s, const std::string& name) {
  fs::create_directories(s.out);
  const fs::path p = fs::path(s.out) / name;
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

void print_warnings(const std::vector<std::string>& warnings, const Shared& s) {
  if (s.quiet) return;
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

PricePanel load_prices(const std::string& path, const Shared& s) {
  if (path.empty()) throw ConfigError("a price CSV is required (--prices or config key 'prices')");
  std::vector<std::string> warnings;
  auto panel = read_price_csv(path, &warnings);
  print_warnings(warnings, s);
  return panel;
}

std::vector<DocumentRecord> load_documents(const std::string& path) {
  if (path.empty()) return {};
  return read_documents_jsonl(path);
}

GraphSeries load_graph_series(const TrainConfig& c, const PricePanel& panel, const Shared& s) {
  if (c.graph_method == "file" || !c.graph.empty()) {
    if (c.graph.empty()) throw ConfigError("graph_method 'file' needs a graph path");
    return read_graph_jsonl(c.graph);
  }
  std::vector<std::string> warnings;
  auto series = build_graph_series(panel, load_documents(c.documents), c, &warnings);
  print_warnings(warnings, s);
  return series;
}

TrainConfig base_config(const Shared& s, const std::vector<std::string>& sets) {
  TrainConfig c = s.config.empty() ? TrainConfig{} : load_config(s.config);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, detail::trim_copy(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (s.seed) c.seed = *s.seed;
  return c;
}

// ---------------------------------------------------------------------------
// build-graph
// ---------------------------------------------------------------------------

struct BuildGraphArgs {
  std::string prices, docs, method = "cooccurrence", train_end, output = "graph.jsonl";
  std::size_t window = 1;
  std::optional<double> threshold;
};

int cmd_build_graph(const Shared& s, const BuildGraphArgs& a) {
  std::vector<std::string> warnings;
  std::vector<std::string> calendar, tickers;
  std::optional<PricePanel> panel;
  if (!a.prices.empty()) {
    panel = load_prices(a.prices, s);
    calendar = panel->calendar;
    tickers = panel->tickers;
  }
  const auto docs = load_documents(a.docs);
  if (!panel) {
    if (a.method == "correlation") throw ConfigError("method correlation needs --prices");
    std::set<std::string> days, names;
    for (const auto& d : docs) {
      days.insert(d.date);
      names.insert(d.tickers.begin(), d.tickers.end());
    }
    calendar.assign(days.begin(), days.end());
    tickers.assign(names.begin(), names.end());
  }
  GraphSeries series;
  if (a.method == "cooccurrence") {
    series = build_cooccurrence_series(calendar, tickers, docs, a.window, a.threshold,
                                       UnknownTickerPolicy::warn_and_drop, &warnings);
  } else if (a.method == "correlation") {
    if (a.window < 2) throw ConfigError("correlation needs --window >= 2");
    series = build_correlation_series(*panel, a.window, a.threshold);
  } else if (a.method == "static") {
    std::string end = a.train_end;
    if (end.empty()) {
      if (!panel) throw ConfigError("method static needs --train-end or --prices");
      TrainConfig c = base_config(s, {});
      end = train_end_date(*panel, c);
    }
    series = build_static_series(calendar, tickers, docs, end, a.threshold);
  } else {
    throw ConfigError("unknown method '" + a.method + "' (valid: cooccurrence, correlation, static)");
  }
  print_warnings(warnings, s);
  auto out = open_output(s, a.output);
  write_graph_jsonl(out, series);
  if (!s.quiet) {
    std::size_t edges = 0, busiest = 0;
    double density = 0.0;
    for (const auto& g : series.days) {
      edges += g.edge_count();
      busiest = std::max(busiest, g.edge_count());
      density += g.density();
    }
    const double days = static_cast<double>(std::max<std::size_t>(series.days.size(), 1));
    std::cout << "method: " << series.method;
    if (series.window) std::cout << " (" << series.window << " day)";
    std::cout << "\ntickers: " << tickers.size() << "   days: " << series.days.size()
              << "\nedges: total " << edges << ", mean per day " << static_cast<double>(edges) / days
              << ", max per day " << busiest << "\nmean density: " << density / days << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> sets;
  std::string prices, docs, graph, model, task;
};

TrainConfig train_config(const Shared& s, const TrainArgs& a) {
  TrainConfig c = base_config(s, a.sets);
  if (!a.prices.empty()) c.prices = a.prices;
  if (!a.docs.empty()) c.documents = a.docs;
  if (!a.graph.empty()) {
    c.graph = a.graph;
    c.graph_method = "file";
  }
  if (!a.model.empty()) c.model = parse_model_kind(a.model);
  if (!a.task.empty()) c.task = parse_task(a.task);
  validate(c);
  return c;
}

int cmd_train(const Shared& s, const TrainArgs& a) {
  const TrainConfig c = train_config(s, a);
  const PricePanel panel = load_prices(c.prices, s);
  const GraphSeries graphs = load_graph_series(c, panel, s);
  const PreparedData data = prepare_data(panel, graphs, c);
  auto result = train(c, data);
  Checkpoint ck{c, data.tickers, data.feature_names, data.stats, data.target, result.model};
  {
    auto out = open_output(s, "checkpoint.json");
    out << to_json(ck).dump(1) << '\n';
  }
  {
    auto out = open_output(s, "train_report.json");
    out << to_json(result.report).dump(2) << '\n';
  }
  print_warnings(result.report.warnings, s);
  if (!s.quiet) {
    const auto& r = result.report;
    std::cout << "model: " << to_string(c.model) << "   task: " << to_string(c.task) << "   seed: " << c.seed
              << "\nepochs run: " << r.epochs.size() << "   best epoch: " << r.best_epoch << " (" << r.monitor
              << " " << format_double(r.best_monitor) << ")\nfinal train loss: "
              << format_double(r.final_train_loss) << "\n";
    if (r.test) std::cout << "\n" << to_text(*r.test);
    std::cout << "wrote " << (fs::path(s.out) / "checkpoint.json").string() << " and train_report.json\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, prices, docs, graph, split = "test", task;
};

int cmd_evaluate(const Shared& s, const EvaluateArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!a.task.empty() && parse_task(a.task) != ck.config.task) {
    throw ConfigError("task mismatch: checkpoint was trained for " + to_string(ck.config.task) +
                      ", command requested " + a.task);
  }
  TrainConfig c = ck.config;
  if (!s.config.empty()) {
    const TrainConfig overrides = load_config(s.config, c);
    c.prices = overrides.prices;
    c.documents = overrides.documents;
    c.graph = overrides.graph;
  }
  if (!a.prices.empty()) c.prices = a.prices;
  if (!a.docs.empty()) c.documents = a.docs;
  if (!a.graph.empty()) {
    c.graph = a.graph;
    c.graph_method = "file";
  }
  const PricePanel panel = load_prices(c.prices, s);
  if (panel.tickers != ck.tickers) throw DataError(legend_diff(ck.tickers, panel.tickers, "checkpoint"));
  const GraphSeries graphs = load_graph_series(c, panel, s);
  const PreparedData data = prepare_data(panel, graphs, c, &ck.stats, &ck.target);
  const std::vector<DayBatch>* batches = nullptr;
  if (a.split == "train") batches = &data.train;
  else if (a.split == "val") batches = &data.val;
  else if (a.split == "test") batches = &data.test;
  else throw ConfigError("split must be train, val or test");
  if (batches->empty()) throw ConfigError("the " + a.split + " split is empty for this configuration");
  const auto recs = predict(ck.model, *batches, ck.target);
  EvaluationReport rep = evaluate_predictions(c.task, data.tickers, recs, a.split);
  rep.config = to_json(c);
  {
    auto out = open_output(s, "eval_report.json");
    out << to_json(rep).dump(2) << '\n';
  }
  {
    auto out = open_output(s, "eval_report.txt");
    out << to_text(rep);
  }
  if (!s.quiet) std::cout << to_text(rep);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compare-graphs
// ---------------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> sets;
  std::string prices, docs, task = "volatility";
  std::vector<std::string> methods{"static", "cooccurrence-5"};
  std::vector<std::string> graph_files;
  std::vector<std::string> models{"gat", "ngat"};
  std::vector<std::size_t> horizons;
  std::size_t seeds = 1;
  double threshold = 0.0;
};

int cmd_compare_graphs(const Shared& s, const CompareArgs& a) {
  TrainConfig c = base_config(s, a.sets);
  if (!a.prices.empty()) c.prices = a.prices;
  if (!a.docs.empty()) c.documents = a.docs;
  c.task = parse_task(a.task);
  validate(c);
  if (a.seeds == 0) throw ConfigError("--seeds must be >= 1");
  const PricePanel panel = load_prices(c.prices, s);
  const auto docs = load_documents(c.documents);
  std::vector<GraphMethod> methods;
  for (const auto& m : a.methods) methods.push_back(method_from_name(m, docs, a.threshold));
  for (const auto& spec : a.graph_files) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--graph-file expects NAME=PATH, got '" + spec + "'");
    const std::string name = spec.substr(0, eq), path = spec.substr(eq + 1);
    methods.push_back({name, name, [path](const PricePanel&, const TrainConfig&) { return read_graph_jsonl(path); }});
  }
  std::vector<ModelKind> models;
  for (const auto& m : a.models) models.push_back(parse_model_kind(m));
  std::vector<std::size_t> horizons = a.horizons;
  if (horizons.empty()) horizons.push_back(c.horizon);
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < a.seeds; ++k) seeds.push_back(c.seed + k);

  const auto table = compare_graph_constructions(methods, models, horizons, c, panel, seeds);
  {
    auto out = open_output(s, "comparison.json");
    out << to_json(table).dump(2) << '\n';
  }
  const std::string text = render_comparison(table);
  {
    auto out = open_output(s, "comparison.txt");
    out << text;
  }
  if (!s.quiet) std::cout << text;
  return table.any_failed() ? kExitData : kExitOk;
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::optional<std::size_t> nodes, days, lag, leaders;
  std::optional<double> noise_std, noise_ratio, base_vol, vol_of_vol, weight;
  std::string edges, start_date;
};

int cmd_gen_synth(const Shared& s, SynthArgs a) {
  const auto kv = read_key_values(s.config);
  SyntheticSpec spec;
  const auto num = [&](const char* key, auto& slot) {
    using T = typename std::decay_t<decltype(slot)>::value_type;
    if (slot || !kv.count(key)) return;
    const std::string& v = kv.at(key);
    if constexpr (std::is_same_v<T, double>) slot = detail::parse_real(key, v);
    else slot = static_cast<T>(detail::parse_unsigned(key, v));
  };
  num("nodes", a.nodes);
  num("days", a.days);
  num("lag", a.lag);
  num("leaders", a.leaders);
  num("noise_std", a.noise_std);
  num("noise_ratio", a.noise_ratio);
  num("base_vol", a.base_vol);
  num("vol_of_vol", a.vol_of_vol);
  num("weight", a.weight);
  std::optional<std::uint64_t> cfg_seed;
  num("seed", cfg_seed);
  for (const auto& [key, v] : kv) {
    static const std::set<std::string> known = {"nodes", "days", "lag", "leaders", "noise_std", "noise_ratio",
                                                "base_vol", "vol_of_vol", "weight", "seed", "edges", "start_date"};
    if (!known.count(key)) throw ConfigError("unknown gen-synth config key '" + key + "'");
  }
  if (a.edges.empty() && kv.count("edges")) a.edges = kv.at("edges");
  if (a.start_date.empty() && kv.count("start_date")) a.start_date = kv.at("start_date");

  spec.nodes = a.nodes.value_or(spec.nodes);
  spec.days = a.days.value_or(spec.days);
  spec.lag = a.lag.value_or(spec.lag);
  spec.base_vol = a.base_vol.value_or(spec.base_vol);
  spec.vol_of_vol = a.vol_of_vol.value_or(spec.vol_of_vol);
  spec.seed = s.seed ? *s.seed : cfg_seed.value_or(0);
  if (!a.start_date.empty()) spec.start_date = a.start_date;
  if (spec.nodes < 2) throw ConfigError("synthetic data needs at least 2 nodes");
  if (!a.edges.empty()) {
    std::ifstream in(a.edges);
    if (!in) throw DataError("cannot open edge file " + a.edges);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < spec.nodes; ++i) names.push_back(synthetic_ticker(spec, i));
    spec.edges = read_edges_json(in, names);
  } else {
    const std::size_t leaders = a.leaders.value_or((spec.nodes + 3) / 4);
    spec.edges = leader_follower_edges(spec.nodes, leaders, a.weight.value_or(1.0));
  }
  if (a.noise_std && a.noise_ratio) throw ConfigError("give either --noise-std or --noise-ratio");
  if (a.noise_ratio) spec.noise_std = noise_for_ratio(spec.edges, spec.nodes, spec.base_vol, *a.noise_ratio);
  else spec.noise_std = a.noise_std.value_or(0.5 * spec.base_vol);

  const auto data = generate_synthetic(spec);
  {
    auto out = open_output(s, "prices.csv");
    write_price_csv(out, data.panel);
  }
  {
    auto out = open_output(s, "documents.jsonl");
    write_documents_jsonl(out, data.docs);
  }
  {
    auto out = open_output(s, "true_graph.json");
    out << true_graph_json(data).dump(2) << '\n';
  }
  if (!s.quiet) {
    std::cout << "nodes: " << spec.nodes << "   days: " << spec.days << "   lag: " << spec.lag
              << "   spillover edges: " << spec.edges.size() << "\nnoise_std: " << format_double(spec.noise_std)
              << "   base_vol: " << format_double(spec.base_vol) << "   seed: " << spec.seed << "\nwrote "
              << fs::path(s.out).string() << "/{prices.csv, documents.jsonl, true_graph.json}\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string model = "ngat", task = "trend", merge = "concat", reduction = "sum", corrupt;
  std::size_t nodes = 5, features = 4, hidden = 8, heads = 1, steps = 6;
  double tolerance = 1e-4, step = 1e-5;
};

int cmd_gradcheck(const Shared& s, const GradcheckArgs& a) {
  const auto kv = read_key_values(s.config);
  GradcheckConfig g;
  g.kind = parse_model_kind(kv.count("model") ? kv.at("model") : a.model);
  g.task = parse_task(kv.count("task") ? kv.at("task") : a.task);
  g.merge = parse_merge_mode(kv.count("merge") ? kv.at("merge") : a.merge);
  g.reduction = parse_reduction(kv.count("reduction") ? kv.at("reduction") : a.reduction);
  const auto size = [&](const char* key, std::size_t cli) {
    return kv.count(key) ? static_cast<std::size_t>(detail::parse_unsigned(key, kv.at(key))) : cli;
  };
  g.nodes = size("nodes", a.nodes);
  g.features = size("features", a.features);
  g.hidden = size("hidden", a.hidden);
  g.heads = size("heads", a.heads);
  g.steps = size("steps", a.steps);
  g.tolerance = a.tolerance;
  g.step = a.step;
  if (s.seed) g.seed = *s.seed;
  g.corrupt_parameter = a.corrupt;
  if (g.nodes > 8 || g.hidden > 16) throw ConfigError("gradcheck is limited to desk-scale shapes (nodes <= 8, hidden <= 16)");
  if (g.nodes < 1 || g.features < 1 || g.hidden < 1 || g.heads < 1 || g.steps < 1) {
    throw ConfigError("gradcheck sizes must be >= 1");
  }

  const auto rep = run_gradcheck(g);
  if (!s.quiet) {
    char line[160];
    std::printf("%s  task=%s  N=%zu F=%zu F'=%zu M=%zu merge=%s  h=%g\n", to_string(g.kind).c_str(),
                to_string(g.task).c_str(), g.nodes, g.features, g.hidden, g.heads, to_string(g.merge).c_str(), g.step);
    std::snprintf(line, sizeof(line), "%-10s %-20s %8s %14s\n", "group", "worst parameter", "entries", "max rel error");
    std::cout << line;
    for (const auto& grp : rep.groups) {
      std::snprintf(line, sizeof(line), "%-10s %-20s %8zu %14.3e\n", grp.group.c_str(),
                    grp.worst_parameter.c_str(), grp.entries, grp.max_relative_error);
      std::cout << line;
    }
    std::printf("time: %.3f s\n", rep.seconds);
  }
  if (!rep.passed) {
    std::cerr << "gradcheck FAILED: worst offender " << rep.worst_parameter << " (relative error "
              << rep.worst_error << " >= " << g.tolerance << ")\n";
    return kExitNumeric;
  }
  if (!s.quiet) std::cout << "gradcheck passed: max relative error " << rep.worst_error << " < " << g.tolerance << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Node-level graph attention for stock trend and volatility forecasting"};
  app.require_subcommand(1);

  Shared shared;
  BuildGraphArgs bg;
  auto* c_bg = app.add_subcommand("build-graph", "Build per-day relation graphs from documents or prices");
  add_shared(c_bg, shared);
  c_bg->add_option("--prices", bg.prices, "Price CSV (defines the calendar and tickers)");
  c_bg->add_option("--docs", bg.docs, "Document JSONL");
  c_bg->add_option("--method", bg.method, "cooccurrence, correlation or static")->capture_default_str();
  c_bg->add_option("--window", bg.window, "Memory window in days")->capture_default_str();
  c_bg->add_option("--threshold", bg.threshold, "Keep edges with normalized weight above this value");
  c_bg->add_option("--train-end", bg.train_end, "Last training date for the static method");
  c_bg->add_option("--output", bg.output, "Output file name inside --out")->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model and write a checkpoint and report");
  add_shared(c_tr, shared);
  c_tr->add_option("--set", tr.sets, "Override a config key (key=value), repeatable");
  c_tr->add_option("--prices", tr.prices, "Price CSV");
  c_tr->add_option("--docs", tr.docs, "Document JSONL");
  c_tr->add_option("--graph", tr.graph, "Prebuilt graph JSONL");
  c_tr->add_option("--model", tr.model, "lstm, gcn, gat, lstm+gcn or ngat");
  c_tr->add_option("--task", tr.task, "trend or volatility");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split");
  add_shared(c_ev, shared);
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  c_ev->add_option("--prices", ev.prices, "Price CSV");
  c_ev->add_option("--docs", ev.docs, "Document JSONL");
  c_ev->add_option("--graph", ev.graph, "Prebuilt graph JSONL");
  c_ev->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  c_ev->add_option("--task", ev.task, "Expected task; a different checkpoint task is an error");

  CompareArgs cg;
  auto* c_cg = app.add_subcommand("compare-graphs", "Compare graph construction methods under GAT and NGAT");
  add_shared(c_cg, shared);
  c_cg->add_option("--set", cg.sets, "Override a config key (key=value), repeatable");
  c_cg->add_option("--prices", cg.prices, "Price CSV");
  c_cg->add_option("--docs", cg.docs, "Document JSONL");
  c_cg->add_option("--task", cg.task, "volatility or trend")->capture_default_str();
  c_cg->add_option("--methods", cg.methods, "static, cooccurrence-<days>, correlation-<days>")
      ->delimiter(',')
      ->capture_default_str();
  c_cg->add_option("--graph-file", cg.graph_files, "Extra method from a graph JSONL (NAME=PATH), repeatable");
  c_cg->add_option("--models", cg.models, "Models to compare")->delimiter(',')->capture_default_str();
  c_cg->add_option("--horizons", cg.horizons, "Forecast horizons (default: config horizon)")->delimiter(',');
  c_cg->add_option("--seeds", cg.seeds, "Number of consecutive seeds per cell")->capture_default_str();
  c_cg->add_option("--threshold", cg.threshold, "Edge threshold for built graphs")->capture_default_str();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("gen-synth", "Generate synthetic prices with lagged spillover");
  add_shared(c_sy, shared);
  c_sy->add_option("--nodes", sy.nodes, "Number of tickers (default 20)");
  c_sy->add_option("--days", sy.days, "Number of trading days (default 500)");
  c_sy->add_option("--lag", sy.lag, "Spillover delay in days (default 1)");
  c_sy->add_option("--leaders", sy.leaders, "Undriven nodes in the default graph (default nodes/4)");
  c_sy->add_option("--weight", sy.weight, "Spillover weight in the default graph (default 1)");
  c_sy->add_option("--edges", sy.edges, "JSON edge file replacing the default graph");
  c_sy->add_option("--noise-std", sy.noise_std, "Innovation scale of driven nodes");
  c_sy->add_option("--noise-ratio", sy.noise_ratio, "Noise as a multiple of the spillover signal std");
  c_sy->add_option("--base-vol", sy.base_vol, "Innovation scale of undriven nodes (default 0.02)");
  c_sy->add_option("--vol-of-vol", sy.vol_of_vol, "Log-volatility shock scale of undriven nodes (default 0)");
  c_sy->add_option("--start-date", sy.start_date, "First calendar date (default 2020-01-01)");

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  add_shared(c_gc, shared);
  c_gc->add_option("--model", gc.model, "Model kind")->capture_default_str();
  c_gc->add_option("--task", gc.task, "trend or volatility")->capture_default_str();
  c_gc->add_option("--merge", gc.merge, "concat or average")->capture_default_str();
  c_gc->add_option("--reduction", gc.reduction, "sum or mean")->capture_default_str();
  c_gc->add_option("--nodes", gc.nodes, "Nodes")->capture_default_str();
  c_gc->add_option("--features", gc.features, "Input features")->capture_default_str();
  c_gc->add_option("--hidden", gc.hidden, "Hidden size")->capture_default_str();
  c_gc->add_option("--heads", gc.heads, "Attention heads")->capture_default_str();
  c_gc->add_option("--steps", gc.steps, "Window length")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  c_gc->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();
  c_gc->add_option("--corrupt", gc.corrupt, "Test hook: perturb this parameter's analytic gradient")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_bg) return cmd_build_graph(shared, bg);
    if (*c_tr) return cmd_train(shared, tr);
    if (*c_ev) return cmd_evaluate(shared, ev);
    if (*c_cg) return cmd_compare_graphs(shared, cg);
    if (*c_sy) return cmd_gen_synth(shared, sy);
    if (*c_gc) return cmd_gradcheck(shared, gc);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
