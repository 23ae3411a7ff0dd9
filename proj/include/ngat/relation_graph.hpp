#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ngat/errors.hpp"
#include "ngat/market_data.hpp"
#include "ngat/numerics.hpp"

namespace ngat {

struct DocumentRecord {
  std::string date;
  std::string doc_id;
  std::vector<std::string> tickers;  // sorted, no repeats
};

// Same-day co-occurrence counts. Symmetric, zero diagonal until self-loops
// are added.
struct DailyRelations {
  std::string date;
  Matrix counts;

  std::size_t size() const { return counts.rows(); }
};

// Weighted adjacency consumed by the graph layers. mask(i, j) selects the
// pairs that take part in attention/aggregation; the diagonal is always set.
struct RelationGraph {
  std::string date;
  Matrix weights;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return weights.rows(); }
  bool edge(std::size_t i, std::size_t j) const { return mask[i * size() + j] != 0; }
  std::span<const std::uint8_t> mask_row(std::size_t i) const {
    return {mask.data() + i * size(), size()};
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) n += edge(i, j) ? 1 : 0;
    return n;
  }
  double density() const {
    const std::size_t n = size();
    return n < 2 ? 0.0 : static_cast<double>(edge_count()) / (0.5 * static_cast<double>(n * (n - 1)));
  }
};

enum class UnknownTickerPolicy { warn_and_drop, error };

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

inline std::vector<DocumentRecord> read_documents_jsonl(std::istream& in) {
  std::vector<DocumentRecord> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "documents line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + e.what());
    }
    if (!j.is_object() || !j.contains("date") || !j.contains("id") || !j.contains("tickers") ||
        !j["tickers"].is_array()) {
      throw DataError(where + "expected {\"date\", \"id\", \"tickers\": [...]}");
    }
    DocumentRecord doc;
    try {
      doc.date = j["date"].get<std::string>();
      doc.doc_id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      for (const auto& t : j["tickers"]) doc.tickers.push_back(t.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
    if (!is_iso_date(doc.date)) throw DataError(where + "bad date '" + doc.date + "'");
    if (!ids.insert(doc.doc_id).second) throw DataError(where + "duplicate id '" + doc.doc_id + "'");
    std::sort(doc.tickers.begin(), doc.tickers.end());
    doc.tickers.erase(std::unique(doc.tickers.begin(), doc.tickers.end()), doc.tickers.end());
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::vector<DocumentRecord> read_documents_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open document file '" + path + "'");
  return read_documents_jsonl(in);
}

inline void write_documents_jsonl(std::ostream& out, const std::vector<DocumentRecord>& docs) {
  for (const auto& d : docs) {
    nlohmann::json j;
    j["date"] = d.date;
    j["id"] = d.doc_id;
    j["tickers"] = d.tickers;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Daily relations
// ---------------------------------------------------------------------------

inline DailyRelations daily_cooccurrence(std::span<const DocumentRecord> docs,
                                         const std::vector<std::string>& tickers,
                                         UnknownTickerPolicy policy =
                                             UnknownTickerPolicy::warn_and_drop,
                                         std::vector<std::string>* warnings = nullptr) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tickers.size(); ++i) index.emplace(tickers[i], i);
  DailyRelations rel{docs.empty() ? std::string() : docs.front().date,
                     Matrix(tickers.size(), tickers.size())};
  std::vector<std::size_t> present;
  for (const auto& doc : docs) {
    present.clear();
    for (const auto& t : doc.tickers) {
      auto it = index.find(t);
      if (it == index.end()) {
        if (policy == UnknownTickerPolicy::error) {
          throw DataError("document '" + doc.doc_id + "' mentions unknown ticker '" + t + "'");
        }
        if (warnings) warnings->push_back("document '" + doc.doc_id + "': dropped unknown ticker '" + t + "'");
        continue;
      }
      present.push_back(it->second);
    }
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (std::size_t a = 0; a < present.size(); ++a) {
      for (std::size_t b = a + 1; b < present.size(); ++b) {
        rel.counts(present[a], present[b]) += 1.0;
        rel.counts(present[b], present[a]) += 1.0;
      }
    }
  }
  return rel;
}

// Diagonal becomes the largest neighbor count; isolated nodes get 1.
inline DailyRelations add_self_loops(DailyRelations rel) {
  const std::size_t n = rel.size();
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) best = std::max(best, rel.counts(i, j));
    rel.counts(i, i) = best > 0.0 ? best : 1.0;
  }
  return rel;
}

// w_m = (delta - m) / sum_{n=1..delta} n for m < available. When fewer than
// delta days exist the truncated weights are renormalized to sum to 1.
inline std::vector<double> memory_weights(std::size_t delta, std::size_t available) {
  if (delta < 1) throw ConfigError("memory window must be >= 1");
  const std::size_t used = std::min(delta, available);
  std::vector<double> w(used);
  double total = 0.0;
  for (std::size_t m = 0; m < used; ++m) total += static_cast<double>(delta - m);
  for (std::size_t m = 0; m < used; ++m) w[m] = static_cast<double>(delta - m) / total;
  return w;
}

inline RelationGraph graph_from_weights(std::string date, Matrix weights) {
  RelationGraph g{std::move(date), std::move(weights), {}};
  const std::size_t n = g.size();
  g.mask.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.mask[i * n + j] = (i == j || g.weights(i, j) > 0.0) ? 1 : 0;
  return g;
}

// history[0] is day d, history[1] is d-1, ... Only the first delta entries
// are used.
inline RelationGraph conditional_aggregate(std::span<const DailyRelations> history,
                                           std::size_t delta) {
  if (delta < 1) throw ConfigError("memory window must be >= 1");
  if (history.empty()) throw ContractViolation("conditional_aggregate: empty history");
  const auto w = memory_weights(delta, history.size());
  const std::size_t n = history.front().size();
  Matrix agg(n, n);
  for (std::size_t m = 0; m < w.size(); ++m) {
    if (history[m].size() != n) throw DimensionError("conditional_aggregate: universe changed");
    const auto& src = history[m].counts.data();
    auto& dst = agg.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w[m] * src[k];
  }
  return graph_from_weights(history.front().date, std::move(agg));
}

// Divides every weight by the largest off-diagonal weight of the day and
// keeps pairs whose normalized weight is strictly above tau. The diagonal
// always survives.
inline RelationGraph threshold_graph(const RelationGraph& graph, double tau) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError("relation threshold must lie in [0, 1]");
  const std::size_t n = graph.size();
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) peak = std::max(peak, graph.weights(i, j));
  RelationGraph out{graph.date, graph.weights, std::vector<std::uint8_t>(n * n, 0)};
  if (peak > 0.0)
    for (auto& v : out.weights.data()) v /= peak;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.mask[i * n + j] = (i == j || (peak > 0.0 && out.weights(i, j) > tau)) ? 1 : 0;
    }
  }
  return out;
}

// Pearson correlation of returns over [d-window+1, d], negatives clamped to
// zero, self-loops 1.
inline RelationGraph correlation_graph(const PricePanel& panel, std::size_t d, std::size_t window) {
  if (window < 2) throw ConfigError("correlation window must be >= 2");
  if (d + 1 < window + 1 || d >= panel.num_days()) {
    throw std::out_of_range("correlation_graph: day " + std::to_string(d) + " lacks " +
                            std::to_string(window) + " returns of history");
  }
  const std::size_t n = panel.num_tickers();
  const std::size_t first = d + 1 - window;
  std::vector<std::vector<double>> centered(n, std::vector<double>(window));
  std::vector<double> norm(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double mean = 0.0;
    for (std::size_t k = 0; k < window; ++k) mean += panel.returns[t][first + k];
    mean /= static_cast<double>(window);
    for (std::size_t k = 0; k < window; ++k) {
      centered[t][k] = panel.returns[t][first + k] - mean;
      norm[t] += centered[t][k] * centered[t][k];
    }
    norm[t] = std::sqrt(norm[t]);
  }
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    w(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double c = 0.0;
      if (norm[i] > 0.0 && norm[j] > 0.0) {
        for (std::size_t k = 0; k < window; ++k) c += centered[i][k] * centered[j][k];
        c /= norm[i] * norm[j];
        c = std::clamp(c, 0.0, 1.0);
      }
      w(i, j) = w(j, i) = c;
    }
  }
  return graph_from_weights(panel.calendar[d], std::move(w));
}

// All co-occurrences in `docs` summed into one graph, self-loops by the max
// rule.
inline RelationGraph static_graph(std::span<const DocumentRecord> docs,
                                  const std::vector<std::string>& tickers,
                                  UnknownTickerPolicy policy = UnknownTickerPolicy::warn_and_drop) {
  auto rel = add_self_loops(daily_cooccurrence(docs, tickers, policy));
  return graph_from_weights("static", std::move(rel.counts));
}

// Unweighted symmetric graph from an explicit edge list (weights 1, self-loops 1).
inline RelationGraph graph_from_edges(std::size_t n,
                                      const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                      std::string date = "static") {
  Matrix w(n, n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw DimensionError("graph_from_edges: node index out of range");
    if (a == b) continue;
    w(a, b) = w(b, a) = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) w(i, i) = 1.0;
  return graph_from_weights(std::move(date), std::move(w));
}

inline std::vector<std::pair<std::size_t, std::size_t>> edge_list(const RelationGraph& g) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      if (g.edge(i, j)) out.emplace_back(i, j);
  return out;
}

// Degree-preserving rewiring by repeated double-edge swaps.
inline RelationGraph degree_matched_random_graph(const RelationGraph& g, std::uint64_t seed,
                                                 std::size_t swaps_per_edge = 20) {
  auto edges = edge_list(g);
  const std::size_t n = g.size();
  if (edges.size() < 2) return graph_from_edges(n, edges, g.date);
  std::set<std::pair<std::size_t, std::size_t>> present(edges.begin(), edges.end());
  const auto key = [](std::size_t a, std::size_t b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  std::bernoulli_distribution flip(0.5);
  const std::size_t attempts = swaps_per_edge * edges.size();
  for (std::size_t it = 0; it < attempts; ++it) {
    const std::size_t x = pick(rng), y = pick(rng);
    if (x == y) continue;
    auto [a, b] = edges[x];
    auto [c, d] = edges[y];
    if (flip(rng)) std::swap(c, d);
    // (a-b, c-d) -> (a-d, c-b)
    if (a == d || c == b) continue;
    const auto e1 = key(a, d), e2 = key(c, b);
    if (e1 == e2 || present.count(e1) || present.count(e2)) continue;
    present.erase(edges[x]);
    present.erase(edges[y]);
    present.insert(e1);
    present.insert(e2);
    edges[x] = e1;
    edges[y] = e2;
  }
  return graph_from_edges(n, edges, g.date);
}

// ---------------------------------------------------------------------------
// Per-day graph series
// ---------------------------------------------------------------------------

struct GraphSeries {
  std::vector<std::string> tickers;
  std::string method;
  std::size_t window = 0;
  std::optional<double> threshold;
  std::vector<RelationGraph> days;  // aligned with the price calendar
};

// Documents dated on a non-trading day count toward the next trading day;
// documents after the last calendar day are ignored.
inline std::vector<std::vector<DocumentRecord>> bucket_documents(
    const std::vector<std::string>& calendar, const std::vector<DocumentRecord>& docs) {
  std::vector<std::vector<DocumentRecord>> buckets(calendar.size());
  for (const auto& doc : docs) {
    const auto it = std::lower_bound(calendar.begin(), calendar.end(), doc.date);
    if (it == calendar.end()) continue;
    buckets[static_cast<std::size_t>(it - calendar.begin())].push_back(doc);
  }
  return buckets;
}

inline GraphSeries build_cooccurrence_series(const std::vector<std::string>& calendar,
                                             const std::vector<std::string>& tickers,
                                             const std::vector<DocumentRecord>& docs,
                                             std::size_t delta, std::optional<double> tau,
                                             UnknownTickerPolicy policy =
                                                 UnknownTickerPolicy::warn_and_drop,
                                             std::vector<std::string>* warnings = nullptr) {
  if (delta < 1) throw ConfigError("memory window must be >= 1");
  const auto buckets = bucket_documents(calendar, docs);
  std::vector<DailyRelations> daily;
  daily.reserve(calendar.size());
  for (std::size_t d = 0; d < calendar.size(); ++d) {
    auto rel = add_self_loops(daily_cooccurrence(buckets[d], tickers, policy, warnings));
    rel.date = calendar[d];
    daily.push_back(std::move(rel));
  }
  GraphSeries series{tickers, "cooccurrence", delta, tau, {}};
  std::vector<DailyRelations> history;
  for (std::size_t d = 0; d < calendar.size(); ++d) {
    history.clear();
    for (std::size_t m = 0; m < delta && m <= d; ++m) history.push_back(daily[d - m]);
    auto g = conditional_aggregate(history, delta);
    series.days.push_back(tau ? threshold_graph(g, *tau) : std::move(g));
  }
  return series;
}

// Days without enough history get a self-loop-only graph.
inline GraphSeries build_correlation_series(const PricePanel& panel, std::size_t window,
                                            std::optional<double> tau) {
  GraphSeries series{panel.tickers, "correlation", window, tau, {}};
  const std::size_t n = panel.num_tickers();
  for (std::size_t d = 0; d < panel.num_days(); ++d) {
    RelationGraph g = d >= window ? correlation_graph(panel, d, window)
                                  : graph_from_weights(panel.calendar[d], identity(n));
    series.days.push_back(tau ? threshold_graph(g, *tau) : std::move(g));
  }
  return series;
}

// Documents dated up to and including `train_end_date` form one graph reused
// for every day.
inline GraphSeries build_static_series(const std::vector<std::string>& calendar,
                                       const std::vector<std::string>& tickers,
                                       const std::vector<DocumentRecord>& docs,
                                       const std::string& train_end_date,
                                       std::optional<double> tau) {
  std::vector<DocumentRecord> train_docs;
  for (const auto& d : docs)
    if (d.date <= train_end_date) train_docs.push_back(d);
  RelationGraph g = static_graph(train_docs, tickers);
  if (tau) g = threshold_graph(g, *tau);
  GraphSeries series{tickers, "static", 0, tau, {}};
  for (const auto& day : calendar) {
    series.days.push_back(g);
    series.days.back().date = day;
  }
  return series;
}

inline GraphSeries constant_series(const std::vector<std::string>& calendar,
                                   const std::vector<std::string>& tickers,
                                   const RelationGraph& g, std::string method) {
  GraphSeries series{tickers, std::move(method), 0, std::nullopt, {}};
  for (const auto& day : calendar) {
    series.days.push_back(g);
    series.days.back().date = day;
  }
  return series;
}

// ---------------------------------------------------------------------------
// Graph JSONL: a header object with the ticker legend, then one object per
// day with the masked upper-triangle edges and the self-loop weights.
// ---------------------------------------------------------------------------

inline void write_graph_jsonl(std::ostream& out, const GraphSeries& series) {
  nlohmann::json header;
  header["tickers"] = series.tickers;
  header["method"] = series.method;
  header["window"] = series.window;
  header["threshold"] = series.threshold ? nlohmann::json(*series.threshold) : nlohmann::json();
  out << header.dump() << '\n';
  for (const auto& g : series.days) {
    nlohmann::json j;
    j["date"] = g.date;
    auto edges = nlohmann::json::array();
    for (auto [i, k] : edge_list(g)) edges.push_back({i, k, g.weights(i, k)});
    j["edges"] = std::move(edges);
    std::vector<double> loops(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) loops[i] = g.weights(i, i);
    j["self_loops"] = loops;
    out << j.dump() << '\n';
  }
}

inline GraphSeries read_graph_jsonl(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  GraphSeries series;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "graph line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        series.tickers = j.at("tickers").get<std::vector<std::string>>();
        series.method = j.value("method", std::string("unknown"));
        series.window = j.value("window", std::size_t{0});
        if (j.contains("threshold") && !j["threshold"].is_null())
          series.threshold = j["threshold"].get<double>();
        have_header = true;
        continue;
      }
      const std::size_t n = series.tickers.size();
      Matrix w(n, n);
      const auto loops = j.at("self_loops").get<std::vector<double>>();
      if (loops.size() != n) throw DataError(where + "self_loops length differs from legend");
      for (std::size_t i = 0; i < n; ++i) w(i, i) = loops[i];
      std::vector<std::uint8_t> mask(n * n, 0);
      for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
      for (const auto& e : j.at("edges")) {
        const auto a = e.at(0).get<std::size_t>(), b = e.at(1).get<std::size_t>();
        if (a >= n || b >= n) throw DataError(where + "edge index out of range");
        w(a, b) = w(b, a) = e.at(2).get<double>();
        mask[a * n + b] = mask[b * n + a] = 1;
      }
      series.days.push_back(RelationGraph{j.at("date").get<std::string>(), std::move(w), std::move(mask)});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  if (!have_header) throw DataError("graph file has no header line");
  return series;
}

inline GraphSeries read_graph_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file '" + path + "'");
  return read_graph_jsonl(in);
}

}  // namespace ngat
