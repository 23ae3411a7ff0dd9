#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngat/errors.hpp"
#include "ngat/market_data.hpp"
#include "ngat/relation_graph.hpp"

namespace ngat {

// ---------------------------------------------------------------------------
// Civil calendar helpers (proleptic Gregorian, days since 1970-01-01)
// ---------------------------------------------------------------------------

inline long long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

inline std::string civil_from_days(long long z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const long long y = static_cast<long long>(yoe) + era * 400 + (m <= 2);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", y, m, d);
  return buf;
}

// `count` consecutive weekdays starting at or after `start`.
inline std::vector<std::string> business_days(const std::string& start, std::size_t count) {
  if (!is_iso_date(start)) throw ConfigError("start date must be YYYY-MM-DD, got '" + start + "'");
  long long z = days_from_civil(std::stoi(start.substr(0, 4)),
                                static_cast<unsigned>(std::stoi(start.substr(5, 2))),
                                static_cast<unsigned>(std::stoi(start.substr(8, 2))));
  std::vector<std::string> out;
  while (out.size() < count) {
    const long long wd = ((z % 7) + 10) % 7;  // 0 = Monday
    if (wd < 5) out.push_back(civil_from_days(z));
    ++z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lagged linear spillover generator
// ---------------------------------------------------------------------------

struct SpilloverEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  double weight = 1.0;
};

struct SyntheticSpec {
  std::size_t nodes = 20;
  std::size_t days = 500;
  std::vector<SpilloverEdge> edges;
  std::size_t lag = 1;
  // Innovation scale of nodes that receive spillover.
  double noise_std = 0.01;
  // Innovation scale of nodes without incoming edges.
  double base_vol = 0.02;
  // Log-volatility AR(1) of the undriven nodes; zero keeps them homoskedastic.
  double vol_of_vol = 0.0;
  double vol_persistence = 0.9;
  std::uint64_t seed = 0;
  std::string start_date = "2020-01-01";
  std::string ticker_prefix = "S";
};

struct SyntheticData {
  SyntheticSpec spec;
  PricePanel panel;
  std::vector<DocumentRecord> docs;
  // Generator returns, returns[i][d]; returns[i][0] is never observable.
  std::vector<std::vector<double>> returns;
};

inline void validate(const SyntheticSpec& s) {
  if (s.nodes < 2) throw ConfigError("synthetic data needs at least 2 nodes");
  if (s.lag < 1) throw ConfigError("lag must be >= 1");
  if (s.days < 2) throw ConfigError("synthetic data needs at least 2 days");
  if (s.noise_std < 0.0 || s.base_vol < 0.0 || s.vol_of_vol < 0.0) {
    throw ConfigError("noise_std, base_vol and vol_of_vol must be >= 0");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : s.edges) {
    if (e.source >= s.nodes || e.target >= s.nodes) throw ConfigError("edge endpoint out of range");
    if (e.source == e.target) throw ConfigError("self-spillover edges are not allowed");
    if (!seen.insert({e.source, e.target}).second) throw ConfigError("duplicate spillover edge");
  }
}

inline std::string synthetic_ticker(const SyntheticSpec& s, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02zu", s.ticker_prefix.c_str(), i);
  return buf;
}

// The first `leaders` nodes drive the rest round-robin with one edge each.
inline std::vector<SpilloverEdge> leader_follower_edges(std::size_t nodes, std::size_t leaders,
                                                        double weight = 1.0) {
  if (leaders == 0 || leaders >= nodes) throw ConfigError("leaders must lie in [1, nodes)");
  std::vector<SpilloverEdge> out;
  for (std::size_t f = leaders; f < nodes; ++f) out.push_back({(f - leaders) % leaders, f, weight});
  return out;
}

// Noise scale that puts driven nodes at `ratio` times the spillover signal
// standard deviation, assuming their sources are undriven.
inline double noise_for_ratio(const std::vector<SpilloverEdge>& edges, std::size_t nodes,
                              double base_vol, double ratio) {
  std::vector<double> ss(nodes, 0.0);
  for (const auto& e : edges) ss[e.target] += e.weight * e.weight;
  double sum = 0.0;
  std::size_t driven = 0;
  for (double v : ss)
    if (v > 0.0) sum += v, ++driven;
  if (driven == 0) throw ConfigError("no driven nodes");
  return ratio * base_vol * std::sqrt(sum / static_cast<double>(driven));
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const std::size_t n = spec.nodes, days = spec.days;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, 1.0);

  std::vector<std::vector<std::pair<std::size_t, double>>> parents(n);
  for (const auto& e : spec.edges) parents[e.target].push_back({e.source, e.weight});

  SyntheticData out;
  out.spec = spec;
  out.returns.assign(n, std::vector<double>(days, 0.0));
  std::vector<double> log_vol(n, 0.0);
  for (std::size_t d = 0; d < days; ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      const double shock = z(rng);
      double r = 0.0;
      if (parents[i].empty()) {
        log_vol[i] = spec.vol_persistence * log_vol[i] + spec.vol_of_vol * z(rng);
        r = spec.base_vol * std::exp(log_vol[i]) * shock;
      } else {
        r = spec.noise_std * shock;
        if (d >= spec.lag)
          for (auto [j, w] : parents[i]) r += w * out.returns[j][d - spec.lag];
      }
      out.returns[i][d] = r;
    }
  }

  PricePanel& p = out.panel;
  p.calendar = business_days(spec.start_date, days);
  for (std::size_t i = 0; i < n; ++i) p.tickers.push_back(synthetic_ticker(spec, i));
  p.bars.assign(n, std::vector<PriceBar>(days));
  for (std::size_t i = 0; i < n; ++i) {
    double close = 100.0;
    for (std::size_t d = 0; d < days; ++d) {
      const double prev = close;
      if (d > 0) close = prev * std::exp(out.returns[i][d]);
      PriceBar& b = p.bars[i][d];
      b.date = p.calendar[d];
      b.open = prev * std::exp(0.002 * z(rng));
      b.close = close;
      b.adj_close = close;
      b.high = std::max(b.open, b.close) * std::exp(std::abs(0.003 * z(rng)));
      b.low = std::min(b.open, b.close) * std::exp(-std::abs(0.003 * z(rng)));
      b.volume = std::round(std::exp(13.0 + 0.3 * z(rng)));
    }
  }
  p = compute_log_returns(std::move(p));

  for (std::size_t d = 0; d < days; ++d)
    for (std::size_t k = 0; k < spec.edges.size(); ++k) {
      const auto& e = spec.edges[k];
      DocumentRecord doc;
      doc.date = p.calendar[d];
      doc.doc_id = "syn-" + std::to_string(d) + "-" + std::to_string(k);
      doc.tickers = {p.tickers[e.source], p.tickers[e.target]};
      std::sort(doc.tickers.begin(), doc.tickers.end());
      out.docs.push_back(std::move(doc));
    }
  return out;
}

// Undirected, unit-weight view of the spillover edges.
inline RelationGraph true_relation_graph(const SyntheticSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (const auto& x : spec.edges) e.push_back({x.source, x.target});
  return graph_from_edges(spec.nodes, e, "true");
}

inline nlohmann::json true_graph_json(const SyntheticData& data) {
  nlohmann::json j;
  j["tickers"] = data.panel.tickers;
  j["lag"] = data.spec.lag;
  j["noise_std"] = data.spec.noise_std;
  j["base_vol"] = data.spec.base_vol;
  j["seed"] = data.spec.seed;
  j["edges"] = nlohmann::json::array();
  for (const auto& e : data.spec.edges)
    j["edges"].push_back({{"source", data.panel.tickers[e.source]},
                          {"target", data.panel.tickers[e.target]},
                          {"weight", e.weight}});
  return j;
}

// Reads {"edges": [{"source", "target", "weight"}]} with tickers given either
// by name (resolved against `tickers`) or by index.
inline std::vector<SpilloverEdge> read_edges_json(std::istream& in, const std::vector<std::string>& tickers) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("edge file: ") + e.what());
  }
  const auto resolve = [&](const nlohmann::json& v) -> std::size_t {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_string()) {
      const auto it = std::find(tickers.begin(), tickers.end(), v.get<std::string>());
      if (it == tickers.end()) throw DataError("edge file: unknown ticker " + v.dump());
      return static_cast<std::size_t>(it - tickers.begin());
    }
    throw DataError("edge file: endpoint must be a ticker name or index");
  };
  std::vector<SpilloverEdge> out;
  try {
    for (const auto& e : j.at("edges"))
      out.push_back({resolve(e.at("source")), resolve(e.at("target")), e.value("weight", 1.0)});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("edge file: ") + e.what());
  }
  return out;
}

}  // namespace ngat
