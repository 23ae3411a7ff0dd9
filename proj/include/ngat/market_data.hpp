#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ngat/errors.hpp"
#include "ngat/numerics.hpp"

namespace ngat {

// ---------------------------------------------------------------------------
// Basic types
// ---------------------------------------------------------------------------

struct PriceBar {
  std::string date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double adj_close = 0.0;
  double volume = 0.0;
};

// Cross-sectionally aligned daily bars. bars[t][d] and returns[t][d] are
// indexed by ticker position and calendar position. returns[t][0] is NaN.
struct PricePanel {
  std::vector<std::string> tickers;
  std::vector<std::string> calendar;
  std::vector<std::vector<PriceBar>> bars;
  std::vector<std::vector<double>> returns;

  std::size_t num_tickers() const { return tickers.size(); }
  std::size_t num_days() const { return calendar.size(); }
};

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view field, std::size_t line_no, const char* column) {
  field = trim(field);
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse " + column + " value '" +
                    std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

inline void validate_bar(const PriceBar& b, const std::string& ticker, std::size_t line_no) {
  const auto where = [&] {
    return "line " + std::to_string(line_no) + " (" + ticker + " " + b.date + "): ";
  };
  if (!(b.open > 0 && b.high > 0 && b.low > 0 && b.close > 0 && b.adj_close > 0)) {
    throw DataError(where() + "prices must be positive");
  }
  if (b.high < std::max({b.open, b.close, b.low})) throw DataError(where() + "high below open/close/low");
  if (b.low > std::min(b.open, b.close)) throw DataError(where() + "low above open/close");
  if (!(b.volume >= 0)) throw DataError(where() + "negative volume");
}

// Fills returns[t][d] = ln(A_d / A_{d-1}) for d >= 1.
inline PricePanel compute_log_returns(PricePanel panel) {
  panel.returns.assign(panel.num_tickers(), {});
  for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
    const auto& bars = panel.bars[t];
    auto& r = panel.returns[t];
    r.assign(bars.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t d = 0; d < bars.size(); ++d) {
      if (!(bars[d].adj_close > 0)) {
        throw DataError("nonpositive adjusted close for " + panel.tickers[t] + " on " +
                        bars[d].date);
      }
      if (d > 0) r[d] = std::log(bars[d].adj_close / bars[d - 1].adj_close);
    }
  }
  return panel;
}

// Parses `date,ticker,open,high,low,close,adj_close,volume`. Tickers missing any
// calendar day are dropped and reported through `warnings`. Tickers are sorted.
inline PricePanel read_price_csv(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  static constexpr std::string_view kHeader = "date,ticker,open,high,low,close,adj_close,volume";
  std::string line;
  if (!std::getline(in, line)) throw DataError("price CSV is empty");
  if (detail::trim(line) != kHeader) {
    throw DataError("line 1: expected header '" + std::string(kHeader) + "'");
  }
  std::map<std::string, std::map<std::string, PriceBar>> by_ticker;
  std::set<std::string> dates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8) {
      throw DataError("line " + std::to_string(line_no) + ": expected 8 fields, got " +
                      std::to_string(f.size()));
    }
    PriceBar b;
    b.date = std::string(detail::trim(f[0]));
    if (!is_iso_date(b.date)) {
      throw DataError("line " + std::to_string(line_no) + ": bad date '" + b.date + "'");
    }
    const std::string ticker(detail::trim(f[1]));
    if (ticker.empty()) throw DataError("line " + std::to_string(line_no) + ": empty ticker");
    b.open = detail::parse_number(f[2], line_no, "open");
    b.high = detail::parse_number(f[3], line_no, "high");
    b.low = detail::parse_number(f[4], line_no, "low");
    b.close = detail::parse_number(f[5], line_no, "close");
    b.adj_close = detail::parse_number(f[6], line_no, "adj_close");
    b.volume = detail::parse_number(f[7], line_no, "volume");
    validate_bar(b, ticker, line_no);
    auto& series = by_ticker[ticker];
    if (!series.emplace(b.date, b).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate row for " + ticker + " " +
                      b.date);
    }
    dates.insert(b.date);
  }

  PricePanel panel;
  panel.calendar.assign(dates.begin(), dates.end());
  for (auto& [ticker, series] : by_ticker) {
    if (series.size() != panel.calendar.size()) {
      if (warnings) {
        warnings->push_back("dropping " + ticker + ": " + std::to_string(series.size()) + " of " +
                            std::to_string(panel.calendar.size()) + " trading days present");
      }
      continue;
    }
    panel.tickers.push_back(ticker);
    std::vector<PriceBar> bars;
    bars.reserve(series.size());
    for (auto& [date, bar] : series) bars.push_back(bar);
    panel.bars.push_back(std::move(bars));
  }
  return compute_log_returns(std::move(panel));
}

inline PricePanel read_price_csv(const std::string& path,
                                 std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price file '" + path + "'");
  return read_price_csv(in, warnings);
}

// Day-major rows; shortest round-trip formatting so reloads are bit-exact.
inline void write_price_csv(std::ostream& out, const PricePanel& panel) {
  out << "date,ticker,open,high,low,close,adj_close,volume\n";
  for (std::size_t d = 0; d < panel.num_days(); ++d) {
    for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
      const auto& b = panel.bars[t][d];
      out << b.date << ',' << panel.tickers[t] << ',' << format_double(b.open) << ','
          << format_double(b.high) << ',' << format_double(b.low) << ','
          << format_double(b.close) << ',' << format_double(b.adj_close) << ','
          << format_double(b.volume) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Feature regularization
// ---------------------------------------------------------------------------

struct NormalizationStats {
  std::vector<double> open_mean, open_std;
  std::vector<double> volume_mean, volume_std;
  // Log-return moments over days [1, end_day); used by the optional return_z transforms.
  std::vector<double> return_mean, return_std;
};

// Per-stock population mean/std of open and volume over days [0, end_day).
inline NormalizationStats fit_normalization(const PricePanel& panel, std::size_t end_day) {
  end_day = std::min(end_day, panel.num_days());
  if (end_day == 0) throw DataError("fit_normalization: empty training segment");
  NormalizationStats s;
  const auto moments = [&](std::size_t t, auto field, double& mean, double& sd) {
    double sum = 0.0;
    for (std::size_t d = 0; d < end_day; ++d) sum += field(panel.bars[t][d]);
    mean = sum / static_cast<double>(end_day);
    double ss = 0.0;
    for (std::size_t d = 0; d < end_day; ++d) {
      const double x = field(panel.bars[t][d]) - mean;
      ss += x * x;
    }
    sd = std::sqrt(ss / static_cast<double>(end_day));
  };
  for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
    double om, os, vm, vs;
    moments(t, [](const PriceBar& b) { return b.open; }, om, os);
    moments(t, [](const PriceBar& b) { return b.volume; }, vm, vs);
    if (!(os > 0.0)) {
      throw DataError("zero standard deviation of open price for " + panel.tickers[t]);
    }
    s.open_mean.push_back(om);
    s.open_std.push_back(os);
    s.volume_mean.push_back(vm);
    s.volume_std.push_back(vs);
    double rm = 0.0, rs = 0.0;
    if (end_day > 1 && panel.returns.size() == panel.num_tickers()) {
      const auto& r = panel.returns[t];
      for (std::size_t d = 1; d < end_day; ++d) rm += r[d];
      rm /= static_cast<double>(end_day - 1);
      for (std::size_t d = 1; d < end_day; ++d) rs += (r[d] - rm) * (r[d] - rm);
      rs = std::sqrt(rs / static_cast<double>(end_day - 1));
    }
    s.return_mean.push_back(rm);
    s.return_std.push_back(rs);
  }
  return s;
}

// One named feature column. Extra transforms can be registered to widen F.
struct FeatureTransform {
  std::string name;
  std::function<double(const PricePanel&, const NormalizationStats&, std::size_t ticker,
                       std::size_t day)>
      compute;
};

// [O', H', L', C', r, V'] in this order.
inline std::vector<FeatureTransform> canonical_features() {
  using P = const PricePanel&;
  using S = const NormalizationStats&;
  return {
      {"open_z", [](P p, S s, std::size_t t, std::size_t d) {
         return (p.bars[t][d].open - s.open_mean[t]) / s.open_std[t];
       }},
      {"high_rel", [](P p, S, std::size_t t, std::size_t d) {
         const auto& b = p.bars[t][d];
         return (b.high - b.open) / b.open;
       }},
      {"low_rel", [](P p, S, std::size_t t, std::size_t d) {
         const auto& b = p.bars[t][d];
         return (b.low - b.open) / b.open;
       }},
      {"close_rel", [](P p, S, std::size_t t, std::size_t d) {
         const auto& b = p.bars[t][d];
         return (b.close - b.open) / b.open;
       }},
      {"log_return", [](P p, S, std::size_t t, std::size_t d) { return p.returns[t][d]; }},
      {"volume_z", [](P p, S s, std::size_t t, std::size_t d) {
         if (!(s.volume_std[t] > 0.0)) return 0.0;
         return (p.bars[t][d].volume - s.volume_mean[t]) / s.volume_std[t];
       }},
  };
}

// Optional extras beyond the canonical six.
inline FeatureTransform feature_by_name(const std::string& name) {
  for (auto& f : canonical_features())
    if (f.name == name) return f;
  if (name == "log_range") {
    return {name, [](const PricePanel& p, const NormalizationStats&, std::size_t t,
                     std::size_t d) { return std::log(p.bars[t][d].high / p.bars[t][d].low); }};
  }
  if (name == "abs_return") {
    return {name, [](const PricePanel& p, const NormalizationStats&, std::size_t t,
                     std::size_t d) { return std::abs(p.returns[t][d]); }};
  }
  if (name == "return_z" || name == "abs_return_z") {
    const bool absolute = name == "abs_return_z";
    return {name, [absolute](const PricePanel& p, const NormalizationStats& s, std::size_t t,
                             std::size_t d) {
              if (!(s.return_std.at(t) > 0.0)) return 0.0;
              const double z = (p.returns[t][d] - s.return_mean[t]) / s.return_std[t];
              return absolute ? std::abs(z) : z;
            }};
  }
  throw ConfigError("unknown feature transform '" + name + "'");
}

// features[t] is a (days x F) matrix. Row 0 carries a NaN return and is never
// part of an eligible window.
struct FeatureTable {
  std::vector<std::string> names;
  std::vector<Matrix> per_ticker;

  std::size_t num_features() const { return names.size(); }
};

inline FeatureTable normalize_features(const PricePanel& panel, const NormalizationStats& stats,
                                       const std::vector<FeatureTransform>& transforms =
                                           canonical_features()) {
  if (stats.open_mean.size() != panel.num_tickers()) {
    throw DimensionError("normalize_features: statistics fitted on a different universe");
  }
  FeatureTable table;
  for (const auto& tr : transforms) table.names.push_back(tr.name);
  for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
    Matrix m(panel.num_days(), transforms.size());
    for (std::size_t d = 0; d < panel.num_days(); ++d)
      for (std::size_t f = 0; f < transforms.size(); ++f)
        m(d, f) = transforms[f].compute(panel, stats, t, d);
    table.per_ticker.push_back(std::move(m));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Labels and scenarios
// ---------------------------------------------------------------------------

namespace detail {

inline void check_label_range(std::size_t size, std::size_t d, std::size_t horizon,
                              bool needs_past) {
  if (horizon == 0) throw ContractViolation("horizon T must be >= 1");
  if (d + horizon >= size) {
    throw std::out_of_range("label window d+1..d+T exceeds the return series (d=" +
                            std::to_string(d) + ", T=" + std::to_string(horizon) + ")");
  }
  if (needs_past && d + 1 < horizon) {
    throw std::out_of_range("past window d-T+1..d precedes the first return (d=" +
                            std::to_string(d) + ", T=" + std::to_string(horizon) + ")");
  }
}

inline double window_mean(std::span<const double> r, std::size_t first, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = first; i < first + count; ++i) {
    if (!std::isfinite(r[i])) {
      throw DataError("return at index " + std::to_string(i) + " is undefined");
    }
    s += r[i];
  }
  return s / static_cast<double>(count);
}

}  // namespace detail

inline double past_mean(std::span<const double> returns, std::size_t d, std::size_t horizon) {
  detail::check_label_range(returns.size(), d, horizon, true);
  return detail::window_mean(returns, d + 1 - horizon, horizon);
}

inline double future_mean(std::span<const double> returns, std::size_t d, std::size_t horizon) {
  detail::check_label_range(returns.size(), d, horizon, false);
  return detail::window_mean(returns, d + 1, horizon);
}

// 1 iff the mean return over d+1..d+T strictly exceeds the mean over d-T+1..d.
inline int trend_label(std::span<const double> returns, std::size_t d, std::size_t horizon) {
  return future_mean(returns, d, horizon) > past_mean(returns, d, horizon) ? 1 : 0;
}

// Realized standard deviation over d+1..d+T with divisor T.
inline double volatility_label(std::span<const double> returns, std::size_t d,
                               std::size_t horizon) {
  const double mu = future_mean(returns, d, horizon);
  double ss = 0.0;
  for (std::size_t i = d + 1; i <= d + horizon; ++i) ss += (returns[i] - mu) * (returns[i] - mu);
  return std::sqrt(ss / static_cast<double>(horizon));
}

struct Scenario {
  bool last_positive = false;  // LP vs LN
  bool next_higher = false;    // N+ vs N-

  std::string label() const {
    return std::string("(") + (last_positive ? "LP" : "LN") + "," + (next_higher ? "N+" : "N-") +
           ")";
  }
  std::string nickname() const {
    if (last_positive) return next_higher ? "surge" : "pullback";
    return next_higher ? "rebound" : "plunge";
  }
  std::size_t index() const { return (last_positive ? 2 : 0) + (next_higher ? 1 : 0); }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline Scenario scenario_tag(std::span<const double> returns, std::size_t d, std::size_t horizon) {
  Scenario s;
  s.last_positive = past_mean(returns, d, horizon) > 0.0;
  s.next_higher = trend_label(returns, d, horizon) == 1;
  return s;
}

// ---------------------------------------------------------------------------
// Samples and splits
// ---------------------------------------------------------------------------

struct FeatureWindow {
  std::size_t ticker = 0;
  std::size_t anchor_day = 0;
  Matrix features;  // window x F, oldest row first
};

struct Sample {
  FeatureWindow window;
  int trend_label = 0;
  double volatility_label = 0.0;
  Scenario scenario;
  std::size_t horizon = 0;

  std::size_t ticker() const { return window.ticker; }
  std::size_t day() const { return window.anchor_day; }
};

// Anchors d with at least max(window, T) + 1 days up to and including d and
// T days after it.
inline std::vector<std::size_t> eligible_days(std::size_t num_days, std::size_t window,
                                              std::size_t horizon) {
  if (window == 0 || horizon == 0) throw ConfigError("window and horizon must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t d = std::max(window, horizon); d + horizon < num_days; ++d) out.push_back(d);
  return out;
}

inline FeatureWindow make_window(const FeatureTable& table, std::size_t ticker, std::size_t day,
                                 std::size_t window) {
  const Matrix& src = table.per_ticker.at(ticker);
  if (day + 1 < window || day >= src.rows()) {
    throw std::out_of_range("make_window: day " + std::to_string(day) + " lacks " +
                            std::to_string(window) + " rows of history");
  }
  FeatureWindow w{ticker, day, Matrix(window, src.cols())};
  for (std::size_t r = 0; r < window; ++r) {
    const auto from = src.row(day + 1 - window + r);
    std::copy(from.begin(), from.end(), w.features.row(r).begin());
  }
  return w;
}

// One sample per (eligible day, ticker), day-major.
inline std::vector<Sample> build_samples(const PricePanel& panel, const FeatureTable& table,
                                         std::size_t window, std::size_t horizon) {
  std::vector<Sample> out;
  if (panel.num_tickers() == 0 || panel.num_days() == 0) return out;
  for (std::size_t d : eligible_days(panel.num_days(), window, horizon)) {
    for (std::size_t t = 0; t < panel.num_tickers(); ++t) {
      Sample s;
      s.window = make_window(table, t, d, window);
      const std::span<const double> r = panel.returns[t];
      s.trend_label = trend_label(r, d, horizon);
      s.volatility_label = volatility_label(r, d, horizon);
      s.scenario = scenario_tag(r, d, horizon);
      s.horizon = horizon;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DaySplit {
  std::vector<std::size_t> train, val, test;
};

// Splits an ordered list of unique anchor days at the ratio boundaries and
// drops the first `embargo` days of each later non-empty segment.
inline DaySplit split_days(const std::vector<std::size_t>& days, const SplitRatios& ratios,
                           std::size_t embargo) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  if (!(ratios.train > 0)) throw ConfigError("train ratio must be positive");
  const std::size_t n = days.size();
  const auto b1 = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto b2 = static_cast<std::size_t>(
      std::llround((ratios.train + ratios.val) * static_cast<double>(n)));
  DaySplit s;
  s.train.assign(days.begin(), days.begin() + static_cast<std::ptrdiff_t>(std::min(b1, n)));
  const auto take = [&](std::size_t from, std::size_t to, double ratio, const char* name) {
    std::vector<std::size_t> seg;
    if (!(ratio > 0)) return seg;
    to = std::min(to, n);
    if (from + embargo >= to) {
      throw ConfigError(std::string("too few days for the ") + name + " split after a " +
                        std::to_string(embargo) + "-day embargo");
    }
    seg.assign(days.begin() + static_cast<std::ptrdiff_t>(from + embargo),
               days.begin() + static_cast<std::ptrdiff_t>(to));
    return seg;
  };
  s.val = take(b1, b2, ratios.val, "validation");
  s.test = take(b2, n, ratios.test, "test");
  if (s.train.empty()) throw ConfigError("train split is empty");
  return s;
}

struct SampleSplit {
  std::vector<Sample> train, val, test;
};

inline SampleSplit chronological_split(std::vector<Sample> samples, const SplitRatios& ratios,
                                       std::size_t horizon) {
  std::vector<std::size_t> days;
  for (const auto& s : samples) days.push_back(s.day());
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  const DaySplit ds = split_days(days, ratios, horizon);
  const std::set<std::size_t> tr(ds.train.begin(), ds.train.end());
  const std::set<std::size_t> va(ds.val.begin(), ds.val.end());
  const std::set<std::size_t> te(ds.test.begin(), ds.test.end());
  SampleSplit out;
  for (auto& s : samples) {
    if (tr.count(s.day())) out.train.push_back(std::move(s));
    else if (va.count(s.day())) out.val.push_back(std::move(s));
    else if (te.count(s.day())) out.test.push_back(std::move(s));
  }
  return out;
}

// Debug export: one JSON object per sample.
inline void write_samples_jsonl(std::ostream& out, const PricePanel& panel,
                                const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    nlohmann::json j;
    j["ticker"] = panel.tickers.at(s.ticker());
    j["date"] = panel.calendar.at(s.day());
    j["horizon"] = s.horizon;
    j["trend_label"] = s.trend_label;
    j["volatility_label"] = s.volatility_label;
    j["scenario"] = s.scenario.label();
    out << j.dump() << '\n';
  }
}

}  // namespace ngat
