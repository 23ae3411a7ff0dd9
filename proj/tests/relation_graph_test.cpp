#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ngat/relation_graph.hpp"

using namespace ngat;

namespace {

const std::vector<std::string> kABCD{"A", "B", "C", "D"};

DocumentRecord doc(std::string date, std::string id, std::vector<std::string> tickers) {
  std::sort(tickers.begin(), tickers.end());
  return {std::move(date), std::move(id), std::move(tickers)};
}

DailyRelations counts(std::initializer_list<std::initializer_list<double>> rows,
                      std::string date = "d") {
  return {std::move(date), Matrix::from_rows(rows)};
}

bool symmetric_nonnegative(const RelationGraph& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.edge(i, i)) return false;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g.weights(i, j) != g.weights(j, i) || g.weights(i, j) < 0.0) return false;
      if (g.edge(i, j) != g.edge(j, i)) return false;
    }
  }
  return true;
}

}  // namespace

TEST(Cooccurrence, TripleDocumentGivesThreePairs) {
  const std::vector<DocumentRecord> docs{doc("2021-01-04", "1", {"A", "B", "C"})};
  const auto rel = daily_cooccurrence(docs, kABCD);
  EXPECT_EQ(rel.counts(0, 1), 1.0);
  EXPECT_EQ(rel.counts(0, 2), 1.0);
  EXPECT_EQ(rel.counts(1, 2), 1.0);
  EXPECT_EQ(rel.counts(2, 1), 1.0);
  EXPECT_EQ(rel.counts(0, 3), 0.0);
  EXPECT_EQ(rel.counts(0, 0), 0.0);
}

TEST(Cooccurrence, CountsAddAcrossDocuments) {
  const std::vector<DocumentRecord> docs{doc("x", "1", {"A", "B"}), doc("x", "2", {"A", "B"})};
  EXPECT_EQ(daily_cooccurrence(docs, kABCD).counts(0, 1), 2.0);
  const std::vector<DocumentRecord> solo{doc("x", "3", {"C"})};
  const auto rel = daily_cooccurrence(solo, kABCD);
  for (double v : rel.counts.data()) EXPECT_EQ(v, 0.0);
}

TEST(Cooccurrence, UnknownTickerPolicy) {
  const std::vector<DocumentRecord> docs{doc("x", "7", {"A", "ZZZ"})};
  std::vector<std::string> warnings;
  daily_cooccurrence(docs, kABCD, UnknownTickerPolicy::warn_and_drop, &warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("ZZZ"), std::string::npos);
  EXPECT_THROW(daily_cooccurrence(docs, kABCD, UnknownTickerPolicy::error), DataError);
}

TEST(Cooccurrence, DocumentOrderDoesNotMatter) {
  std::mt19937_64 rng(21);
  std::vector<DocumentRecord> docs;
  std::uniform_int_distribution<int> pick(0, 3);
  for (int k = 0; k < 40; ++k) {
    std::vector<std::string> t{kABCD[pick(rng)], kABCD[pick(rng)], kABCD[pick(rng)]};
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    docs.push_back(doc("x", std::to_string(k), t));
  }
  const auto base = daily_cooccurrence(docs, kABCD).counts;
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(docs.begin(), docs.end(), rng);
    EXPECT_EQ(daily_cooccurrence(docs, kABCD).counts, base);
  }
}

TEST(SelfLoops, MaxNeighborRule) {
  const auto r = add_self_loops(counts({{0, 1, 4, 2}, {1, 0, 0, 0}, {4, 0, 0, 0}, {2, 0, 0, 0}}));
  EXPECT_EQ(r.counts(0, 0), 4.0);
  EXPECT_EQ(r.counts(1, 1), 1.0);
  const auto iso = add_self_loops(counts({{0, 0}, {0, 0}}));
  EXPECT_EQ(iso.counts(0, 0), 1.0);
  const auto seven = add_self_loops(counts({{0, 7}, {7, 0}}));
  EXPECT_EQ(seven.counts(1, 1), 7.0);
}

TEST(MemoryWeights, DeltaThreeAndOne) {
  const auto w = memory_weights(3, 3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_DOUBLE_EQ(w[0], 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(w[1], 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(w[2], 1.0 / 6.0);
  EXPECT_EQ(memory_weights(1, 5), std::vector<double>{1.0});
  EXPECT_THROW(memory_weights(0, 1), ConfigError);
}

TEST(MemoryWeights, SumToOneForEveryDelta) {
  for (std::size_t delta = 1; delta <= 60; ++delta)
    for (std::size_t avail : {std::size_t{1}, delta / 2 + 1, delta, delta + 3}) {
      double s = 0.0;
      for (double v : memory_weights(delta, avail)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12) << delta << " " << avail;
    }
}

TEST(ConditionalAggregate, PairHistoryTwoZeroSix) {
  const std::vector<DailyRelations> h{counts({{0, 2}, {2, 0}}), counts({{0, 0}, {0, 0}}),
                                      counts({{0, 6}, {6, 0}})};
  const auto g = conditional_aggregate(h, 3);
  EXPECT_NEAR(g.weights(0, 1), 2.0, 1e-15);
  EXPECT_TRUE(g.edge(0, 1));
}

TEST(ConditionalAggregate, DeltaOneIsTodayExactly) {
  const std::vector<DailyRelations> h{counts({{3, 3}, {3, 0}}), counts({{0, 9}, {9, 0}})};
  EXPECT_EQ(conditional_aggregate(h, 1).weights, h[0].counts);
}

TEST(ConditionalAggregate, Linearity) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> c(0, 5);
  const auto random_day = [&] {
    Matrix m(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) m(i, j) = m(j, i) = c(rng);
    return DailyRelations{"d", m};
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DailyRelations> a, b, sum;
    for (int k = 0; k < 4; ++k) {
      a.push_back(random_day());
      b.push_back(random_day());
      Matrix s = a.back().counts;
      for (std::size_t q = 0; q < s.data().size(); ++q) s.data()[q] += b.back().counts.data()[q];
      sum.push_back({"d", s});
    }
    const auto ga = conditional_aggregate(a, 4), gb = conditional_aggregate(b, 4);
    const auto gs = conditional_aggregate(sum, 4);
    for (std::size_t q = 0; q < 16; ++q)
      EXPECT_NEAR(gs.weights.data()[q], ga.weights.data()[q] + gb.weights.data()[q], 1e-12);
    EXPECT_TRUE(symmetric_nonnegative(gs));
  }
}

TEST(Threshold, FourAndTwoAtPointFour) {
  const auto g = graph_from_weights("d", Matrix::from_rows({{4, 4, 2}, {4, 4, 0}, {2, 0, 2}}));
  const auto t = threshold_graph(g, 0.4);
  EXPECT_DOUBLE_EQ(t.weights(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(t.weights(0, 2), 0.5);
  EXPECT_TRUE(t.edge(0, 1));
  EXPECT_TRUE(t.edge(0, 2));
  EXPECT_FALSE(t.edge(1, 2));
}

TEST(Threshold, ZeroKeepsPositiveAndOneKeepsOnlySelfLoops) {
  const auto g = graph_from_weights("d", Matrix::from_rows({{4, 4, 2}, {4, 4, 0}, {2, 0, 2}}));
  const auto t0 = threshold_graph(g, 0.0);
  EXPECT_EQ(t0.mask, g.mask);
  const auto t1 = threshold_graph(g, 1.0);
  EXPECT_EQ(t1.edge_count(), 0u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(t1.edge(i, i));
  const auto empty = threshold_graph(graph_from_weights("d", identity(3)), 0.2);
  EXPECT_EQ(empty.edge_count(), 0u);
  EXPECT_THROW(threshold_graph(g, 1.5), ConfigError);
}

TEST(Correlation, Examples) {
  PricePanel p;
  p.calendar = {"d0", "d1", "d2"};
  p.tickers = {"I", "J", "K", "L"};
  const double nan = std::nan("");
  p.returns = {{nan, 1, 2}, {nan, 2, 4}, {nan, 2, 1}, {nan, 3, 3}};
  const auto g = correlation_graph(p, 2, 2);
  EXPECT_NEAR(g.weights(0, 1), 1.0, 1e-15);
  EXPECT_EQ(g.weights(0, 2), 0.0);
  EXPECT_FALSE(g.edge(0, 2));
  EXPECT_EQ(g.weights(0, 3), 0.0);
  EXPECT_EQ(g.weights(3, 3), 1.0);
  EXPECT_TRUE(symmetric_nonnegative(g));
  EXPECT_THROW(correlation_graph(p, 1, 2), std::out_of_range);
}

TEST(StaticGraph, Examples) {
  const std::vector<DocumentRecord> split{doc("2021-01-04", "1", {"A", "B"}),
                                          doc("2021-01-05", "2", {"A", "B"})};
  const std::vector<DocumentRecord> same{doc("2021-01-04", "1", {"A", "B"}),
                                         doc("2021-01-04", "2", {"A", "B"})};
  const auto g = static_graph(split, kABCD);
  EXPECT_EQ(g.weights(0, 1), 2.0);
  EXPECT_EQ(g.weights, static_graph(same, kABCD).weights);
  const auto none = static_graph({}, kABCD);
  EXPECT_EQ(none.edge_count(), 0u);
  EXPECT_EQ(none.weights, identity(4));
}

TEST(StaticSeries, IgnoresDocumentsAfterTraining) {
  const std::vector<std::string> cal{"2021-01-04", "2021-01-05", "2021-01-06"};
  const std::vector<DocumentRecord> docs{doc("2021-01-04", "1", {"A", "B"}),
                                         doc("2021-01-06", "2", {"C", "D"})};
  const auto s = build_static_series(cal, kABCD, docs, "2021-01-05", std::nullopt);
  ASSERT_EQ(s.days.size(), 3u);
  for (const auto& g : s.days) {
    EXPECT_TRUE(g.edge(0, 1));
    EXPECT_FALSE(g.edge(2, 3));
  }
}

TEST(CooccurrenceSeries, MemoryCarriesEdgesForward) {
  const std::vector<std::string> cal{"2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"};
  const std::vector<DocumentRecord> docs{doc("2021-01-04", "1", {"A", "B"}),
                                         doc("2021-01-06", "2", {"C", "D"})};
  const auto s1 = build_cooccurrence_series(cal, kABCD, docs, 1, 0.0);
  EXPECT_TRUE(s1.days[0].edge(0, 1));
  EXPECT_FALSE(s1.days[1].edge(0, 1));
  const auto s3 = build_cooccurrence_series(cal, kABCD, docs, 3, 0.0);
  EXPECT_TRUE(s3.days[2].edge(0, 1));
  EXPECT_TRUE(s3.days[2].edge(2, 3));
  EXPECT_FALSE(s3.days[3].edge(0, 1));
  for (const auto& g : s3.days) EXPECT_TRUE(symmetric_nonnegative(g));
}

TEST(CooccurrenceSeries, WeekendDocumentsRollForward) {
  const std::vector<std::string> cal{"2021-01-08", "2021-01-11"};
  const std::vector<DocumentRecord> docs{doc("2021-01-09", "1", {"A", "B"})};
  const auto s = build_cooccurrence_series(cal, kABCD, docs, 1, std::nullopt);
  EXPECT_FALSE(s.days[0].edge(0, 1));
  EXPECT_TRUE(s.days[1].edge(0, 1));
}

TEST(GraphJsonl, RoundTrip) {
  const std::vector<std::string> cal{"2021-01-04", "2021-01-05", "2021-01-06"};
  const std::vector<DocumentRecord> docs{doc("2021-01-04", "1", {"A", "B", "C"}),
                                         doc("2021-01-05", "2", {"A", "B"}),
                                         doc("2021-01-06", "3", {"B", "D"})};
  const auto s = build_cooccurrence_series(cal, kABCD, docs, 2, 0.1);
  std::stringstream buf;
  write_graph_jsonl(buf, s);
  const auto r = read_graph_jsonl(buf);
  EXPECT_EQ(r.tickers, s.tickers);
  EXPECT_EQ(r.method, s.method);
  EXPECT_EQ(r.window, s.window);
  EXPECT_EQ(r.threshold, s.threshold);
  ASSERT_EQ(r.days.size(), s.days.size());
  for (std::size_t d = 0; d < s.days.size(); ++d) {
    EXPECT_EQ(r.days[d].date, s.days[d].date);
    EXPECT_EQ(r.days[d].mask, s.days[d].mask);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (s.days[d].edge(i, j)) {
          EXPECT_EQ(r.days[d].weights(i, j), s.days[d].weights(i, j));
        }
  }
}

TEST(GraphJsonl, MissingHeaderIsDataError) {
  std::istringstream empty("");
  EXPECT_THROW(read_graph_jsonl(empty), DataError);
}

TEST(DocumentsJsonl, ParsesAndRejectsDuplicates) {
  std::istringstream in(
      "{\"date\":\"2021-01-04\",\"id\":\"a\",\"tickers\":[\"B\",\"A\",\"B\"]}\n\n"
      "{\"date\":\"2021-01-05\",\"id\":7,\"tickers\":[]}\n");
  const auto docs = read_documents_jsonl(in);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].tickers, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(docs[1].doc_id, "7");
  std::istringstream dup(
      "{\"date\":\"2021-01-04\",\"id\":\"a\",\"tickers\":[]}\n"
      "{\"date\":\"2021-01-05\",\"id\":\"a\",\"tickers\":[]}\n");
  EXPECT_THROW(read_documents_jsonl(dup), DataError);
}

TEST(RandomRewire, PreservesDegreesAndSymmetry) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t f = 3; f < 12; ++f) edges.push_back({f % 3, f});
  edges.push_back({0, 1});
  const auto g = graph_from_edges(12, edges);
  const auto r = degree_matched_random_graph(g, 5);
  EXPECT_EQ(r.edge_count(), g.edge_count());
  for (std::size_t i = 0; i < 12; ++i) {
    std::size_t dg = 0, dr = 0;
    for (std::size_t j = 0; j < 12; ++j) {
      if (j == i) continue;
      dg += g.edge(i, j);
      dr += r.edge(i, j);
    }
    EXPECT_EQ(dg, dr);
  }
  EXPECT_TRUE(symmetric_nonnegative(r));
  EXPECT_NE(r.mask, g.mask);
}
