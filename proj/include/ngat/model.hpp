#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ngat/errors.hpp"
#include "ngat/numerics.hpp"
#include "ngat/relation_graph.hpp"

namespace ngat {

enum class ModelKind { lstm, gcn, gat, lstm_gcn, ngat };
enum class Task { trend, volatility };
enum class MergeMode { concat, average };
enum class AttentionReduction { sum, mean };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::lstm: return "lstm";
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::lstm_gcn: return "lstm+gcn";
    case ModelKind::ngat: return "ngat";
  }
  return "?";
}
inline std::string to_string(Task t) { return t == Task::trend ? "trend" : "volatility"; }
inline std::string to_string(MergeMode m) { return m == MergeMode::concat ? "concat" : "average"; }
inline std::string to_string(AttentionReduction r) {
  return r == AttentionReduction::sum ? "sum" : "mean";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "lstm") return ModelKind::lstm;
  if (s == "gcn") return ModelKind::gcn;
  if (s == "gat") return ModelKind::gat;
  if (s == "lstm+gcn" || s == "lstm_gcn") return ModelKind::lstm_gcn;
  if (s == "ngat") return ModelKind::ngat;
  throw ConfigError("unknown model '" + s + "' (valid: lstm, gcn, gat, lstm+gcn, ngat)");
}
inline Task parse_task(const std::string& s) {
  if (s == "trend" || s == "classification") return Task::trend;
  if (s == "volatility" || s == "regression") return Task::volatility;
  throw ConfigError("unknown task '" + s + "' (valid: trend, volatility)");
}
inline MergeMode parse_merge_mode(const std::string& s) {
  if (s == "concat") return MergeMode::concat;
  if (s == "average") return MergeMode::average;
  throw ConfigError("unknown merge mode '" + s + "' (valid: concat, average)");
}
inline AttentionReduction parse_reduction(const std::string& s) {
  if (s == "sum") return AttentionReduction::sum;
  if (s == "mean") return AttentionReduction::mean;
  throw ConfigError("unknown attention reduction '" + s + "' (valid: sum, mean)");
}

inline bool uses_attention(ModelKind k) { return k == ModelKind::gat || k == ModelKind::ngat; }
inline bool uses_gcn(ModelKind k) { return k == ModelKind::gcn || k == ModelKind::lstm_gcn; }

// ===========================================================================
// LSTM sequential encoder
// ===========================================================================

// Gate rows are stacked [input, forget, output, candidate], each `hidden` tall.
struct LstmParameters {
  Matrix w_input;   // 4H x F
  Matrix w_hidden;  // 4H x H
  Matrix bias;      // 4H x 1

  std::size_t hidden() const { return w_hidden.cols(); }
  std::size_t features() const { return w_input.cols(); }
};

// Per-step activations for one batch of sequences (rows = nodes).
struct LstmTrace {
  std::vector<Matrix> gates;   // step t: N x 4H, post-activation
  std::vector<Matrix> cell;    // index 0 is the zero state; N x H
  std::vector<Matrix> hidden;  // index 0 is the zero state; N x H
};

namespace detail {

inline void check_lstm_shapes(const Matrix& w_input, const Matrix& w_hidden, const Matrix& bias) {
  const std::size_t h = w_hidden.cols();
  if (w_hidden.rows() != 4 * h || w_input.rows() != 4 * h || bias.rows() != 4 * h ||
      bias.cols() != 1) {
    throw DimensionError("LSTM parameter shapes inconsistent: w_input " + w_input.shape_string() +
                         ", w_hidden " + w_hidden.shape_string() + ", bias " + bias.shape_string());
  }
}

}  // namespace detail

// Runs each window from a zero state and returns the final hidden states
// (N x H). windows[i] is (steps x F) for node i.
inline Matrix lstm_forward(std::span<const Matrix> windows, const Matrix& w_input,
                           const Matrix& w_hidden, const Matrix& bias,
                           LstmTrace* trace = nullptr) {
  detail::check_lstm_shapes(w_input, w_hidden, bias);
  const std::size_t n = windows.size();
  const std::size_t h = w_hidden.cols();
  const std::size_t steps = n == 0 ? 0 : windows.front().rows();
  for (const auto& w : windows) {
    if (w.rows() != steps || w.cols() != w_input.cols() || steps == 0) {
      throw DimensionError("lstm_forward: window " + w.shape_string() + " does not match " +
                           std::to_string(steps) + " steps x " + std::to_string(w_input.cols()) +
                           " features");
    }
  }
  Matrix c_prev(n, h), h_prev(n, h);
  if (trace) {
    trace->gates.assign(steps, Matrix(n, 4 * h));
    trace->cell.assign(1, c_prev);
    trace->hidden.assign(1, h_prev);
  }
  std::vector<double> z(4 * h);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix c_next(n, h), h_next(n, h);
    for (std::size_t i = 0; i < n; ++i) {
      gemv(w_input, windows[i].row(t), z);
      gemv(w_hidden, h_prev.row(i), z, true);
      for (std::size_t k = 0; k < 4 * h; ++k) z[k] += bias[k];
      for (std::size_t k = 0; k < 3 * h; ++k) z[k] = sigmoid(z[k]);
      for (std::size_t k = 3 * h; k < 4 * h; ++k) z[k] = std::tanh(z[k]);
      for (std::size_t k = 0; k < h; ++k) {
        const double c = z[h + k] * c_prev(i, k) + z[k] * z[3 * h + k];
        c_next(i, k) = c;
        h_next(i, k) = z[2 * h + k] * std::tanh(c);
      }
      if (trace) std::copy(z.begin(), z.end(), trace->gates[t].row(i).begin());
    }
    if (trace) {
      trace->cell.push_back(c_next);
      trace->hidden.push_back(h_next);
    }
    c_prev = std::move(c_next);
    h_prev = std::move(h_next);
  }
  return h_prev;
}

inline std::vector<double> lstm_forward(const Matrix& window, const LstmParameters& p) {
  const Matrix out = lstm_forward(std::span<const Matrix>(&window, 1), p.w_input, p.w_hidden, p.bias);
  return out.data();
}

// Backpropagation through time given dL/dh at the last step.
inline void lstm_backward(std::span<const Matrix> windows, const Matrix& w_hidden,
                          const LstmTrace& trace, const Matrix& d_last, Matrix& g_input,
                          Matrix& g_hidden, Matrix& g_bias) {
  const std::size_t n = windows.size();
  const std::size_t h = w_hidden.cols();
  const std::size_t steps = trace.gates.size();
  std::vector<double> dh(h), dc(h), dz(4 * h), dh_prev(h);
  for (std::size_t i = 0; i < n; ++i) {
    const auto last = d_last.row(i);
    std::copy(last.begin(), last.end(), dh.begin());
    std::fill(dc.begin(), dc.end(), 0.0);
    for (std::size_t t = steps; t-- > 0;) {
      const auto g = trace.gates[t].row(i);
      const auto c = trace.cell[t + 1].row(i);
      const auto c_prev = trace.cell[t].row(i);
      for (std::size_t k = 0; k < h; ++k) {
        const double gi = g[k], gf = g[h + k], go = g[2 * h + k], gc = g[3 * h + k];
        const double tc = std::tanh(c[k]);
        const double d_out = dh[k] * tc;
        dc[k] += dh[k] * go * (1.0 - tc * tc);
        const double d_in = dc[k] * gc;
        const double d_cand = dc[k] * gi;
        const double d_forget = dc[k] * c_prev[k];
        dz[k] = d_in * gi * (1.0 - gi);
        dz[h + k] = d_forget * gf * (1.0 - gf);
        dz[2 * h + k] = d_out * go * (1.0 - go);
        dz[3 * h + k] = d_cand * (1.0 - gc * gc);
        dc[k] *= gf;
      }
      outer_acc(g_input, dz, windows[i].row(t));
      outer_acc(g_hidden, dz, trace.hidden[t].row(i));
      for (std::size_t k = 0; k < 4 * h; ++k) g_bias[k] += dz[k];
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      gemv_t_acc(w_hidden, dz, dh_prev);
      dh.swap(dh_prev);
    }
  }
}

// ===========================================================================
// Graph attention (node-level and shared)
// ===========================================================================

// One attention head. `attention` stacks one (2H x H) matrix per slot: N slots
// for node-level attention, a single slot when it is shared by every node.
struct AttentionHead {
  const Matrix& w_query;   // H x H
  const Matrix& w_key;     // H x H
  const Matrix& w_value;   // H x H
  const Matrix& attention; // slots*2H x H
  const Matrix& w_merge;   // H x 2H

  std::size_t hidden() const { return w_query.rows(); }
  std::size_t slots() const { return attention.rows() / (2 * hidden()); }
};

struct AttentionOptions {
  double slope = 0.2;
  AttentionReduction reduction = AttentionReduction::sum;
  double dropout = 0.0;  // on the coefficients, training only
};

struct HeadTrace {
  Matrix query, key, value;  // N x H
  Matrix query_part;         // N x H: a_i^q^T q_i
  std::vector<double> pre_activation;  // N*N*H, masked pairs only
  Matrix scores;             // e_ij
  Matrix beta;               // softmax output
  Matrix beta_used;          // after dropout
  Matrix dropout_scale;      // empty when no dropout
  Matrix aggregate;          // sum_j beta_ij v_j
  Matrix merged_input;       // W^m [v_i || aggregate_i], pre-activation
};

namespace detail {

inline void check_head(const AttentionHead& head, std::size_t n) {
  const std::size_t h = head.hidden();
  if (head.w_query.cols() != h || head.w_key.rows() != h || head.w_key.cols() != h ||
      head.w_value.rows() != h || head.w_value.cols() != h || head.attention.cols() != h ||
      head.attention.rows() % (2 * h) != 0 || head.w_merge.rows() != h ||
      head.w_merge.cols() != 2 * h) {
    throw DimensionError("attention head parameter shapes inconsistent");
  }
  const std::size_t slots = head.slots();
  if (slots != 1 && slots != n) {
    throw DimensionError("attention tensor has " + std::to_string(slots) +
                         " node slots, graph has " + std::to_string(n) + " nodes");
  }
}

inline std::size_t slot_of(const AttentionHead& head, std::size_t i) {
  return head.slots() == 1 ? 0 : i;
}

// Row offset of the query/key blocks of slot s inside the attention tensor.
inline std::size_t query_block(const AttentionHead& head, std::size_t s) { return s * 2 * head.hidden(); }
inline std::size_t key_block(const AttentionHead& head, std::size_t s) {
  return s * 2 * head.hidden() + head.hidden();
}

inline Matrix project_rows(const Matrix& x, const Matrix& w) {
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) gemv(w, x.row(i), out.row(i));
  return out;
}

}  // namespace detail

// e_ij = R_ij * reduce_k LeakyReLU(a_i^T [W_q h_i || W_k h_j])_k, then a masked
// softmax per row. Returns beta (N x N), zero off-mask.
inline Matrix attention_coefficients(const Matrix& h, const RelationGraph& graph,
                                     const AttentionHead& head, const AttentionOptions& opt,
                                     HeadTrace* trace = nullptr) {
  const std::size_t n = h.rows();
  const std::size_t hid = head.hidden();
  if (graph.size() != n) {
    throw DimensionError("graph has " + std::to_string(graph.size()) + " nodes, embeddings have " +
                         std::to_string(n));
  }
  if (h.cols() != hid) throw DimensionError("embedding width differs from head width");
  detail::check_head(head, n);

  HeadTrace local;
  HeadTrace& tr = trace ? *trace : local;
  tr.query = detail::project_rows(h, head.w_query);
  tr.key = detail::project_rows(h, head.w_key);
  tr.query_part = Matrix(n, hid);
  tr.pre_activation.assign(n * n * hid, 0.0);
  tr.scores = Matrix(n, n);
  tr.beta = Matrix(n, n);

  const double scale = opt.reduction == AttentionReduction::mean ? 1.0 / static_cast<double>(hid) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = detail::slot_of(head, i);
    auto qp = tr.query_part.row(i);
    // a^q block: rows [qb, qb+H), u_k += sum_l a[l][k] q_l
    const std::size_t qb = detail::query_block(head, s);
    const std::size_t kb = detail::key_block(head, s);
    for (std::size_t l = 0; l < hid; ++l) {
      const auto arow = head.attention.row(qb + l);
      const double ql = tr.query(i, l);
      for (std::size_t k = 0; k < hid; ++k) qp[k] += arow[k] * ql;
    }
    const auto mrow = graph.mask_row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (!mrow[j]) continue;
      double* u = tr.pre_activation.data() + (i * n + j) * hid;
      std::copy(qp.begin(), qp.end(), u);
      for (std::size_t l = 0; l < hid; ++l) {
        const auto arow = head.attention.row(kb + l);
        const double kl = tr.key(j, l);
        for (std::size_t k = 0; k < hid; ++k) u[k] += arow[k] * kl;
      }
      double reduced = 0.0;
      for (std::size_t k = 0; k < hid; ++k) reduced += leaky_relu(u[k], opt.slope);
      tr.scores(i, j) = graph.weights(i, j) * reduced * scale;
    }
    const auto beta = masked_softmax(tr.scores.row(i), mrow);
    std::copy(beta.begin(), beta.end(), tr.beta.row(i).begin());
  }
  return tr.beta;
}

// Pre-activation of one head: W^m [W_v h_i || sum_j beta_ij W_v h_j].
inline Matrix attention_head_forward(const Matrix& h, const RelationGraph& graph,
                                     const AttentionHead& head, const AttentionOptions& opt,
                                     HeadTrace& tr, std::mt19937_64* rng = nullptr) {
  const std::size_t n = h.rows();
  const std::size_t hid = head.hidden();
  attention_coefficients(h, graph, head, opt, &tr);
  tr.value = detail::project_rows(h, head.w_value);
  tr.beta_used = tr.beta;
  tr.dropout_scale = Matrix();
  if (rng && opt.dropout > 0.0) {
    tr.dropout_scale = Matrix(n, n);
    std::bernoulli_distribution keep(1.0 - opt.dropout);
    const double inv = 1.0 / (1.0 - opt.dropout);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (!graph.edge(i, j)) continue;
        tr.dropout_scale(i, j) = keep(*rng) ? inv : 0.0;
        tr.beta_used(i, j) *= tr.dropout_scale(i, j);
      }
  }
  tr.aggregate = Matrix(n, hid);
  tr.merged_input = Matrix(n, hid);
  std::vector<double> cat(2 * hid);
  for (std::size_t i = 0; i < n; ++i) {
    auto agg = tr.aggregate.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (!graph.edge(i, j)) continue;
      const double b = tr.beta_used(i, j);
      const auto v = tr.value.row(j);
      for (std::size_t k = 0; k < hid; ++k) agg[k] += b * v[k];
    }
    const auto vi = tr.value.row(i);
    std::copy(vi.begin(), vi.end(), cat.begin());
    std::copy(agg.begin(), agg.end(), cat.begin() + static_cast<std::ptrdiff_t>(hid));
    gemv(head.w_merge, cat, tr.merged_input.row(i));
  }
  return tr.merged_input;
}

struct HeadGradients {
  Matrix& w_query;
  Matrix& w_key;
  Matrix& w_value;
  Matrix& attention;
  Matrix& w_merge;
};

// Accumulates parameter gradients and dL/dh given dL/d(merged_input).
inline void attention_head_backward(const Matrix& h, const RelationGraph& graph,
                                    const AttentionHead& head, const AttentionOptions& opt,
                                    const HeadTrace& tr, const Matrix& d_merged,
                                    HeadGradients grads, Matrix& d_h) {
  const std::size_t n = h.rows();
  const std::size_t hid = head.hidden();
  const double scale = opt.reduction == AttentionReduction::mean ? 1.0 / static_cast<double>(hid) : 1.0;
  Matrix d_query(n, hid), d_key(n, hid), d_value(n, hid);
  std::vector<double> cat(2 * hid), d_cat(2 * hid), d_beta(n), d_u(hid);

  for (std::size_t i = 0; i < n; ++i) {
    const auto dm = d_merged.row(i);
    const auto vi = tr.value.row(i);
    const auto agg = tr.aggregate.row(i);
    std::copy(vi.begin(), vi.end(), cat.begin());
    std::copy(agg.begin(), agg.end(), cat.begin() + static_cast<std::ptrdiff_t>(hid));
    outer_acc(grads.w_merge, dm, cat);
    std::fill(d_cat.begin(), d_cat.end(), 0.0);
    gemv_t_acc(head.w_merge, dm, d_cat);
    // Self value path.
    for (std::size_t k = 0; k < hid; ++k) d_value(i, k) += d_cat[k];
    // Aggregation path.
    const std::span<const double> d_agg(d_cat.data() + hid, hid);
    const auto mrow = graph.mask_row(i);
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      d_beta[j] = 0.0;
      if (!mrow[j]) continue;
      const auto vj = tr.value.row(j);
      const double bu = tr.beta_used(i, j);
      double dot = 0.0;
      for (std::size_t k = 0; k < hid; ++k) {
        d_value(j, k) += bu * d_agg[k];
        dot += d_agg[k] * vj[k];
      }
      d_beta[j] = tr.dropout_scale.empty() ? dot : dot * tr.dropout_scale(i, j);
      weighted += tr.beta(i, j) * d_beta[j];
    }
    // Softmax, score weighting, reduction, LeakyReLU, a_i.
    const std::size_t s = detail::slot_of(head, i);
    const std::size_t qb = detail::query_block(head, s);
    const std::size_t kb = detail::key_block(head, s);
    for (std::size_t j = 0; j < n; ++j) {
      if (!mrow[j]) continue;
      const double d_score = tr.beta(i, j) * (d_beta[j] - weighted);
      const double d_reduced = d_score * graph.weights(i, j) * scale;
      if (d_reduced == 0.0) continue;
      const double* u = tr.pre_activation.data() + (i * n + j) * hid;
      for (std::size_t k = 0; k < hid; ++k) d_u[k] = d_reduced * leaky_relu_grad(u[k], opt.slope);
      for (std::size_t l = 0; l < hid; ++l) {
        auto gq = grads.attention.row(qb + l);
        auto gk = grads.attention.row(kb + l);
        const auto aq = head.attention.row(qb + l);
        const auto ak = head.attention.row(kb + l);
        const double ql = tr.query(i, l), kl = tr.key(j, l);
        double dq = 0.0, dk = 0.0;
        for (std::size_t k = 0; k < hid; ++k) {
          gq[k] += ql * d_u[k];
          gk[k] += kl * d_u[k];
          dq += aq[k] * d_u[k];
          dk += ak[k] * d_u[k];
        }
        d_query(i, l) += dq;
        d_key(j, l) += dk;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto hi = h.row(i);
    outer_acc(grads.w_query, d_query.row(i), hi);
    outer_acc(grads.w_key, d_key.row(i), hi);
    outer_acc(grads.w_value, d_value.row(i), hi);
    auto dh = d_h.row(i);
    gemv_t_acc(head.w_query, d_query.row(i), dh);
    gemv_t_acc(head.w_key, d_key.row(i), dh);
    gemv_t_acc(head.w_value, d_value.row(i), dh);
  }
}

// Applies ELU per head and concatenates, or averages the pre-activations and
// applies ELU once.
inline Matrix merge_heads(const std::vector<Matrix>& pre, MergeMode mode) {
  if (pre.empty()) throw ConfigError("at least one attention head is required");
  const std::size_t n = pre.front().rows(), hid = pre.front().cols(), m = pre.size();
  if (mode == MergeMode::concat) {
    Matrix out(n, m * hid);
    for (std::size_t head = 0; head < m; ++head)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hid; ++k) out(i, head * hid + k) = elu(pre[head](i, k));
    return out;
  }
  Matrix out(n, hid);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < hid; ++k) {
      double s = 0.0;
      for (std::size_t head = 0; head < m; ++head) s += pre[head](i, k);
      out(i, k) = elu(s / static_cast<double>(m));
    }
  return out;
}

// Full multi-head layer. Heads with N attention slots give the node-level
// layer; heads with one slot give the shared-attention layer.
inline Matrix graph_attention_layer_forward(const Matrix& h, const RelationGraph& graph,
                                            const std::vector<AttentionHead>& heads,
                                            MergeMode mode, const AttentionOptions& opt = {},
                                            std::vector<Matrix>* betas = nullptr) {
  std::vector<Matrix> pre;
  for (const auto& head : heads) {
    HeadTrace tr;
    pre.push_back(attention_head_forward(h, graph, head, opt, tr));
    if (betas) betas->push_back(tr.beta);
  }
  return merge_heads(pre, mode);
}

inline Matrix ngat_layer_forward(const Matrix& h, const RelationGraph& graph,
                                 const std::vector<AttentionHead>& heads, MergeMode mode,
                                 const AttentionOptions& opt = {}) {
  for (const auto& head : heads)
    if (head.slots() != graph.size()) throw DimensionError("node-level attention needs one slot per node");
  return graph_attention_layer_forward(h, graph, heads, mode, opt);
}

inline Matrix gat_layer_forward(const Matrix& h, const RelationGraph& graph,
                                const std::vector<AttentionHead>& heads, MergeMode mode,
                                const AttentionOptions& opt = {}) {
  for (const auto& head : heads)
    if (head.slots() != 1) throw DimensionError("shared attention needs exactly one slot");
  return graph_attention_layer_forward(h, graph, heads, mode, opt);
}

// ===========================================================================
// GCN
// ===========================================================================

// D^{-1/2} A D^{-1/2} over the masked weights.
inline Matrix gcn_propagation(const RelationGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (graph.edge(i, j)) deg += graph.weights(i, j);
    if (!(deg > 0.0)) throw ContractViolation("gcn: node " + std::to_string(i) + " has zero degree");
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (graph.edge(i, j)) s(i, j) = inv_sqrt[i] * graph.weights(i, j) * inv_sqrt[j];
  return s;
}

// ELU(S h W) with W (H_in x H_out).
inline Matrix gcn_layer_forward(const Matrix& h, const RelationGraph& graph, const Matrix& weight) {
  Matrix pre = matmul(matmul(gcn_propagation(graph), h), weight);
  for (auto& v : pre.data()) v = elu(v);
  return pre;
}

// ===========================================================================
// Output layer and losses
// ===========================================================================

inline std::vector<double> output_forward(const Matrix& merged, const Matrix& w_out, Task task) {
  if (w_out.rows() != 1 || w_out.cols() != merged.cols()) {
    throw DimensionError("output weight " + w_out.shape_string() + " does not match embedding width " +
                         std::to_string(merged.cols()));
  }
  std::vector<double> y(merged.rows());
  for (std::size_t i = 0; i < merged.rows(); ++i) {
    double z = 0.0;
    const auto r = merged.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) z += w_out[k] * r[k];
    y[i] = task == Task::trend ? sigmoid(z) : z;
  }
  return y;
}

inline constexpr double kBceClamp = 1e-7;

// MSE for volatility, binary cross-entropy for trend; both averaged.
inline double loss(std::span<const double> predictions, std::span<const double> labels, Task task) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ContractViolation("loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (task == Task::volatility) {
      const double d = predictions[i] - labels[i];
      total += d * d;
    } else {
      const double p = std::clamp(predictions[i], kBceClamp, 1.0 - kBceClamp);
      total -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(predictions.size());
}

inline std::vector<double> loss_gradient(std::span<const double> predictions,
                                         std::span<const double> labels, Task task) {
  const double n = static_cast<double>(predictions.size());
  std::vector<double> g(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (task == Task::volatility) {
      g[i] = 2.0 * (predictions[i] - labels[i]) / n;
    } else {
      const double p = predictions[i];
      if (p < kBceClamp || p > 1.0 - kBceClamp) {
        g[i] = 0.0;
      } else {
        g[i] = -(labels[i] / p - (1.0 - labels[i]) / (1.0 - p)) / n;
      }
    }
  }
  return g;
}

// ===========================================================================
// Composed model
// ===========================================================================

struct ModelConfig {
  ModelKind kind = ModelKind::ngat;
  Task task = Task::trend;
  std::size_t nodes = 0;
  std::size_t features = 6;
  std::size_t hidden = 16;
  std::size_t heads = 1;
  MergeMode merge = MergeMode::concat;
  AttentionReduction reduction = AttentionReduction::sum;
  double dropout = 0.0;
  double slope = 0.2;
};

struct ModelOutput {
  std::vector<double> predictions;
  std::vector<Matrix> betas;  // one N x N per head (attention models)
  Matrix embeddings;          // LSTM output h
  Matrix merged;              // input to the output layer
};

class Model {
 public:
  Model() = default;

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate();
    std::mt19937_64 rng(seed);
    const std::size_t h = cfg_.hidden, f = cfg_.features;
    add("lstm.w_input", glorot_init(4 * h, f, rng));
    add("lstm.w_hidden", glorot_init(4 * h, h, rng));
    add("lstm.bias", Matrix(4 * h, 1));
    if (uses_attention(cfg_.kind)) {
      const std::size_t slots = cfg_.kind == ModelKind::ngat ? cfg_.nodes : 1;
      for (std::size_t m = 0; m < cfg_.heads; ++m) {
        const std::string p = head_prefix(m);
        add(p + "w_query", glorot_init(h, h, rng));
        add(p + "w_key", glorot_init(h, h, rng));
        add(p + "w_value", glorot_init(h, h, rng));
        Matrix a(slots * 2 * h, h);
        for (std::size_t s = 0; s < slots; ++s) {
          const Matrix block = glorot_init(2 * h, h, rng);
          std::copy(block.data().begin(), block.data().end(),
                    a.data().begin() + static_cast<std::ptrdiff_t>(s * 2 * h * h));
        }
        add(p + "attention", std::move(a));
        add(p + "w_merge", glorot_init(h, 2 * h, rng));
      }
    }
    if (uses_gcn(cfg_.kind)) add("gcn.weight", glorot_init(h, h, rng));
    add("output.weight", glorot_init(1, output_width(), rng));
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  Parameter& parameter(const std::string& name) { return params_[index_of(name)]; }
  const Parameter& parameter(const std::string& name) const { return params_[index_of(name)]; }

  std::size_t output_width() const {
    switch (cfg_.kind) {
      case ModelKind::lstm:
      case ModelKind::gcn: return cfg_.hidden;
      case ModelKind::lstm_gcn: return 2 * cfg_.hidden;
      case ModelKind::gat:
      case ModelKind::ngat:
        return cfg_.merge == MergeMode::concat ? cfg_.heads * cfg_.hidden : cfg_.hidden;
    }
    return cfg_.hidden;
  }

  static std::string head_prefix(std::size_t m) { return "head" + std::to_string(m) + "."; }

  AttentionHead head(std::size_t m) const {
    const std::string p = head_prefix(m);
    return AttentionHead{parameter(p + "w_query").value, parameter(p + "w_key").value,
                         parameter(p + "w_value").value, parameter(p + "attention").value,
                         parameter(p + "w_merge").value};
  }

  // Everything backward() needs from a forward pass.
  struct Cache {
    std::vector<Matrix> windows;
    RelationGraph graph;
    LstmTrace lstm;
    Matrix embeddings_raw;
    Matrix embedding_dropout;  // empty when inactive
    Matrix embeddings;
    std::vector<HeadTrace> heads;
    Matrix propagated;  // S h for GCN kinds
    Matrix gcn_pre;
    Matrix merged;
    std::vector<double> predictions;
  };

  // `rng` enables dropout (training). Pass nullptr for evaluation.
  ModelOutput forward(std::span<const Matrix> windows, const RelationGraph& graph,
                      Cache* cache = nullptr, std::mt19937_64* rng = nullptr) const {
    const std::size_t n = cfg_.nodes;
    if (windows.size() != n || graph.size() != n) {
      throw DimensionError("model built for " + std::to_string(n) + " nodes, got " +
                           std::to_string(windows.size()) + " windows and a " +
                           std::to_string(graph.size()) + "-node graph");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    const bool train = rng != nullptr && cfg_.dropout > 0.0;
    if (cache) {
      c.windows.assign(windows.begin(), windows.end());
      c.graph = graph;
    }
    c.embeddings_raw = lstm_forward(windows, value("lstm.w_input"), value("lstm.w_hidden"),
                                    value("lstm.bias"), cache ? &c.lstm : nullptr);
    c.embeddings = c.embeddings_raw;
    c.embedding_dropout = Matrix();
    if (train) {
      c.embedding_dropout = Matrix(n, cfg_.hidden);
      std::bernoulli_distribution keep(1.0 - cfg_.dropout);
      const double inv = 1.0 / (1.0 - cfg_.dropout);
      for (std::size_t k = 0; k < c.embeddings.size(); ++k) {
        c.embedding_dropout[k] = keep(*rng) ? inv : 0.0;
        c.embeddings[k] *= c.embedding_dropout[k];
      }
    }

    ModelOutput out;
    const Matrix& h = c.embeddings;
    switch (cfg_.kind) {
      case ModelKind::lstm:
        c.merged = h;
        break;
      case ModelKind::gcn:
      case ModelKind::lstm_gcn: {
        c.propagated = matmul(gcn_propagation(graph), h);
        c.gcn_pre = matmul(c.propagated, value("gcn.weight"));
        if (cfg_.kind == ModelKind::gcn) {
          c.merged = c.gcn_pre;
          for (auto& v : c.merged.data()) v = elu(v);
        } else {
          c.merged = Matrix(n, 2 * cfg_.hidden);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < cfg_.hidden; ++k) {
              c.merged(i, k) = h(i, k);
              c.merged(i, cfg_.hidden + k) = elu(c.gcn_pre(i, k));
            }
        }
        break;
      }
      case ModelKind::gat:
      case ModelKind::ngat: {
        const AttentionOptions opt = attention_options(train);
        c.heads.assign(cfg_.heads, HeadTrace{});
        std::vector<Matrix> pre;
        for (std::size_t m = 0; m < cfg_.heads; ++m) {
          pre.push_back(attention_head_forward(h, graph, head(m), opt, c.heads[m], train ? rng : nullptr));
          out.betas.push_back(c.heads[m].beta);
        }
        c.merged = merge_heads(pre, cfg_.merge);
        break;
      }
    }
    c.predictions = output_forward(c.merged, value("output.weight"), cfg_.task);
    out.predictions = c.predictions;
    out.embeddings = c.embeddings_raw;
    out.merged = c.merged;
    return out;
  }

  // Accumulates into each Parameter::gradient given dL/d(prediction).
  void backward(const Cache& c, std::span<const double> d_pred) {
    const std::size_t n = cfg_.nodes, hid = cfg_.hidden;
    if (d_pred.size() != n) throw DimensionError("backward: gradient length differs from node count");
    // Output layer.
    const Matrix& w_out = value("output.weight");
    Matrix& g_out = grad("output.weight");
    Matrix d_merged(n, c.merged.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const double y = c.predictions[i];
      const double dz = cfg_.task == Task::trend ? d_pred[i] * y * (1.0 - y) : d_pred[i];
      const auto r = c.merged.row(i);
      for (std::size_t k = 0; k < r.size(); ++k) {
        g_out[k] += dz * r[k];
        d_merged(i, k) = dz * w_out[k];
      }
    }

    Matrix d_h(n, hid);
    switch (cfg_.kind) {
      case ModelKind::lstm:
        d_h = d_merged;
        break;
      case ModelKind::gcn:
      case ModelKind::lstm_gcn: {
        const std::size_t off = cfg_.kind == ModelKind::gcn ? 0 : hid;
        Matrix d_pre(n, hid);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < hid; ++k) {
            d_pre(i, k) = d_merged(i, off + k) * elu_grad(c.gcn_pre(i, k));
            if (off) d_h(i, k) += d_merged(i, k);
          }
        Matrix& g_w = grad("gcn.weight");
        const Matrix gw = matmul(transpose(c.propagated), d_pre);
        for (std::size_t k = 0; k < gw.size(); ++k) g_w[k] += gw[k];
        // d(S h) = d_pre W^T ; d h += S^T d(S h)
        const Matrix d_prop = matmul(d_pre, transpose(value("gcn.weight")));
        const Matrix d_from = matmul(transpose(gcn_propagation(c.graph)), d_prop);
        for (std::size_t k = 0; k < d_h.size(); ++k) d_h[k] += d_from[k];
        break;
      }
      case ModelKind::gat:
      case ModelKind::ngat: {
        const std::size_t m_heads = cfg_.heads;
        const AttentionOptions opt = attention_options(false);
        std::vector<Matrix> d_pre(m_heads, Matrix(n, hid));
        if (cfg_.merge == MergeMode::concat) {
          for (std::size_t m = 0; m < m_heads; ++m)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t k = 0; k < hid; ++k)
                d_pre[m](i, k) = d_merged(i, m * hid + k) * elu_grad(c.heads[m].merged_input(i, k));
        } else {
          const double inv_m = 1.0 / static_cast<double>(m_heads);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hid; ++k) {
              double s = 0.0;
              for (std::size_t m = 0; m < m_heads; ++m) s += c.heads[m].merged_input(i, k);
              const double dz = d_merged(i, k) * elu_grad(s * inv_m) * inv_m;
              for (std::size_t m = 0; m < m_heads; ++m) d_pre[m](i, k) = dz;
            }
        }
        for (std::size_t m = 0; m < m_heads; ++m) {
          const std::string p = head_prefix(m);
          HeadGradients g{grad(p + "w_query"), grad(p + "w_key"), grad(p + "w_value"),
                          grad(p + "attention"), grad(p + "w_merge")};
          attention_head_backward(c.embeddings, c.graph, head(m), opt, c.heads[m], d_pre[m], g, d_h);
        }
        break;
      }
    }
    if (!c.embedding_dropout.empty())
      for (std::size_t k = 0; k < d_h.size(); ++k) d_h[k] *= c.embedding_dropout[k];
    lstm_backward(c.windows, value("lstm.w_hidden"), c.lstm, d_h, grad("lstm.w_input"),
                  grad("lstm.w_hidden"), grad("lstm.bias"));
    for (const auto& p : params_) {
      if (!p.gradient.all_finite()) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  // Forward, loss, backward on one day. Returns the loss.
  double accumulate_gradients(std::span<const Matrix> windows, const RelationGraph& graph,
                              std::span<const double> labels, std::mt19937_64* rng = nullptr,
                              double loss_scale = 1.0) {
    Cache c;
    const auto out = forward(windows, graph, &c, rng);
    const double l = loss(out.predictions, labels, cfg_.task);
    auto g = loss_gradient(out.predictions, labels, cfg_.task);
    for (auto& v : g) v *= loss_scale;
    backward(c, g);
    return l * loss_scale;
  }

  double evaluate_loss(std::span<const Matrix> windows, const RelationGraph& graph,
                       std::span<const double> labels) const {
    return loss(forward(windows, graph).predictions, labels, cfg_.task);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Replaces a parameter's value; shape must match.
  void set_value(const std::string& name, Matrix v) {
    Parameter& p = parameter(name);
    if (!p.value.same_shape(v)) {
      throw DimensionError("parameter '" + name + "' expects " + p.value.shape_string() + ", got " +
                           v.shape_string());
    }
    p.value = std::move(v);
  }

 private:
  void validate() const {
    if (cfg_.nodes == 0) throw ConfigError("model needs at least one node");
    if (cfg_.features == 0 || cfg_.hidden == 0) throw ConfigError("feature and hidden sizes must be >= 1");
    if (uses_attention(cfg_.kind) && cfg_.heads == 0) throw ConfigError("heads must be >= 1");
    if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (cfg_.slope < 0.0) throw ConfigError("LeakyReLU slope must be >= 0");
  }

  void add(std::string name, Matrix v) { params_.emplace_back(std::move(name), std::move(v)); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw std::out_of_range("no parameter named '" + name + "'");
  }

  const Matrix& value(const std::string& name) const { return params_[index_of(name)].value; }
  Matrix& grad(const std::string& name) { return params_[index_of(name)].gradient; }

  AttentionOptions attention_options(bool train) const {
    return AttentionOptions{cfg_.slope, cfg_.reduction, train ? cfg_.dropout : 0.0};
  }

  ModelConfig cfg_;
  std::vector<Parameter> params_;
};

}  // namespace ngat
