#include "freekd/models.hpp"

#include <cmath>
#include <stdexcept>

namespace freekd {

Arch arch_from_string(const std::string& s) {
  if (s == "gcn") return Arch::gcn;
  if (s == "sage") return Arch::sage;
  if (s == "gat") return Arch::gat;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::gcn: return "gcn";
    case Arch::sage: return "sage";
    case Arch::gat: return "gat";
  }
  return "?";
}

namespace {

Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data) v = u(rng);
  return t;
}

std::vector<int> layer_dims(const GnnModel& m) {
  std::vector<int> dims{m.in_dim};
  for (int l = 0; l < m.layers - 1; ++l) dims.push_back(m.hidden);
  dims.push_back(m.out_dim);
  return dims;
}

}  // namespace

GnnModel make_model(Arch arch, int in_dim, int num_classes, int layers, int hidden, int heads,
                    double dropout, std::mt19937_64& rng) {
  if (layers < 1) throw std::invalid_argument("make_model: need at least one layer");
  GnnModel m;
  m.arch = arch;
  m.layers = layers;
  m.hidden = hidden;
  m.heads = heads;
  m.in_dim = in_dim;
  m.out_dim = num_classes;
  m.dropout = dropout;
  const auto dims = layer_dims(m);
  switch (arch) {
    case Arch::gcn:
      for (int l = 0; l < layers; ++l) m.params.push_back(glorot(dims[l], dims[l + 1], rng));
      break;
    case Arch::sage:
      for (int l = 0; l < layers; ++l) m.params.push_back(glorot(2 * dims[l], dims[l + 1], rng));
      break;
    case Arch::gat: {
      if (hidden % heads != 0) throw std::invalid_argument("make_model: heads must divide hidden dim");
      for (int l = 0; l < layers; ++l) {
        // Hidden layers concatenate heads (per-head dim = hidden/heads);
        // the output layer averages full-width heads.
        const bool last = l == layers - 1;
        const int head_dim = last ? dims[l + 1] : dims[l + 1] / heads;
        for (int h = 0; h < heads; ++h) {
          m.params.push_back(glorot(dims[l], head_dim, rng));
          m.params.push_back(glorot(head_dim, 1, rng));
          m.params.push_back(glorot(head_dim, 1, rng));
        }
      }
      break;
    }
  }
  return m;
}

GraphOps make_graph_ops(const Graph& g, bool need_gat_mask) {
  GraphOps ops;
  ops.norm_adj = normalized_adjacency(g);
  ops.mean_agg = mean_aggregation(g);
  if (need_gat_mask) {
    ops.gat_mask = Tensor(g.num_nodes, g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) {
      ops.gat_mask.at(i, i) = 1.0;
      for (int j : g.neighbors[static_cast<size_t>(i)]) ops.gat_mask.at(i, j) = 1.0;
    }
  }
  return ops;
}

Forward model_forward(Tape& tape, const Graph& g, const GraphOps& ops, const GnnModel& model,
                      std::vector<Var>& pvars, bool train_mode, std::mt19937_64& rng) {
  const size_t pvars_base = pvars.size();
  for (const Tensor& p : model.params) pvars.push_back(tape.leaf(p, true));
  auto pv = [&](size_t k) { return pvars[pvars_base + k]; };

  Var h = tape.constant(g.features);
  Var hidden{};
  size_t pk = 0;
  for (int l = 0; l < model.layers; ++l) {
    const bool last = l == model.layers - 1;
    Var x = tape.dropout(h, model.dropout, train_mode, rng);
    Var z{};
    switch (model.arch) {
      case Arch::gcn:
        z = tape.spmm(ops.norm_adj, tape.matmul(x, pv(pk++)));
        if (!last) z = tape.relu(z);
        break;
      case Arch::sage: {
        Var agg = tape.spmm(ops.mean_agg, x);
        z = tape.matmul(tape.concat_cols(x, agg), pv(pk++));
        if (!last) z = tape.relu(z);
        break;
      }
      case Arch::gat: {
        Var acc{};
        for (int head = 0; head < model.heads; ++head) {
          Var w = pv(pk++);
          Var a_src = pv(pk++);
          Var a_dst = pv(pk++);
          Var zh = tape.matmul(x, w);
          Var e = tape.outer_sum(tape.matmul(zh, a_src), tape.matmul(zh, a_dst));
          Var att = tape.masked_row_softmax(tape.leaky_relu(e, 0.2), ops.gat_mask);
          att = tape.dropout(att, model.attn_dropout, train_mode, rng);
          Var oh = tape.matmul(att, zh);
          if (last) {
            acc = acc.valid() ? tape.add(acc, oh) : oh;
          } else {
            acc = acc.valid() ? tape.concat_cols(acc, oh) : oh;
          }
        }
        z = last ? tape.scale(acc, 1.0 / model.heads) : tape.elu(acc);
        break;
      }
    }
    h = z;
    if (l == model.layers - 2) hidden = h;
  }
  if (!hidden.valid()) hidden = h;  // single-layer model

  Forward f;
  f.hidden = hidden;
  f.logits = h;
  f.probs = tape.row_softmax(h);
  return f;
}

Var per_node_ce(Tape& tape, Var probs, const std::vector<int>& labels, const std::vector<int>& nodes) {
  std::vector<int> ys;
  ys.reserve(nodes.size());
  for (int i : nodes) {
    if (i < 0 || i >= static_cast<int>(labels.size()) || labels[static_cast<size_t>(i)] < 0)
      throw std::invalid_argument("per_node_ce: node without label");
    ys.push_back(labels[static_cast<size_t>(i)]);
  }
  Var picked = tape.row_pick(tape.gather_rows(probs, nodes), ys);
  return tape.scale(tape.log_clamped(picked), -1.0);
}

EvalResult evaluate_model(const Graph& g, const GraphOps& ops, const GnnModel& model) {
  Tape tape;
  std::vector<Var> pvars;
  std::mt19937_64 dummy(0);
  GnnModel frozen = model;
  Forward f = model_forward(tape, g, ops, frozen, pvars, /*train_mode=*/false, dummy);
  EvalResult r;
  r.hidden = tape.value(f.hidden);
  r.logits = tape.value(f.logits);
  r.probs = tape.value(f.probs);
  return r;
}

std::vector<int> predict_labels(const Tensor& logits) {
  std::vector<int> out(static_cast<size_t>(logits.rows));
  for (int i = 0; i < logits.rows; ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace freekd
