#pragma once

#include <random>
#include <string>
#include <vector>

#include "freekd/graph.hpp"
#include "freekd/tape.hpp"

namespace freekd {

enum class Arch { gcn, sage, gat };

Arch arch_from_string(const std::string& s);
std::string arch_name(Arch a);

// Parameter set for one basic network. The params vector layout is fixed per
// architecture:
//   gcn:  W_0 .. W_{L-1}
//   sage: W_0 .. W_{L-1}            (each W_l is 2*d_in x d_out)
//   gat:  per layer, per head: W, a_src, a_dst
struct GnnModel {
  Arch arch = Arch::gcn;
  int layers = 2;
  int hidden = 64;
  int heads = 8;
  int in_dim = 0;
  int out_dim = 0;
  double dropout = 0.5;
  double attn_dropout = 0.5;
  std::vector<Tensor> params;
};

GnnModel make_model(Arch arch, int in_dim, int num_classes, int layers, int hidden, int heads,
                    double dropout, std::mt19937_64& rng);

// Adjacency-derived operators shared by all forward passes over one graph.
struct GraphOps {
  CsrMatrix norm_adj;
  CsrMatrix mean_agg;
  Tensor gat_mask;  // N x N, 1 where j in N(i) or j == i; empty unless built
};

GraphOps make_graph_ops(const Graph& g, bool need_gat_mask);

struct Forward {
  Var hidden;  // penultimate-layer embeddings h_i, N x hidden
  Var logits;  // N x C
  Var probs;   // row softmax of logits
};

// Runs the forward pass on the given tape; param leaf vars are appended to
// pvars in params order so callers can read gradients after backward.
Forward model_forward(Tape& tape, const Graph& g, const GraphOps& ops, const GnnModel& model,
                      std::vector<Var>& pvars, bool train_mode, std::mt19937_64& rng);

// L_CE(i) = -log p_i[y_i] for each node in `nodes`, as a |nodes| x 1 var.
Var per_node_ce(Tape& tape, Var probs, const std::vector<int>& labels, const std::vector<int>& nodes);

// Gradient-free forward in eval mode.
struct EvalResult {
  Tensor hidden;
  Tensor logits;
  Tensor probs;
};
EvalResult evaluate_model(const Graph& g, const GraphOps& ops, const GnnModel& model);

std::vector<int> predict_labels(const Tensor& logits);

}  // namespace freekd
