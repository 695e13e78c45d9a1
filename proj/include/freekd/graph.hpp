#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "freekd/tensor.hpp"

namespace freekd {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Undirected graph with features, labels and train/val/test masks.
// Edges are stored once with src < dst; neighbor lists are symmetric and
// self-loop free. Immutable after construction.
struct Graph {
  int num_nodes = 0;
  int feature_dim = 0;
  int num_classes = 0;
  Tensor features;                         // N x d
  std::vector<int> labels;                 // N entries in [0, C)
  std::vector<std::pair<int, int>> edges;  // deduplicated, src < dst
  std::vector<std::vector<int>> neighbors;
  std::vector<int> train_mask;             // sorted node ids, disjoint sets
  std::vector<int> val_mask;
  std::vector<int> test_mask;

  int num_edges() const { return static_cast<int>(edges.size()); }
};

struct SbmParams {
  int nodes_per_block = 0;
  int num_blocks = 0;
  double p_in = 0.0;
  double p_out = 0.0;
  int feature_dim = 0;
  double feature_noise = 0.0;
  uint64_t seed = 0;
  double train_frac = 0.6;
  double val_frac = 0.2;
};

// Builds a Graph from an edge list plus per-node data. Drops self-loops and
// duplicate edges, validates labels and mask disjointness.
Graph build_graph(int num_nodes, Tensor features, std::vector<int> labels,
                  const std::vector<std::pair<int, int>>& raw_edges,
                  std::vector<int> train_mask, std::vector<int> val_mask,
                  std::vector<int> test_mask);

// Directory layout: nodes.tsv, edges.tsv, labels.tsv, splits/{train,val,test}.txt
Graph load_dataset(const std::filesystem::path& dir);
void save_dataset(const Graph& g, const std::filesystem::path& dir);

Graph generate_sbm(const SbmParams& params);

// D~^(-1/2) (A + I) D~^(-1/2)
CsrMatrix normalized_adjacency(const Graph& g);

// Row-normalized adjacency without self-loops (neighbor mean); isolated nodes
// get an all-zero row.
CsrMatrix mean_aggregation(const Graph& g);

void row_normalize_features(Graph& g);

}  // namespace freekd
