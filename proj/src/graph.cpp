#include "freekd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace freekd {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, '\t')) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& ctx) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DatasetError("non-numeric value '" + s + "' in " + ctx);
  }
}

int parse_int(const std::string& s, const std::string& ctx) {
  try {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw DatasetError("non-integer value '" + s + "' in " + ctx);
  }
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DatasetError("missing file: " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void check_disjoint(const std::vector<int>& a, const std::vector<int>& b, const char* what) {
  std::set<int> sa(a.begin(), a.end());
  for (int x : b)
    if (sa.count(x)) throw DatasetError(std::string("splits not disjoint: node ") + std::to_string(x) + " in " + what);
}

}  // namespace

Graph build_graph(int num_nodes, Tensor features, std::vector<int> labels,
                  const std::vector<std::pair<int, int>>& raw_edges,
                  std::vector<int> train_mask, std::vector<int> val_mask,
                  std::vector<int> test_mask) {
  Graph g;
  g.num_nodes = num_nodes;
  g.feature_dim = features.cols;
  if (features.rows != num_nodes) throw DatasetError("feature row count != num_nodes");
  if (static_cast<int>(labels.size()) != num_nodes) throw DatasetError("label count != num_nodes");
  g.features = std::move(features);
  g.labels = std::move(labels);

  int max_label = -1;
  for (int y : g.labels) {
    if (y < 0) throw DatasetError("negative label");
    max_label = std::max(max_label, y);
  }
  g.num_classes = max_label + 1;

  std::set<std::pair<int, int>> edge_set;
  for (auto [a, b] : raw_edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      throw DatasetError("edge references unknown node id " + std::to_string(std::max(a, b)));
    if (a == b) continue;  // self-loops stripped at load
    edge_set.insert({std::min(a, b), std::max(a, b)});
  }
  g.edges.assign(edge_set.begin(), edge_set.end());
  g.neighbors.assign(static_cast<size_t>(num_nodes), {});
  for (auto [a, b] : g.edges) {
    g.neighbors[static_cast<size_t>(a)].push_back(b);
    g.neighbors[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());

  auto check_mask = [num_nodes](std::vector<int>& m, const char* name) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    for (int x : m)
      if (x < 0 || x >= num_nodes)
        throw DatasetError(std::string(name) + " split references unknown node id " + std::to_string(x));
  };
  check_mask(train_mask, "train");
  check_mask(val_mask, "val");
  check_mask(test_mask, "test");
  check_disjoint(train_mask, val_mask, "both train and val");
  check_disjoint(train_mask, test_mask, "both train and test");
  check_disjoint(val_mask, test_mask, "both val and test");
  g.train_mask = std::move(train_mask);
  g.val_mask = std::move(val_mask);
  g.test_mask = std::move(test_mask);
  return g;
}

Graph load_dataset(const fs::path& dir) {
  const auto node_lines = read_lines(dir / "nodes.tsv");
  std::map<int, int> id_map;  // file id -> dense id, in file order
  std::vector<std::vector<double>> feats;
  int dim = -1;
  for (size_t li = 0; li < node_lines.size(); ++li) {
    if (node_lines[li].empty()) continue;
    auto parts = split_tabs(node_lines[li]);
    const std::string ctx = "nodes.tsv line " + std::to_string(li + 1);
    if (parts.size() < 2) throw DatasetError(ctx + ": expected id and features");
    int fid = parse_int(parts[0], ctx);
    if (id_map.count(fid)) throw DatasetError(ctx + ": duplicate node id " + std::to_string(fid));
    std::vector<double> f;
    for (size_t j = 1; j < parts.size(); ++j) f.push_back(parse_double(parts[j], ctx));
    if (dim < 0) dim = static_cast<int>(f.size());
    if (static_cast<int>(f.size()) != dim) throw DatasetError(ctx + ": inconsistent feature dimension");
    id_map[fid] = static_cast<int>(feats.size());
    feats.push_back(std::move(f));
  }
  const int n = static_cast<int>(feats.size());
  if (n == 0) throw DatasetError("nodes.tsv is empty");

  Tensor X(n, dim);
  {
    int r = 0;
    for (const auto& line : node_lines) {
      if (line.empty()) continue;
      auto parts = split_tabs(line);
      for (int j = 0; j < dim; ++j) X.at(r, j) = parse_double(parts[static_cast<size_t>(j) + 1], "nodes.tsv");
      ++r;
    }
  }

  auto lookup = [&id_map](int fid, const std::string& ctx) {
    auto it = id_map.find(fid);
    if (it == id_map.end())
      throw DatasetError(ctx + ": node id " + std::to_string(fid) + " absent from nodes.tsv");
    return it->second;
  };

  std::vector<std::pair<int, int>> raw_edges;
  const auto edge_lines = read_lines(dir / "edges.tsv");
  for (size_t li = 0; li < edge_lines.size(); ++li) {
    if (edge_lines[li].empty()) continue;
    auto parts = split_tabs(edge_lines[li]);
    const std::string ctx = "edges.tsv line " + std::to_string(li + 1);
    if (parts.size() != 2) throw DatasetError(ctx + ": expected src<TAB>dst");
    raw_edges.emplace_back(lookup(parse_int(parts[0], ctx), ctx), lookup(parse_int(parts[1], ctx), ctx));
  }

  std::vector<int> labels(static_cast<size_t>(n), -1);
  const auto label_lines = read_lines(dir / "labels.tsv");
  for (size_t li = 0; li < label_lines.size(); ++li) {
    if (label_lines[li].empty()) continue;
    auto parts = split_tabs(label_lines[li]);
    const std::string ctx = "labels.tsv line " + std::to_string(li + 1);
    if (parts.size() != 2) throw DatasetError(ctx + ": expected id<TAB>label");
    int id = lookup(parse_int(parts[0], ctx), ctx);
    int y = parse_int(parts[1], ctx);
    if (y < 0) throw DatasetError(ctx + ": label out of range");
    labels[static_cast<size_t>(id)] = y;
  }
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0) throw DatasetError("labels.tsv: no label for node index " + std::to_string(i));

  auto read_split = [&](const char* name) {
    std::vector<int> ids;
    const auto lines = read_lines(dir / "splits" / name);
    for (size_t li = 0; li < lines.size(); ++li) {
      if (lines[li].empty()) continue;
      const std::string ctx = std::string("splits/") + name + " line " + std::to_string(li + 1);
      ids.push_back(lookup(parse_int(lines[li], ctx), ctx));
    }
    return ids;
  };

  return build_graph(n, std::move(X), std::move(labels), raw_edges,
                     read_split("train.txt"), read_split("val.txt"), read_split("test.txt"));
}

void save_dataset(const Graph& g, const fs::path& dir) {
  fs::create_directories(dir / "splits");
  {
    std::ofstream out(dir / "nodes.tsv");
    out.precision(17);
    for (int i = 0; i < g.num_nodes; ++i) {
      out << i;
      for (int j = 0; j < g.feature_dim; ++j) out << '\t' << g.features.at(i, j);
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (auto [a, b] : g.edges) out << a << '\t' << b << '\n';
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (int i = 0; i < g.num_nodes; ++i) out << i << '\t' << g.labels[static_cast<size_t>(i)] << '\n';
  }
  auto write_split = [&](const char* name, const std::vector<int>& ids) {
    std::ofstream out(dir / "splits" / name);
    for (int id : ids) out << id << '\n';
  };
  write_split("train.txt", g.train_mask);
  write_split("val.txt", g.val_mask);
  write_split("test.txt", g.test_mask);
}

Graph generate_sbm(const SbmParams& p) {
  if (p.nodes_per_block <= 0 || p.num_blocks <= 0) throw std::invalid_argument("generate_sbm: empty blocks");
  if (p.p_in < 0 || p.p_in > 1 || p.p_out < 0 || p.p_out > 1)
    throw std::invalid_argument("generate_sbm: probabilities must be in [0,1]");
  if (p.feature_dim < p.num_blocks) throw std::invalid_argument("generate_sbm: feature_dim < num_blocks");
  const int n = p.nodes_per_block * p.num_blocks;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<int> block(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) block[static_cast<size_t>(i)] = i / p.nodes_per_block;

  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double prob = block[static_cast<size_t>(i)] == block[static_cast<size_t>(j)] ? p.p_in : p.p_out;
      if (u(rng) < prob) edges.emplace_back(i, j);
    }

  // One-hot block centroid plus Gaussian noise.
  Tensor X(n, p.feature_dim);
  for (int i = 0; i < n; ++i) {
    X.at(i, block[static_cast<size_t>(i)]) = 1.0;
    for (int j = 0; j < p.feature_dim; ++j) X.at(i, j) += p.feature_noise * gauss(rng);
  }

  // Stratified split: within each block, shuffle then cut by fractions.
  std::vector<int> train, val, test;
  for (int b = 0; b < p.num_blocks; ++b) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i)
      if (block[static_cast<size_t>(i)] == b) ids.push_back(i);
    std::shuffle(ids.begin(), ids.end(), rng);
    const int ntr = static_cast<int>(std::floor(p.train_frac * ids.size()));
    const int nva = static_cast<int>(std::floor(p.val_frac * ids.size()));
    for (size_t k = 0; k < ids.size(); ++k) {
      if (static_cast<int>(k) < ntr) train.push_back(ids[k]);
      else if (static_cast<int>(k) < ntr + nva) val.push_back(ids[k]);
      else test.push_back(ids[k]);
    }
  }

  return build_graph(n, std::move(X), std::move(block), edges, std::move(train), std::move(val), std::move(test));
}

CsrMatrix normalized_adjacency(const Graph& g) {
  const int n = g.num_nodes;
  std::vector<double> deg(static_cast<size_t>(n), 1.0);  // self-loop counts 1
  for (auto [a, b] : g.edges) {
    deg[static_cast<size_t>(a)] += 1.0;
    deg[static_cast<size_t>(b)] += 1.0;
  }
  CsrMatrix m;
  m.rows = n;
  m.cols = n;
  m.indptr.push_back(0);
  for (int i = 0; i < n; ++i) {
    const double di = 1.0 / std::sqrt(deg[static_cast<size_t>(i)]);
    // neighbors are sorted; insert the self entry in order
    bool self_done = false;
    auto emit = [&](int j) {
      m.indices.push_back(j);
      m.values.push_back(di / std::sqrt(deg[static_cast<size_t>(j)]));
    };
    for (int j : g.neighbors[static_cast<size_t>(i)]) {
      if (!self_done && i < j) {
        emit(i);
        self_done = true;
      }
      emit(j);
    }
    if (!self_done) emit(i);
    m.indptr.push_back(static_cast<int>(m.indices.size()));
  }
  return m;
}

CsrMatrix mean_aggregation(const Graph& g) {
  CsrMatrix m;
  m.rows = g.num_nodes;
  m.cols = g.num_nodes;
  m.indptr.push_back(0);
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& nb = g.neighbors[static_cast<size_t>(i)];
    if (!nb.empty()) {
      const double w = 1.0 / static_cast<double>(nb.size());
      for (int j : nb) {
        m.indices.push_back(j);
        m.values.push_back(w);
      }
    }
    m.indptr.push_back(static_cast<int>(m.indices.size()));
  }
  return m;
}

void row_normalize_features(Graph& g) {
  for (int i = 0; i < g.num_nodes; ++i) {
    double s = 0.0;
    for (int j = 0; j < g.feature_dim; ++j) s += std::abs(g.features.at(i, j));
    if (s > 0.0)
      for (int j = 0; j < g.feature_dim; ++j) g.features.at(i, j) /= s;
  }
}

}  // namespace freekd
