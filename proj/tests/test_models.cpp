#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "freekd/models.hpp"
#include "test_support.hpp"

using namespace freekd;
using freekd::testing::random_tensor;

namespace {

Graph path2_graph() {
  // Single edge 0-1, 2 features, 2 classes.
  return build_graph(2, Tensor::from(2, 2, {1.0, 2.0, 3.0, -1.0}), {0, 1}, {{0, 1}}, {0}, {1}, {});
}

Graph small_sbm(uint64_t seed) {
  SbmParams p;
  p.nodes_per_block = 6;
  p.num_blocks = 2;
  p.p_in = 0.5;
  p.p_out = 0.1;
  p.feature_dim = 3;
  p.feature_noise = 0.5;
  p.seed = seed;
  return generate_sbm(p);
}

EvalResult eval_with(const Graph& g, const GnnModel& m) {
  return evaluate_model(g, make_graph_ops(g, m.arch == Arch::gat), m);
}

}  // namespace

TEST_CASE("gcn on an isolated node with identity weights computes relu(x)") {
  Graph g = build_graph(1, Tensor::from(1, 2, {2.0, -3.0}), {0}, {}, {0}, {}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::gcn, 2, 2, 2, 2, 1, 0.0, rng);
  m.params[0] = Tensor::identity(2);
  m.params[1] = Tensor::identity(2);
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(2.0));
  CHECK(r.logits.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("all-zero output weights give uniform soft labels for every arch") {
  Graph g = small_sbm(3);
  for (Arch arch : {Arch::gcn, Arch::sage, Arch::gat}) {
    std::mt19937_64 rng(1);
    GnnModel m = make_model(arch, g.feature_dim, g.num_classes, 2, 4, 2, 0.0, rng);
    if (arch == Arch::gat) {
      // Output layer params are the last heads*(W, a_src, a_dst) triple block.
      for (size_t k = m.params.size() - 3u * static_cast<size_t>(m.heads); k < m.params.size(); ++k)
        for (double& v : m.params[k].data) v = 0.0;
    } else {
      for (double& v : m.params.back().data) v = 0.0;
    }
    EvalResult r = eval_with(g, m);
    const double u = 1.0 / g.num_classes;
    for (double p : r.probs.data) CHECK(p == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("one-layer gcn on a single edge matches the hand oracle") {
  // A~ = [[.5,.5],[.5,.5]], W = [[1,0],[0,2]].
  // logits = A~ X W with X = [[1,2],[3,-1]]:
  //   A~ X = [[2, .5], [2, .5]]; logits = [[2, 1], [2, 1]].
  Graph g = path2_graph();
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::gcn, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::from(2, 2, {1.0, 0.0, 0.0, 2.0});
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(2.0));
  CHECK(r.logits.at(0, 1) == doctest::Approx(1.0));
  CHECK(r.logits.at(1, 0) == doctest::Approx(2.0));
  CHECK(r.logits.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("sage uses a zero vector for an empty neighborhood") {
  // Node 1 is isolated; one-layer sage with W = [I; I] so logits = x + mean.
  Graph g = build_graph(2, Tensor::from(2, 2, {1.0, 2.0, 5.0, -4.0}), {0, 1}, {}, {0}, {1}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::sage, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::from(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(1.0));
  CHECK(r.logits.at(1, 0) == doctest::Approx(5.0));
  CHECK(r.logits.at(1, 1) == doctest::Approx(-4.0));
}

TEST_CASE("sage neighbor mean equals the shared feature when all neighbors agree") {
  // Star: center 0 with leaves 1..3 all carrying feature (2, 2).
  Tensor x(4, 2);
  x.at(0, 0) = 7.0;
  for (int i = 1; i < 4; ++i) {
    x.at(i, 0) = 2.0;
    x.at(i, 1) = 2.0;
  }
  Graph g = build_graph(4, x, {0, 1, 1, 1}, {{0, 1}, {0, 2}, {0, 3}}, {0, 1}, {2}, {3});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::sage, 2, 2, 1, 2, 1, 0.0, rng);
  // W reads only the aggregated half.
  m.params[0] = Tensor::from(4, 2, {0, 0, 0, 0, 1, 0, 0, 1});
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(2.0));
  CHECK(r.logits.at(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("one-layer sage on a 3-node path matches the hand oracle") {
  // Path 0-1-2, X rows: (1,0), (0,1), (1,1).
  // Means: node0 -> (0,1); node1 -> (1,.5); node2 -> (0,1).
  // W = [[1,0],[0,1],[2,0],[0,3]] applied to [x | mean]:
  //   node0: (1+0*2, 0) + (0*2, 1*3) = (1, 3)
  //   node1: (0+2, 1+1.5) = (2, 2.5)
  //   node2: (1, 1) + (0, 3) = (1, 4)
  Graph g = build_graph(3, Tensor::from(3, 2, {1, 0, 0, 1, 1, 1}), {0, 1, 0},
                        {{0, 1}, {1, 2}}, {0, 1}, {2}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::sage, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::from(4, 2, {1, 0, 0, 1, 2, 0, 0, 3});
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(1.0));
  CHECK(r.logits.at(0, 1) == doctest::Approx(3.0));
  CHECK(r.logits.at(1, 0) == doctest::Approx(2.0));
  CHECK(r.logits.at(1, 1) == doctest::Approx(2.5));
  CHECK(r.logits.at(2, 0) == doctest::Approx(1.0));
  CHECK(r.logits.at(2, 1) == doctest::Approx(4.0));
}

TEST_CASE("gat gives an isolated node full self-attention") {
  Graph g = build_graph(1, Tensor::from(1, 2, {3.0, -1.0}), {0}, {}, {0}, {}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::gat, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::identity(2);  // W
  // Arbitrary nonzero attention vectors must not matter for a single node.
  m.params[1] = Tensor::from(2, 1, {1.0, 2.0});
  m.params[2] = Tensor::from(2, 1, {-0.5, 0.3});
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(0, 0) == doctest::Approx(3.0));
  CHECK(r.logits.at(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("gat with zero attention vectors averages neighbors uniformly") {
  // Path 0-1-2; node 1 attends uniformly over {0,1,2}.
  Graph g = build_graph(3, Tensor::from(3, 2, {1, 0, 0, 1, 1, 1}), {0, 1, 0},
                        {{0, 1}, {1, 2}}, {0, 1}, {2}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::gat, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::identity(2);
  m.params[1] = Tensor(2, 1);
  m.params[2] = Tensor(2, 1);
  EvalResult r = eval_with(g, m);
  CHECK(r.logits.at(1, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(r.logits.at(1, 1) == doctest::Approx(2.0 / 3.0));
  // Node 0 attends uniformly over {0,1}.
  CHECK(r.logits.at(0, 0) == doctest::Approx(0.5));
  CHECK(r.logits.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("one-head gat on a single edge matches the hand oracle") {
  // X = [[1,0],[0,1]], W = I, a_src = (1,0)^T, a_dst = (0,1)^T.
  // zh = X. s_src = (1, 0)^T, s_dst = (0, 1)^T.
  // e(i,j) = s_src[i] + s_dst[j]: e = [[1, 2], [0, 1]]; leaky relu keeps them.
  // Row 0 attention: softmax(1, 2) = (1/(1+e), e/(1+e)).
  // Row 1 attention: softmax(0, 1) = same pair.
  Graph g = build_graph(2, Tensor::from(2, 2, {1, 0, 0, 1}), {0, 1}, {{0, 1}}, {0}, {1}, {});
  std::mt19937_64 rng(0);
  GnnModel m = make_model(Arch::gat, 2, 2, 1, 2, 1, 0.0, rng);
  m.params[0] = Tensor::identity(2);
  m.params[1] = Tensor::from(2, 1, {1.0, 0.0});
  m.params[2] = Tensor::from(2, 1, {0.0, 1.0});
  EvalResult r = eval_with(g, m);
  const double w0 = 1.0 / (1.0 + std::exp(1.0));
  const double w1 = std::exp(1.0) / (1.0 + std::exp(1.0));
  CHECK(r.logits.at(0, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(r.logits.at(0, 1) == doctest::Approx(w1).epsilon(1e-12));
  CHECK(r.logits.at(1, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(r.logits.at(1, 1) == doctest::Approx(w1).epsilon(1e-12));
}

TEST_CASE("per_node_ce is 0 on a confident correct prediction and ln C on uniform") {
  Tape tape;
  Var probs = tape.constant(Tensor::from(2, 4, {1.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25}));
  Var ce = per_node_ce(tape, probs, {0, 2}, {0, 1});
  CHECK(tape.value(ce).at(0, 0) == doctest::Approx(0.0));
  CHECK(tape.value(ce).at(1, 0) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("per_node_ce equals -log p[y] on arbitrary rows") {
  Tape tape;
  Var probs = tape.constant(Tensor::from(3, 2, {0.7, 0.3, 0.2, 0.8, 0.5, 0.5}));
  Var ce = per_node_ce(tape, probs, {1, 1, 0}, {2, 0});
  CHECK(tape.value(ce).at(0, 0) == doctest::Approx(-std::log(0.5)));
  CHECK(tape.value(ce).at(1, 0) == doctest::Approx(-std::log(0.3)));
}

TEST_CASE("soft label rows sum to one for every arch") {
  Graph g = small_sbm(11);
  for (Arch arch : {Arch::gcn, Arch::sage, Arch::gat}) {
    std::mt19937_64 rng(2);
    GnnModel m = make_model(arch, g.feature_dim, g.num_classes, 2, 4, 2, 0.0, rng);
    EvalResult r = eval_with(g, m);
    for (int i = 0; i < r.probs.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < r.probs.cols; ++j) s += r.probs.at(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("training-loss gradients match finite differences for every arch") {
  Graph g = small_sbm(21);
  GraphOps ops = make_graph_ops(g, true);
  for (Arch arch : {Arch::gcn, Arch::sage, Arch::gat}) {
    std::mt19937_64 rng(4);
    GnnModel m = make_model(arch, g.feature_dim, g.num_classes, 2, 4, 2, 0.0, rng);

    auto loss_value = [&](const GnnModel& mm) {
      Tape tape;
      std::vector<Var> pv;
      std::mt19937_64 r2(0);
      Forward f = model_forward(tape, g, ops, mm, pv, false, r2);
      return tape.value(tape.sum_all(per_node_ce(tape, f.probs, g.labels, g.train_mask))).data[0];
    };

    Tape tape;
    std::vector<Var> pv;
    std::mt19937_64 r2(0);
    Forward f = model_forward(tape, g, ops, m, pv, false, r2);
    tape.backward(tape.sum_all(per_node_ce(tape, f.probs, g.labels, g.train_mask)));

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t p = 0; p < m.params.size(); ++p) {
      for (int i = 0; i < m.params[p].size(); ++i) {
        GnnModel plus = m, minus = m;
        plus.params[p].data[i] += h;
        minus.params[p].data[i] -= h;
        const double fd = (loss_value(plus) - loss_value(minus)) / (2.0 * h);
        const double a = tape.grad(pv[p]).data[i];
        worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4}));
      }
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("forward pass is equivariant under node relabeling") {
  Graph g = small_sbm(33);
  const int n = g.num_nodes;
  // Fixed permutation: reverse order.
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = n - 1 - i;

  Tensor px(n, g.feature_dim);
  std::vector<int> plabels(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    plabels[static_cast<size_t>(perm[static_cast<size_t>(i)])] = g.labels[static_cast<size_t>(i)];
    for (int j = 0; j < g.feature_dim; ++j)
      px.at(perm[static_cast<size_t>(i)], j) = g.features.at(i, j);
  }
  std::vector<std::pair<int, int>> pedges;
  for (auto [s, d] : g.edges)
    pedges.emplace_back(perm[static_cast<size_t>(s)], perm[static_cast<size_t>(d)]);
  std::vector<int> ptrain, pval, ptest;
  for (int i : g.train_mask) ptrain.push_back(perm[static_cast<size_t>(i)]);
  for (int i : g.val_mask) pval.push_back(perm[static_cast<size_t>(i)]);
  for (int i : g.test_mask) ptest.push_back(perm[static_cast<size_t>(i)]);
  Graph pg = build_graph(n, px, plabels, pedges, ptrain, pval, ptest);

  for (Arch arch : {Arch::gcn, Arch::sage, Arch::gat}) {
    std::mt19937_64 rng(6);
    GnnModel m = make_model(arch, g.feature_dim, g.num_classes, 2, 4, 2, 0.0, rng);
    EvalResult a = eval_with(g, m);
    EvalResult b = eval_with(pg, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < g.num_classes; ++j)
        CHECK(b.probs.at(perm[static_cast<size_t>(i)], j) ==
              doctest::Approx(a.probs.at(i, j)).epsilon(1e-9));
  }
}

TEST_CASE("predict_labels picks the argmax per row") {
  Tensor logits = Tensor::from(2, 3, {0.1, 0.9, 0.5, 2.0, -1.0, 1.5});
  CHECK(predict_labels(logits) == std::vector<int>{1, 0});
}
