#pragma once

#include <functional>
#include <random>
#include <vector>

#include "freekd/tensor.hpp"

namespace freekd {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops append records in topological order; backward walks
// them once in reverse. One tape per training step; tensors recorded by value.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;

  // Primitives
  Var matmul(Var a, Var b);
  Var spmm(const CsrMatrix& a, Var x);  // sparse constant times dense
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var transpose(Var a);
  Var concat_cols(Var a, Var b);
  Var relu(Var a);
  Var elu(Var a);
  Var leaky_relu(Var a, double slope);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var log_clamped(Var a, double eps = 1e-12);  // log(max(x, eps))
  Var row_softmax(Var a);
  // Softmax restricted to entries where mask != 0; masked-out entries are 0.
  // Every row of mask must contain at least one nonzero.
  Var masked_row_softmax(Var a, const Tensor& mask);
  Var dropout(Var a, double q, bool train_mode, std::mt19937_64& rng);
  Var gather_rows(Var a, std::vector<int> ids);
  Var row_pick(Var a, std::vector<int> col_ids);  // one entry per row -> n x 1
  Var sum_all(Var a);
  Var mean_all(Var a);
  // E = s1 * 1^T + 1 * s2^T for column vectors s1, s2 (n x 1) -> n x n
  Var outer_sum(Var s1, Var s2);
  // Cosine of each row of a (k x d) against the single row x (1 x d) -> k x 1.
  // Zero-norm rows on either side yield similarity 0.
  Var row_cosine(Var a, Var x);

  void backward(Var loss);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> pull;  // accumulate output grad into input grads
  };
  std::vector<Node> nodes_;
  bool grads_ready_ = false;

  Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }
  Var push(Tensor value, bool requires_grad, std::function<void()> pull, const char* op);
  Tensor& grad_mut(Var v) { return node(v).grad; }
  bool rg(Var v) const { return node(v).requires_grad; }
};

}  // namespace freekd
