#include "freekd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace freekd {

namespace {
void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr, "leaf");
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void()> pull, const char* op) {
  if (!value.finite()) throw std::runtime_error(std::string("non-finite output of op '") + op + "'");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::grad(Var v) const {
  require(grads_ready_, "Tape::grad before backward");
  return node(v).grad;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.cols == B.rows, "matmul: inner dims differ");
  Tensor C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      const double av = A.at(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += av * B.at(k, j);
    }
  bool track = rg(a) || rg(b);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), track, [t, a, b, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    const Tensor& B = t->value(b);
    if (t->rg(a)) {  // dA = G B^T
      Tensor& dA = t->grad_mut(a);
      for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < G.cols; ++j) {
          const double g = G.at(i, j);
          if (g == 0.0) continue;
          for (int k = 0; k < A.cols; ++k) dA.at(i, k) += g * B.at(k, j);
        }
    }
    if (t->rg(b)) {  // dB = A^T G
      Tensor& dB = t->grad_mut(b);
      for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
          const double av = A.at(i, k);
          if (av == 0.0) continue;
          for (int j = 0; j < G.cols; ++j) dB.at(k, j) += av * G.at(i, j);
        }
    }
  }, "matmul");
}

Var Tape::spmm(const CsrMatrix& a, Var x) {
  Tensor y = a.multiply(value(x));
  bool track = rg(x);
  Tape* t = this;
  const CsrMatrix* ap = &a;  // caller keeps the matrix alive for the step
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(y), track, [t, ap, x, out]() {
    Tensor dx = ap->multiply_transposed(t->node(out).grad);
    Tensor& gx = t->grad_mut(x);
    for (int i = 0; i < dx.size(); ++i) gx.data[i] += dx.data[i];
  }, "spmm");
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "add: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a) || rg(b), [t, a, b, out]() {
    const Tensor& G = t->node(out).grad;
    if (t->rg(a)) {
      Tensor& dA = t->grad_mut(a);
      for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
    }
    if (t->rg(b)) {
      Tensor& dB = t->grad_mut(b);
      for (int i = 0; i < G.size(); ++i) dB.data[i] += G.data[i];
    }
  }, "add");
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "sub: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a) || rg(b), [t, a, b, out]() {
    const Tensor& G = t->node(out).grad;
    if (t->rg(a)) {
      Tensor& dA = t->grad_mut(a);
      for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
    }
    if (t->rg(b)) {
      Tensor& dB = t->grad_mut(b);
      for (int i = 0; i < G.size(); ++i) dB.data[i] -= G.data[i];
    }
  }, "sub");
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "mul: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a) || rg(b), [t, a, b, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    const Tensor& B = t->value(b);
    if (t->rg(a)) {
      Tensor& dA = t->grad_mut(a);
      for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i] * B.data[i];
    }
    if (t->rg(b)) {
      Tensor& dB = t->grad_mut(b);
      for (int i = 0; i < G.size(); ++i) dB.data[i] += G.data[i] * A.data[i];
    }
  }, "mul");
}

Var Tape::scale(Var a, double c) {
  Tensor C = value(a);
  for (double& v : C.data) v *= c;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, c, out]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += c * G.data[i];
  }, "scale");
}

Var Tape::add_scalar(Var a, double c) {
  Tensor C = value(a);
  for (double& v : C.data) v += c;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
  }, "add_scalar");
}

Var Tape::transpose(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.rows; ++i)
      for (int j = 0; j < G.cols; ++j) dA.at(j, i) += G.at(i, j);
  }, "transpose");
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rows == B.rows, "concat_cols: row mismatch");
  Tensor C(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
    for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
  }
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a) || rg(b), [t, a, b, out]() {
    const Tensor& G = t->node(out).grad;
    const int ac = t->value(a).cols;
    if (t->rg(a)) {
      Tensor& dA = t->grad_mut(a);
      for (int i = 0; i < dA.rows; ++i)
        for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += G.at(i, j);
    }
    if (t->rg(b)) {
      Tensor& dB = t->grad_mut(b);
      for (int i = 0; i < dB.rows; ++i)
        for (int j = 0; j < dB.cols; ++j) dB.at(i, j) += G.at(i, ac + j);
    }
  }, "concat_cols");
}

Var Tape::relu(Var a) {
  const Tensor& A = value(a);
  Tensor C = A;
  for (double& v : C.data) v = v > 0.0 ? v : 0.0;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += A.data[i] > 0.0 ? G.data[i] : 0.0;
  }, "relu");
}

Var Tape::elu(Var a) {
  const Tensor& A = value(a);
  Tensor C = A;
  for (double& v : C.data) v = v > 0.0 ? v : std::expm1(v);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i)
      dA.data[i] += (A.data[i] > 0.0 ? 1.0 : std::exp(A.data[i])) * G.data[i];
  }, "elu");
}

Var Tape::leaky_relu(Var a, double slope) {
  const Tensor& A = value(a);
  Tensor C = A;
  for (double& v : C.data) v = v > 0.0 ? v : slope * v;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, slope, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i)
      dA.data[i] += (A.data[i] > 0.0 ? 1.0 : slope) * G.data[i];
  }, "leaky_relu");
}

Var Tape::tanh_(Var a) {
  Tensor C = value(a);
  for (double& v : C.data) v = std::tanh(v);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& Y = t->value(out);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += (1.0 - Y.data[i] * Y.data[i]) * G.data[i];
  }, "tanh");
}

Var Tape::exp_(Var a) {
  Tensor C = value(a);
  for (double& v : C.data) v = std::exp(v);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& Y = t->value(out);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += Y.data[i] * G.data[i];
  }, "exp");
}

Var Tape::log_clamped(Var a, double eps) {
  const Tensor& A = value(a);
  Tensor C = A;
  for (double& v : C.data) v = std::log(std::max(v, eps));
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, eps, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) {
      // Zero slope inside the clamped region.
      if (A.data[i] > eps) dA.data[i] += G.data[i] / A.data[i];
    }
  }, "log");
}

Var Tape::row_softmax(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double mx = A.at(i, 0);
    for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      C.at(i, j) = std::exp(A.at(i, j) - mx);
      s += C.at(i, j);
    }
    for (int j = 0; j < A.cols; ++j) C.at(i, j) /= s;
  }
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& Y = t->value(out);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < G.cols; ++j) dot += G.at(i, j) * Y.at(i, j);
      for (int j = 0; j < G.cols; ++j) dA.at(i, j) += Y.at(i, j) * (G.at(i, j) - dot);
    }
  }, "row_softmax");
}

Var Tape::masked_row_softmax(Var a, const Tensor& mask) {
  const Tensor& A = value(a);
  require(A.same_shape(mask), "masked_row_softmax: mask shape mismatch");
  Tensor C(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < A.cols; ++j)
      if (mask.at(i, j) != 0.0) mx = std::max(mx, A.at(i, j));
    require(mx > -1e300, "masked_row_softmax: empty mask row");
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      if (mask.at(i, j) != 0.0) {
        C.at(i, j) = std::exp(A.at(i, j) - mx);
        s += C.at(i, j);
      }
    }
    for (int j = 0; j < A.cols; ++j) C.at(i, j) /= s;
  }
  Tensor mask_copy = mask;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out, mask_copy]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& Y = t->value(out);
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < G.cols; ++j) dot += G.at(i, j) * Y.at(i, j);
      for (int j = 0; j < G.cols; ++j)
        if (mask_copy.at(i, j) != 0.0) dA.at(i, j) += Y.at(i, j) * (G.at(i, j) - dot);
    }
  }, "masked_row_softmax");
}

Var Tape::dropout(Var a, double q, bool train_mode, std::mt19937_64& rng) {
  if (!train_mode || q <= 0.0) {
    // Identity at eval; still a node so graph structure is uniform.
    return scale(a, 1.0);
  }
  require(q < 1.0, "dropout: q must be < 1");
  const Tensor& A = value(a);
  Tensor keep(A.rows, A.cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double inv = 1.0 / (1.0 - q);
  for (int i = 0; i < keep.size(); ++i) keep.data[i] = u(rng) >= q ? inv : 0.0;
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.data[i] *= keep.data[i];
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out, keep]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.size(); ++i) dA.data[i] += keep.data[i] * G.data[i];
  }, "dropout");
}

Var Tape::gather_rows(Var a, std::vector<int> ids) {
  const Tensor& A = value(a);
  Tensor C(static_cast<int>(ids.size()), A.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < A.rows, "gather_rows: id out of range");
    for (int j = 0; j < A.cols; ++j) C.at(static_cast<int>(i), j) = A.at(ids[i], j);
  }
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out, ids = std::move(ids)]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < G.cols; ++j) dA.at(ids[i], j) += G.at(static_cast<int>(i), j);
  }, "gather_rows");
}

Var Tape::row_pick(Var a, std::vector<int> col_ids) {
  const Tensor& A = value(a);
  require(static_cast<int>(col_ids.size()) == A.rows, "row_pick: one column id per row");
  Tensor C(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    require(col_ids[i] >= 0 && col_ids[i] < A.cols, "row_pick: column out of range");
    C.at(i, 0) = A.at(i, col_ids[i]);
  }
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a), [t, a, out, col_ids = std::move(col_ids)]() {
    const Tensor& G = t->node(out).grad;
    Tensor& dA = t->grad_mut(a);
    for (int i = 0; i < G.rows; ++i) dA.at(i, col_ids[i]) += G.at(i, 0);
  }, "row_pick");
}

Var Tape::sum_all(Var a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(Tensor::scalar(s), rg(a), [t, a, out]() {
    const double g = t->node(out).grad.data[0];
    Tensor& dA = t->grad_mut(a);
    for (double& v : dA.data) v += g;
  }, "sum_all");
}

Var Tape::mean_all(Var a) {
  const Tensor& A = value(a);
  require(A.size() > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (double v : A.data) s += v;
  const double n = static_cast<double>(A.size());
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(Tensor::scalar(s / n), rg(a), [t, a, out, n]() {
    const double g = t->node(out).grad.data[0] / n;
    Tensor& dA = t->grad_mut(a);
    for (double& v : dA.data) v += g;
  }, "mean_all");
}

Var Tape::outer_sum(Var s1, Var s2) {
  const Tensor& A = value(s1);
  const Tensor& B = value(s2);
  require(A.cols == 1 && B.cols == 1, "outer_sum: expects column vectors");
  Tensor C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < B.rows; ++j) C.at(i, j) = A.at(i, 0) + B.at(j, 0);
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(s1) || rg(s2), [t, s1, s2, out]() {
    const Tensor& G = t->node(out).grad;
    if (t->rg(s1)) {
      Tensor& d1 = t->grad_mut(s1);
      for (int i = 0; i < G.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < G.cols; ++j) s += G.at(i, j);
        d1.at(i, 0) += s;
      }
    }
    if (t->rg(s2)) {
      Tensor& d2 = t->grad_mut(s2);
      for (int j = 0; j < G.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < G.rows; ++i) s += G.at(i, j);
        d2.at(j, 0) += s;
      }
    }
  }, "outer_sum");
}

Var Tape::row_cosine(Var a, Var x) {
  const Tensor& A = value(a);
  const Tensor& X = value(x);
  require(X.rows == 1 && X.cols == A.cols, "row_cosine: x must be 1 x d matching a");
  const int k = A.rows;
  const int d = A.cols;
  double xn = 0.0;
  for (int j = 0; j < d; ++j) xn += X.at(0, j) * X.at(0, j);
  xn = std::sqrt(xn);
  Tensor C(k, 1);
  for (int i = 0; i < k; ++i) {
    double an = 0.0, dot = 0.0;
    for (int j = 0; j < d; ++j) {
      an += A.at(i, j) * A.at(i, j);
      dot += A.at(i, j) * X.at(0, j);
    }
    an = std::sqrt(an);
    C.at(i, 0) = (an == 0.0 || xn == 0.0) ? 0.0 : dot / (an * xn);
  }
  Tape* t = this;
  Var out{static_cast<int>(nodes_.size())};
  return push(std::move(C), rg(a) || rg(x), [t, a, x, out]() {
    const Tensor& G = t->node(out).grad;
    const Tensor& A = t->value(a);
    const Tensor& X = t->value(x);
    const Tensor& Y = t->value(out);
    const int k = A.rows;
    const int d = A.cols;
    double xn = 0.0;
    for (int j = 0; j < d; ++j) xn += X.at(0, j) * X.at(0, j);
    xn = std::sqrt(xn);
    if (xn == 0.0) return;
    for (int i = 0; i < k; ++i) {
      const double g = G.at(i, 0);
      if (g == 0.0) continue;
      double an = 0.0;
      for (int j = 0; j < d; ++j) an += A.at(i, j) * A.at(i, j);
      an = std::sqrt(an);
      if (an == 0.0) continue;
      const double c = Y.at(i, 0);
      if (t->rg(a)) {
        Tensor& dA = t->grad_mut(a);
        for (int j = 0; j < d; ++j)
          dA.at(i, j) += g * (X.at(0, j) / (an * xn) - c * A.at(i, j) / (an * an));
      }
      if (t->rg(x)) {
        Tensor& dX = t->grad_mut(x);
        for (int j = 0; j < d; ++j)
          dX.at(0, j) += g * (A.at(i, j) / (an * xn) - c * X.at(0, j) / (xn * xn));
      }
    }
  }, "row_cosine");
}

void Tape::backward(Var loss) {
  require(loss.valid(), "backward: invalid loss var");
  const Node& ln = node(loss);
  require(ln.value.rows == 1 && ln.value.cols == 1, "backward: loss must be scalar");
  require(ln.requires_grad, "backward: loss is detached from every parameter");
  for (Node& n : nodes_) n.grad = Tensor(n.value.rows, n.value.cols);
  grads_ready_ = true;
  node(loss).grad.data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.pull) n.pull();
  }
}

}  // namespace freekd
