#include "freekd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace freekd {

namespace {
constexpr double kLogEps = 1e-12;

double clamped_log(double x) { return std::log(std::max(x, kLogEps)); }
}  // namespace

NeighborhoodSets select_neighborhoods(const ActionAssignment& assignment, const Graph& g) {
  const size_t n = assignment.batch.size();
  if (assignment.a1.size() != n) throw std::invalid_argument("select_neighborhoods: a1 size mismatch");
  std::unordered_map<int, uint8_t> bit;
  bit.reserve(n);
  for (size_t k = 0; k < n; ++k) bit[assignment.batch[k]] = assignment.a1[k];

  NeighborhoodSets sets;
  sets.phi.resize(n);
  sets.psi.resize(n);
  for (size_t k = 0; k < n; ++k) {
    const int i = assignment.batch[k];
    for (int v : g.neighbors[static_cast<size_t>(i)]) {
      auto it = bit.find(v);
      if (it == bit.end()) continue;  // actions exist only for batch nodes
      if (assignment.a1[k] == 0 && it->second == 0) sets.phi[k].push_back(v);
      if (assignment.a1[k] == 1 && it->second == 1) sets.psi[k].push_back(v);
    }
  }
  return sets;
}

std::vector<double> similarity_distribution(const Tensor& embeddings, int i,
                                            const std::vector<int>& member_set) {
  if (member_set.empty()) throw std::invalid_argument("similarity_distribution: empty member set");
  const int d = embeddings.cols;
  auto norm = [&](int r) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += embeddings.at(r, j) * embeddings.at(r, j);
    return std::sqrt(s);
  };
  const double ni = norm(i);
  std::vector<double> sims;
  sims.reserve(member_set.size());
  for (int v : member_set) {
    const double nv = norm(v);
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += embeddings.at(i, j) * embeddings.at(v, j);
    sims.push_back(ni == 0.0 || nv == 0.0 ? 0.0 : dot / (ni * nv));
  }
  double mx = *std::max_element(sims.begin(), sims.end());
  double z = 0.0;
  for (double& s : sims) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : sims) s /= z;
  return sims;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) kl += p[j] * (clamped_log(p[j]) - clamped_log(q[j]));
  return kl;
}

Var node_distill_loss(Tape& tape, Var student_probs, const Tensor& teacher_probs,
                      const std::vector<int>& batch, const std::vector<double>& gate) {
  if (batch.size() != gate.size()) throw std::invalid_argument("node_distill_loss: gate size mismatch");
  const int c = teacher_probs.cols;
  // KL(t || s) = sum t log t - sum t log s; the entropy part is constant.
  // Gates are folded into the teacher-side weights row by row.
  Tensor weighted(static_cast<int>(batch.size()), c);
  double const_term = 0.0;
  for (size_t k = 0; k < batch.size(); ++k) {
    const int i = batch[k];
    for (int j = 0; j < c; ++j) {
      const double t = teacher_probs.at(i, j);
      weighted.at(static_cast<int>(k), j) = gate[k] * t;
      if (t > 0.0) const_term += gate[k] * t * clamped_log(t);
    }
  }
  Var log_s = tape.log_clamped(tape.gather_rows(student_probs, batch));
  Var cross = tape.sum_all(tape.mul(tape.constant(std::move(weighted)), log_s));
  return tape.add_scalar(tape.scale(cross, -1.0), const_term);
}

Var struct_distill_loss(Tape& tape, Var student_hidden, const Tensor& teacher_hidden,
                        const std::vector<int>& batch,
                        const std::vector<std::vector<int>>& member_sets,
                        const std::vector<double>& gate) {
  if (batch.size() != member_sets.size() || batch.size() != gate.size())
    throw std::invalid_argument("struct_distill_loss: size mismatch");
  Var total = tape.constant(Tensor::scalar(0.0));
  for (size_t k = 0; k < batch.size(); ++k) {
    if (gate[k] == 0.0 || member_sets[k].empty()) continue;
    const int i = batch[k];
    const auto t = similarity_distribution(teacher_hidden, i, member_sets[k]);
    double const_term = 0.0;
    Tensor tw(1, static_cast<int>(t.size()));
    for (size_t j = 0; j < t.size(); ++j) {
      tw.at(0, static_cast<int>(j)) = gate[k] * t[j];
      if (t[j] > 0.0) const_term += gate[k] * t[j] * clamped_log(t[j]);
    }
    Var members = tape.gather_rows(student_hidden, member_sets[k]);
    Var center = tape.gather_rows(student_hidden, {i});
    Var sims = tape.transpose(tape.row_cosine(members, center));  // 1 x |M|
    Var log_s = tape.log_clamped(tape.row_softmax(sims));
    Var cross = tape.sum_all(tape.mul(tape.constant(std::move(tw)), log_s));
    total = tape.add(total, tape.add_scalar(tape.scale(cross, -1.0), const_term));
  }
  return total;
}

std::vector<double> node_gate_for_psi(const ActionAssignment& a) {
  std::vector<double> g(a.a1.size());
  for (size_t k = 0; k < g.size(); ++k) g[k] = a.a1[k] == 0 ? 1.0 : 0.0;
  return g;
}

std::vector<double> node_gate_for_phi(const ActionAssignment& a) {
  std::vector<double> g(a.a1.size());
  for (size_t k = 0; k < g.size(); ++k) g[k] = a.a1[k] == 1 ? 1.0 : 0.0;
  return g;
}

std::vector<double> struct_gate_for_psi(const ActionAssignment& a) {
  std::vector<double> g(a.a1.size());
  for (size_t k = 0; k < g.size(); ++k) g[k] = (a.a1[k] == 0 && a.a2[k] == 1) ? 1.0 : 0.0;
  return g;
}

std::vector<double> struct_gate_for_phi(const ActionAssignment& a) {
  std::vector<double> g(a.a1.size());
  for (size_t k = 0; k < g.size(); ++k) g[k] = (a.a1[k] == 1 && a.a2[k] == 1) ? 1.0 : 0.0;
  return g;
}

}  // namespace freekd
