#pragma once

#include <cstdint>
#include <vector>

#include "freekd/graph.hpp"
#include "freekd/tape.hpp"

namespace freekd {

// Per-batch action bits. a1[k] = 0 means Phi teaches Psi at batch node k,
// a1[k] = 1 the reverse; a2[k] = 1 propagates node k's local structure.
struct ActionAssignment {
  std::vector<int> batch;     // node ids
  std::vector<uint8_t> a1;
  std::vector<uint8_t> a2;
};

// Agent-selected neighborhood sets, parallel to the batch. phi[k] holds the
// members of M_k for the Phi-teaches case, psi[k] for the Psi-teaches case.
struct NeighborhoodSets {
  std::vector<std::vector<int>> phi;
  std::vector<std::vector<int>> psi;
};

// M_i^Phi = {v : a_i=0, a_v=0, (i,v) in E}, M_i^Psi the 1-bit mirror.
// Membership is restricted to nodes present in the batch.
NeighborhoodSets select_neighborhoods(const ActionAssignment& assignment, const Graph& g);

// Softmax over exp(cos(h_i, h_v)) for v in member_set (evaluated, no grad).
std::vector<double> similarity_distribution(const Tensor& embeddings, int i,
                                            const std::vector<int>& member_set);

// Sum over batch of gate[k] * KL(teacher_row_k || student_row_k); the teacher
// side is a plain tensor so no gradient reaches it. Rows of both matrices are
// indexed by graph node id.
Var node_distill_loss(Tape& tape, Var student_probs, const Tensor& teacher_probs,
                      const std::vector<int>& batch, const std::vector<double>& gate);

// Sum over batch of gate[k] * KL(s_teacher_k || s_student_k) where the two
// similarity distributions are softmaxed cosines against member_sets[k].
// Empty member sets contribute zero.
Var struct_distill_loss(Tape& tape, Var student_hidden, const Tensor& teacher_hidden,
                        const std::vector<int>& batch,
                        const std::vector<std::vector<int>>& member_sets,
                        const std::vector<double>& gate);

// Gate vectors per role: student Psi uses (1-a1) and (1-a1)*a2, student Phi
// uses a1 and a1*a2.
std::vector<double> node_gate_for_psi(const ActionAssignment& a);
std::vector<double> node_gate_for_phi(const ActionAssignment& a);
std::vector<double> struct_gate_for_psi(const ActionAssignment& a);
std::vector<double> struct_gate_for_phi(const ActionAssignment& a);

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace freekd
