#pragma once

#include <array>
#include <random>
#include <vector>

#include "freekd/distill.hpp"
#include "freekd/graph.hpp"
#include "freekd/tape.hpp"

namespace freekd {

// Three dense layers (in -> 64 -> 32 -> 2), tanh on the hidden layers,
// softmax over the two output logits.
struct PolicyNet {
  int in_dim = 0;
  std::vector<Tensor> params;  // W1, W2, W3
};

PolicyNet make_policy(int in_dim, std::mt19937_64& rng);

// Action probabilities [P(a=0), P(a=1)] at one state, no tape involved.
std::array<double, 2> policy_probs(const PolicyNet& net, const std::vector<double>& state);

struct ActionSample {
  int action = 0;
  double prob = 0.0;      // probability of the taken action
  double log_prob = 0.0;
};

ActionSample policy_act(const PolicyNet& net, const std::vector<double>& state, std::mt19937_64& rng);

// s^[1] = concat(p_i^Phi, L_CE^Phi(i), p_i^Psi, L_CE^Psi(i)); length 2C+2.
std::vector<double> build_node_state(int i, const Tensor& probs_phi, const Tensor& probs_psi,
                                     double ce_phi, double ce_psi);

// Two-entry center-similarity pair; the member set is the agent-selected
// neighborhood on the teacher side, empty set -> (0, 0).
std::array<double, 2> center_similarity(int batch_index, const ActionAssignment& assignment,
                                        const NeighborhoodSets& sets, const Tensor& hidden_phi,
                                        const Tensor& hidden_psi);

// s^[2] = concat(s^[1], u_i); length 2C+4.
std::vector<double> build_struct_state(const std::vector<double>& node_state,
                                       const std::array<double, 2>& center_sim);

// R_i per the delayed-reward definition: batch term plus gamma-weighted
// neighborhood term. `neighbor_losses` holds summed CE pairs for the labeled
// training neighbors of i; empty -> the second term is dropped.
double compute_reward(const std::vector<double>& batch_losses_phi,
                      const std::vector<double>& batch_losses_psi,
                      const std::vector<double>& neighbor_losses, double gamma);

struct ActionRecord {
  int node = -1;
  std::vector<double> state1;
  int a1 = 0;
  std::vector<double> state2;
  int a2 = 0;
  double log_prob1 = 0.0;
  double log_prob2 = 0.0;
  double reward = 0.0;
  double baseline = 0.0;
  bool update_theta = true;
  bool update_delta = true;
};

// Per-node baseline table: b_i is the reward stored for node i in the previous
// epoch, 0 until a node first receives one.
class BaselineTable {
 public:
  explicit BaselineTable(int num_nodes) : values_(static_cast<size_t>(num_nodes), 0.0) {}
  double get(int node) const { return values_.at(static_cast<size_t>(node)); }
  void store(int node, double reward) { values_.at(static_cast<size_t>(node)) = reward; }

 private:
  std::vector<double> values_;
};

// One REINFORCE ascent step on both policies from a batch of records:
// grad J = (1/|B|) sum_i (R_i - b_i) grad log(pi_theta * pi_delta).
void policy_update(PolicyNet& theta, PolicyNet& delta, const std::vector<ActionRecord>& history,
                   double eta);

}  // namespace freekd
