#include "freekd/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace freekd {

namespace {

Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Batched MLP forward on a tape; states is B x in_dim.
Var policy_forward(Tape& tape, const PolicyNet& net, Var states, std::vector<Var>& pvars) {
  for (const Tensor& p : net.params) pvars.push_back(tape.leaf(p, true));
  Var z1 = tape.tanh_(tape.matmul(states, pvars[pvars.size() - 3]));
  Var z2 = tape.tanh_(tape.matmul(z1, pvars[pvars.size() - 2]));
  Var logits = tape.matmul(z2, pvars[pvars.size() - 1]);
  return tape.row_softmax(logits);
}

}  // namespace

PolicyNet make_policy(int in_dim, std::mt19937_64& rng) {
  PolicyNet net;
  net.in_dim = in_dim;
  net.params.push_back(glorot(in_dim, 64, rng));
  net.params.push_back(glorot(64, 32, rng));
  net.params.push_back(glorot(32, 2, rng));
  return net;
}

std::array<double, 2> policy_probs(const PolicyNet& net, const std::vector<double>& state) {
  if (static_cast<int>(state.size()) != net.in_dim)
    throw std::invalid_argument("policy_probs: state width mismatch");
  Tape tape;
  Tensor s(1, net.in_dim);
  s.data.assign(state.begin(), state.end());
  std::vector<Var> pvars;
  Var probs = policy_forward(tape, net, tape.constant(std::move(s)), pvars);
  const Tensor& p = tape.value(probs);
  return {p.at(0, 0), p.at(0, 1)};
}

ActionSample policy_act(const PolicyNet& net, const std::vector<double>& state, std::mt19937_64& rng) {
  const auto p = policy_probs(net, state);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ActionSample s;
  s.action = u(rng) < p[1] ? 1 : 0;
  s.prob = p[static_cast<size_t>(s.action)];
  s.log_prob = std::log(std::max(s.prob, 1e-12));
  return s;
}

std::vector<double> build_node_state(int i, const Tensor& probs_phi, const Tensor& probs_psi,
                                     double ce_phi, double ce_psi) {
  if (probs_phi.cols != probs_psi.cols) throw std::invalid_argument("build_node_state: class count mismatch");
  std::vector<double> s;
  s.reserve(static_cast<size_t>(2 * probs_phi.cols + 2));
  for (int j = 0; j < probs_phi.cols; ++j) s.push_back(probs_phi.at(i, j));
  s.push_back(ce_phi);
  for (int j = 0; j < probs_psi.cols; ++j) s.push_back(probs_psi.at(i, j));
  s.push_back(ce_psi);
  return s;
}

namespace {
double mean_cosine(const Tensor& h, int i, const std::vector<int>& members) {
  const int d = h.cols;
  auto norm = [&](int r) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += h.at(r, j) * h.at(r, j);
    return std::sqrt(s);
  };
  const double ni = norm(i);
  double acc = 0.0;
  for (int v : members) {
    const double nv = norm(v);
    if (ni == 0.0 || nv == 0.0) continue;  // zero-norm cosine treated as 0
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += h.at(i, j) * h.at(v, j);
    acc += dot / (ni * nv);
  }
  return acc / static_cast<double>(members.size());
}
}  // namespace

std::array<double, 2> center_similarity(int batch_index, const ActionAssignment& assignment,
                                        const NeighborhoodSets& sets, const Tensor& hidden_phi,
                                        const Tensor& hidden_psi) {
  const int i = assignment.batch.at(static_cast<size_t>(batch_index));
  const bool phi_teaches = assignment.a1.at(static_cast<size_t>(batch_index)) == 0;
  const auto& members = phi_teaches ? sets.phi.at(static_cast<size_t>(batch_index))
                                    : sets.psi.at(static_cast<size_t>(batch_index));
  if (members.empty()) return {0.0, 0.0};
  // First entry: center similarity in the distilled (teacher) network.
  if (phi_teaches)
    return {mean_cosine(hidden_phi, i, members), mean_cosine(hidden_psi, i, members)};
  return {mean_cosine(hidden_psi, i, members), mean_cosine(hidden_phi, i, members)};
}

std::vector<double> build_struct_state(const std::vector<double>& node_state,
                                       const std::array<double, 2>& center_sim) {
  std::vector<double> s = node_state;
  s.push_back(center_sim[0]);
  s.push_back(center_sim[1]);
  return s;
}

double compute_reward(const std::vector<double>& batch_losses_phi,
                      const std::vector<double>& batch_losses_psi,
                      const std::vector<double>& neighbor_losses, double gamma) {
  if (batch_losses_phi.empty() || batch_losses_phi.size() != batch_losses_psi.size())
    throw std::invalid_argument("compute_reward: empty or mismatched batch losses");
  double batch_sum = 0.0;
  for (size_t k = 0; k < batch_losses_phi.size(); ++k)
    batch_sum += batch_losses_phi[k] + batch_losses_psi[k];
  double r = -batch_sum / static_cast<double>(batch_losses_phi.size());
  if (!neighbor_losses.empty()) {
    double ns = 0.0;
    for (double v : neighbor_losses) ns += v;
    r -= gamma * ns / static_cast<double>(neighbor_losses.size());
  }
  return r;
}

void policy_update(PolicyNet& theta, PolicyNet& delta, const std::vector<ActionRecord>& history,
                   double eta) {
  if (history.empty()) return;
  const double inv_b = 1.0 / static_cast<double>(history.size());

  auto ascend = [&](PolicyNet& net, bool level_one) {
    std::vector<size_t> idx;
    for (size_t k = 0; k < history.size(); ++k) {
      const auto& r = history[k];
      if ((level_one && r.update_theta) || (!level_one && r.update_delta)) idx.push_back(k);
    }
    if (idx.empty()) return;
    Tensor states(static_cast<int>(idx.size()), net.in_dim);
    std::vector<int> actions;
    Tensor weights(static_cast<int>(idx.size()), 1);
    for (size_t row = 0; row < idx.size(); ++row) {
      const auto& r = history[idx[row]];
      const auto& s = level_one ? r.state1 : r.state2;
      if (static_cast<int>(s.size()) != net.in_dim)
        throw std::invalid_argument("policy_update: state width mismatch");
      for (int j = 0; j < net.in_dim; ++j) states.at(static_cast<int>(row), j) = s[static_cast<size_t>(j)];
      actions.push_back(level_one ? r.a1 : r.a2);
      weights.at(static_cast<int>(row), 0) = (r.reward - r.baseline) * inv_b;
    }
    Tape tape;
    std::vector<Var> pvars;
    Var probs = policy_forward(tape, net, tape.constant(std::move(states)), pvars);
    Var log_taken = tape.log_clamped(tape.row_pick(probs, actions));
    Var objective = tape.sum_all(tape.mul(tape.constant(std::move(weights)), log_taken));
    tape.backward(objective);
    for (size_t p = 0; p < net.params.size(); ++p) {
      const Tensor& g = tape.grad(pvars[p]);
      Tensor& w = net.params[p];
      for (int i = 0; i < w.size(); ++i) w.data[i] += eta * g.data[i];
    }
  };

  ascend(theta, true);
  ascend(delta, false);
}

}  // namespace freekd
