#include "freekd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "freekd/adam.hpp"
#include "freekd/distill.hpp"

namespace freekd {

Variant variant_from_string(const std::string& s) {
  if (s == "freekd") return Variant::freekd;
  if (s == "freekd-node") return Variant::freekd_node;
  if (s == "w.o.-judge") return Variant::wo_judge;
  if (s == "loss-heuristic") return Variant::loss_heuristic;
  if (s == "all-neighbors") return Variant::all_neighbors;
  if (s == "all-structures") return Variant::all_structures;
  if (s == "independent") return Variant::independent;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::freekd: return "freekd";
    case Variant::freekd_node: return "freekd-node";
    case Variant::wo_judge: return "w.o.-judge";
    case Variant::loss_heuristic: return "loss-heuristic";
    case Variant::all_neighbors: return "all-neighbors";
    case Variant::all_structures: return "all-structures";
    case Variant::independent: return "independent";
  }
  return "?";
}

double default_model_lr(Arch a) { return a == Arch::gat ? 0.05 : 0.01; }

double scheduled_lr(double lr0, int epoch) { return lr0 * std::pow(0.1, epoch / 100); }

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  // splitmix64 over seed xor tag-stride
  uint64_t z = seed + tag * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double micro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<int>& node_set) {
  if (node_set.empty()) throw std::invalid_argument("micro_f1: empty node set");
  // Global TP/FP/FN aggregation; for single-label prediction FP == FN and the
  // score reduces to accuracy.
  long tp = 0, fp = 0, fn = 0;
  for (int i : node_set) {
    if (predictions.at(static_cast<size_t>(i)) == labels.at(static_cast<size_t>(i))) {
      ++tp;
    } else {
      ++fp;
      ++fn;
    }
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

namespace {

constexpr uint64_t kTagPhi = 1, kTagPsi = 2, kTagAgent = 3, kTagBatch = 4, kTagProbe = 5;

bool agent_variant(Variant v) {
  return v == Variant::freekd || v == Variant::freekd_node || v == Variant::all_neighbors ||
         v == Variant::all_structures;
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& train_mask, int batch_size,
                                           std::mt19937_64& rng) {
  if (batch_size <= 0 || batch_size >= static_cast<int>(train_mask.size()))
    return {train_mask};
  std::vector<int> ids = train_mask;
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<int>> batches;
  for (size_t k = 0; k < ids.size(); k += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(ids.size(), k + static_cast<size_t>(batch_size));
    batches.emplace_back(ids.begin() + static_cast<long>(k), ids.begin() + static_cast<long>(end));
  }
  return batches;
}

std::vector<double> eval_ce(const Tensor& probs, const std::vector<int>& labels,
                            const std::vector<int>& nodes) {
  std::vector<double> out;
  out.reserve(nodes.size());
  for (int i : nodes) {
    const double p = probs.at(i, labels.at(static_cast<size_t>(i)));
    out.push_back(-std::log(std::max(p, 1e-12)));
  }
  return out;
}

std::vector<int> batch_neighbors(const Graph& g, int i, const std::set<int>& allowed) {
  std::vector<int> out;
  for (int v : g.neighbors[static_cast<size_t>(i)])
    if (allowed.count(v)) out.push_back(v);
  return out;
}

void check_finite_loss(double v, const char* which) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("training diverged: non-finite loss for ") + which);
}

}  // namespace

TrainResult train(const Graph& g_in, const TrainConfig& cfg) {
  Graph graph = g_in;
  if (cfg.row_normalize) row_normalize_features(graph);
  const bool need_gat = cfg.arch_phi == Arch::gat || cfg.arch_psi == Arch::gat;
  const GraphOps ops = make_graph_ops(graph, need_gat);
  const int c = graph.num_classes;

  std::mt19937_64 rng_phi(mix_seed(cfg.seed, kTagPhi));
  std::mt19937_64 rng_psi(mix_seed(cfg.seed, kTagPsi));
  std::mt19937_64 rng_agent(mix_seed(cfg.seed, kTagAgent));
  std::mt19937_64 rng_batch(mix_seed(cfg.seed, kTagBatch));

  TrainResult res;
  res.phi = make_model(cfg.arch_phi, graph.feature_dim, c, cfg.layers, cfg.hidden, cfg.heads,
                       cfg.dropout, rng_phi);
  res.psi = make_model(cfg.arch_psi, graph.feature_dim, c, cfg.layers, cfg.hidden, cfg.heads,
                       cfg.dropout, rng_psi);

  const bool agent_on = agent_variant(cfg.variant);
  const bool distill_on = cfg.variant != Variant::independent;
  const bool struct_on = distill_on && cfg.variant != Variant::freekd_node && cfg.rho != 0.0;
  if (agent_on) {
    res.theta = make_policy(2 * c + 2, rng_agent);
    res.delta = make_policy(2 * c + 4, rng_agent);
  }

  AdamConfig adam_phi_cfg, adam_psi_cfg;
  adam_phi_cfg.weight_decay = cfg.weight_decay;
  adam_psi_cfg.weight_decay = cfg.weight_decay;
  const double lr0_phi = cfg.lr_phi > 0.0 ? cfg.lr_phi : default_model_lr(cfg.arch_phi);
  const double lr0_psi = cfg.lr_psi > 0.0 ? cfg.lr_psi : default_model_lr(cfg.arch_psi);
  AdamState adam_phi, adam_psi;

  const std::set<int> train_set(graph.train_mask.begin(), graph.train_mask.end());
  BaselineTable baselines(graph.num_nodes);

  Metrics& m = res.metrics;
  double best_mean_val = -1.0;
  std::vector<Tensor> best_phi, best_psi;
  int bad_epochs = 0;
  // The independent variant reproduces two solo runs bit for bit, so each
  // model keeps its own best checkpoint and stops on its own patience counter.
  const bool per_role = cfg.variant == Variant::independent;
  double best_val_solo_phi = -1.0, best_val_solo_psi = -1.0;
  int bad_solo_phi = 0, bad_solo_psi = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    adam_phi_cfg.lr = scheduled_lr(lr0_phi, epoch);
    adam_psi_cfg.lr = scheduled_lr(lr0_psi, epoch);
    const auto batches = make_batches(graph.train_mask, cfg.batch_size, rng_batch);
    const bool phi_active = !per_role || bad_solo_phi < cfg.patience;
    const bool psi_active = !per_role || bad_solo_psi < cfg.patience;

    double ep_loss_phi = 0.0, ep_loss_psi = 0.0, ep_reward = 0.0;
    long reward_count = 0;

    for (const auto& batch : batches) {
      if (per_role) {
        // A frozen role consumes no randomness and takes no steps, exactly
        // like its finished solo run.
        if (phi_active) {
          Tape tape;
          std::vector<Var> pvars;
          Forward f = model_forward(tape, graph, ops, res.phi, pvars, true, rng_phi);
          Var loss = tape.sum_all(per_node_ce(tape, f.probs, graph.labels, batch));
          check_finite_loss(tape.value(loss).data[0], "phi");
          ep_loss_phi += tape.value(loss).data[0];
          tape.backward(loss);
          std::vector<Tensor> grads;
          for (Var v : pvars) grads.push_back(tape.grad(v));
          adam_step(res.phi.params, grads, adam_phi, adam_phi_cfg);
        }
        if (psi_active) {
          Tape tape;
          std::vector<Var> pvars;
          Forward f = model_forward(tape, graph, ops, res.psi, pvars, true, rng_psi);
          Var loss = tape.sum_all(per_node_ce(tape, f.probs, graph.labels, batch));
          check_finite_loss(tape.value(loss).data[0], "psi");
          ep_loss_psi += tape.value(loss).data[0];
          tape.backward(loss);
          std::vector<Tensor> grads;
          for (Var v : pvars) grads.push_back(tape.grad(v));
          adam_step(res.psi.params, grads, adam_psi, adam_psi_cfg);
        }
        continue;
      }
      const std::set<int> batch_set(batch.begin(), batch.end());
      Tape tphi, tpsi;
      std::vector<Var> pv_phi, pv_psi;
      Forward fphi = model_forward(tphi, graph, ops, res.phi, pv_phi, true, rng_phi);
      Forward fpsi = model_forward(tpsi, graph, ops, res.psi, pv_psi, true, rng_psi);
      Var ce_phi_vec = per_node_ce(tphi, fphi.probs, graph.labels, batch);
      Var ce_psi_vec = per_node_ce(tpsi, fpsi.probs, graph.labels, batch);
      Var loss_phi = tphi.sum_all(ce_phi_vec);
      Var loss_psi = tpsi.sum_all(ce_psi_vec);

      // Teacher-side snapshots: copies, so no gradient reaches the peer model.
      const Tensor probs_phi_snap = tphi.value(fphi.probs);
      const Tensor probs_psi_snap = tpsi.value(fpsi.probs);
      const Tensor hidden_phi_snap = tphi.value(fphi.hidden);
      const Tensor hidden_psi_snap = tpsi.value(fpsi.hidden);
      std::vector<double> ce_phi_vals(batch.size()), ce_psi_vals(batch.size());
      for (size_t k = 0; k < batch.size(); ++k) {
        ce_phi_vals[k] = tphi.value(ce_phi_vec).at(static_cast<int>(k), 0);
        ce_psi_vals[k] = tpsi.value(ce_psi_vec).at(static_cast<int>(k), 0);
      }

      ActionAssignment asg;
      asg.batch = batch;
      asg.a1.assign(batch.size(), 0);
      asg.a2.assign(batch.size(), 1);
      std::vector<ActionRecord> records;

      if (distill_on) {
        records.resize(batch.size());
        for (size_t k = 0; k < batch.size(); ++k) {
          ActionRecord& rec = records[k];
          rec.node = batch[k];
          rec.state1 = build_node_state(batch[k], probs_phi_snap, probs_psi_snap,
                                        ce_phi_vals[k], ce_psi_vals[k]);
          switch (cfg.variant) {
            case Variant::freekd:
            case Variant::freekd_node:
            case Variant::all_neighbors:
            case Variant::all_structures: {
              const ActionSample s = policy_act(res.theta, rec.state1, rng_agent);
              rec.a1 = s.action;
              rec.log_prob1 = s.log_prob;
              asg.a1[k] = static_cast<uint8_t>(s.action);
              break;
            }
            case Variant::loss_heuristic:
              asg.a1[k] = ce_phi_vals[k] <= ce_psi_vals[k] ? 0 : 1;
              rec.a1 = asg.a1[k];
              break;
            case Variant::wo_judge:
            case Variant::independent:
              break;
          }
        }

        NeighborhoodSets sets;
        if (cfg.variant == Variant::all_neighbors || cfg.variant == Variant::wo_judge) {
          sets.phi.resize(batch.size());
          sets.psi.resize(batch.size());
          for (size_t k = 0; k < batch.size(); ++k) {
            auto nb = batch_neighbors(graph, batch[k], batch_set);
            sets.phi[k] = nb;
            sets.psi[k] = std::move(nb);
          }
        } else {
          sets = select_neighborhoods(asg, graph);
        }

        for (size_t k = 0; k < batch.size(); ++k) {
          ActionRecord& rec = records[k];
          switch (cfg.variant) {
            case Variant::freekd:
            case Variant::freekd_node:
            case Variant::all_neighbors: {
              const auto u = center_similarity(static_cast<int>(k), asg, sets, hidden_phi_snap,
                                               hidden_psi_snap);
              rec.state2 = build_struct_state(rec.state1, u);
              const ActionSample s = policy_act(res.delta, rec.state2, rng_agent);
              rec.a2 = s.action;
              rec.log_prob2 = s.log_prob;
              asg.a2[k] = static_cast<uint8_t>(s.action);
              break;
            }
            case Variant::all_structures:
              rec.a2 = 1;
              rec.update_delta = false;
              break;
            default:  // loss-heuristic, w.o.-judge: structure always propagated
              rec.a2 = 1;
              break;
          }
        }

        std::vector<double> ng_psi, ng_phi, sg_psi, sg_phi;
        if (cfg.variant == Variant::wo_judge) {
          // Both directions active at every node; structures always propagated.
          ng_psi.assign(batch.size(), 1.0);
          ng_phi.assign(batch.size(), 1.0);
          sg_psi.assign(batch.size(), 1.0);
          sg_phi.assign(batch.size(), 1.0);
        } else {
          ng_psi = node_gate_for_psi(asg);
          ng_phi = node_gate_for_phi(asg);
          sg_psi = struct_gate_for_psi(asg);
          sg_phi = struct_gate_for_phi(asg);
        }

        if (cfg.mu != 0.0) {
          Var lnp = node_distill_loss(tpsi, fpsi.probs, probs_phi_snap, batch, ng_psi);
          Var lnf = node_distill_loss(tphi, fphi.probs, probs_psi_snap, batch, ng_phi);
          loss_psi = tpsi.add(loss_psi, tpsi.scale(lnp, cfg.mu));
          loss_phi = tphi.add(loss_phi, tphi.scale(lnf, cfg.mu));
        }
        if (struct_on) {
          Var lsp = struct_distill_loss(tpsi, fpsi.hidden, hidden_phi_snap, batch, sets.phi, sg_psi);
          Var lsf = struct_distill_loss(tphi, fphi.hidden, hidden_psi_snap, batch, sets.psi, sg_phi);
          loss_psi = tpsi.add(loss_psi, tpsi.scale(lsp, cfg.rho));
          loss_phi = tphi.add(loss_phi, tphi.scale(lsf, cfg.rho));
        }
      }

      const double loss_phi_val = tphi.value(loss_phi).data[0];
      const double loss_psi_val = tpsi.value(loss_psi).data[0];
      check_finite_loss(loss_phi_val, "phi");
      check_finite_loss(loss_psi_val, "psi");
      ep_loss_phi += loss_phi_val;
      ep_loss_psi += loss_psi_val;

      // Phi updates first; both losses were built against pre-update snapshots.
      tphi.backward(loss_phi);
      std::vector<Tensor> grads_phi;
      for (Var v : pv_phi) grads_phi.push_back(tphi.grad(v));
      adam_step(res.phi.params, grads_phi, adam_phi, adam_phi_cfg);

      tpsi.backward(loss_psi);
      std::vector<Tensor> grads_psi;
      for (Var v : pv_psi) grads_psi.push_back(tpsi.grad(v));
      adam_step(res.psi.params, grads_psi, adam_psi, adam_psi_cfg);

      if (agent_on) {
        // Delayed rewards from the post-update models.
        const EvalResult ev_phi = evaluate_model(graph, ops, res.phi);
        const EvalResult ev_psi = evaluate_model(graph, ops, res.psi);
        const auto after_phi = eval_ce(ev_phi.probs, graph.labels, batch);
        const auto after_psi = eval_ce(ev_psi.probs, graph.labels, batch);
        for (size_t k = 0; k < batch.size(); ++k) {
          const auto nb = batch_neighbors(graph, batch[k], train_set);
          std::vector<double> nb_losses;
          if (!nb.empty()) {
            const auto nphi = eval_ce(ev_phi.probs, graph.labels, nb);
            const auto npsi = eval_ce(ev_psi.probs, graph.labels, nb);
            for (size_t j = 0; j < nb.size(); ++j) nb_losses.push_back(nphi[j] + npsi[j]);
          }
          ActionRecord& rec = records[k];
          rec.reward = compute_reward(after_phi, after_psi, nb_losses, cfg.gamma);
          rec.baseline = baselines.get(rec.node);
          ep_reward += rec.reward;
          ++reward_count;
        }
        policy_update(res.theta, res.delta, records, cfg.policy_lr);
        for (const ActionRecord& rec : records) baselines.store(rec.node, rec.reward);
      }

      if (distill_on) {
        for (const ActionRecord& rec : records) {
          ActionLogRow row;
          row.epoch = epoch;
          row.node = rec.node;
          row.a1 = rec.a1;
          row.a2 = rec.a2;
          row.prob1 = rec.log_prob1 == 0.0 ? 0.0 : std::exp(rec.log_prob1);
          row.prob2 = rec.log_prob2 == 0.0 ? 0.0 : std::exp(rec.log_prob2);
          m.actions.push_back(row);
        }
      }
    }

    const EvalResult ev_phi = evaluate_model(graph, ops, res.phi);
    const EvalResult ev_psi = evaluate_model(graph, ops, res.psi);
    const auto pred_phi = predict_labels(ev_phi.logits);
    const auto pred_psi = predict_labels(ev_psi.logits);
    EpochStats st;
    st.epoch = epoch;
    st.loss_phi = ep_loss_phi / static_cast<double>(batches.size());
    st.loss_psi = ep_loss_psi / static_cast<double>(batches.size());
    st.val_f1_phi = micro_f1(pred_phi, graph.labels, graph.val_mask);
    st.val_f1_psi = micro_f1(pred_psi, graph.labels, graph.val_mask);
    st.mean_reward = reward_count > 0 ? ep_reward / static_cast<double>(reward_count) : 0.0;
    m.curves.push_back(st);
    m.epochs_run = epoch + 1;

    const double mean_val = 0.5 * (st.val_f1_phi + st.val_f1_psi);
    if (per_role) {
      if (st.val_f1_phi > best_val_solo_phi) {
        best_val_solo_phi = st.val_f1_phi;
        best_phi = res.phi.params;
        bad_solo_phi = 0;
      } else {
        ++bad_solo_phi;
      }
      if (st.val_f1_psi > best_val_solo_psi) {
        best_val_solo_psi = st.val_f1_psi;
        best_psi = res.psi.params;
        bad_solo_psi = 0;
      } else {
        ++bad_solo_psi;
      }
      if (mean_val > best_mean_val) {
        best_mean_val = mean_val;
        m.best_epoch = epoch;
      }
      m.best_val_f1_phi = best_val_solo_phi;
      m.best_val_f1_psi = best_val_solo_psi;
      if (bad_solo_phi >= cfg.patience && bad_solo_psi >= cfg.patience) break;
    } else if (mean_val > best_mean_val) {
      best_mean_val = mean_val;
      m.best_epoch = epoch;
      m.best_val_f1_phi = st.val_f1_phi;
      m.best_val_f1_psi = st.val_f1_psi;
      best_phi = res.phi.params;
      best_psi = res.psi.params;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }

  if (!best_phi.empty()) {
    res.phi.params = best_phi;
    res.psi.params = best_psi;
  }
  const EvalResult ev_phi = evaluate_model(graph, ops, res.phi);
  const EvalResult ev_psi = evaluate_model(graph, ops, res.psi);
  m.test_f1_phi = micro_f1(predict_labels(ev_phi.logits), graph.labels, graph.test_mask);
  m.test_f1_psi = micro_f1(predict_labels(ev_psi.logits), graph.labels, graph.test_mask);
  return res;
}

SingleResult train_single(const Graph& g_in, const TrainConfig& cfg, int role) {
  if (role != 0 && role != 1) throw std::invalid_argument("train_single: role must be 0 or 1");
  Graph graph = g_in;
  if (cfg.row_normalize) row_normalize_features(graph);
  const Arch arch = role == 0 ? cfg.arch_phi : cfg.arch_psi;
  const GraphOps ops = make_graph_ops(graph, arch == Arch::gat);
  std::mt19937_64 rng_model(mix_seed(cfg.seed, role == 0 ? kTagPhi : kTagPsi));
  std::mt19937_64 rng_batch(mix_seed(cfg.seed, kTagBatch));

  SingleResult res;
  res.model = make_model(arch, graph.feature_dim, graph.num_classes, cfg.layers, cfg.hidden,
                         cfg.heads, cfg.dropout, rng_model);
  AdamConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  const double lr0 = (role == 0 ? cfg.lr_phi : cfg.lr_psi) > 0.0
                         ? (role == 0 ? cfg.lr_phi : cfg.lr_psi)
                         : default_model_lr(arch);
  AdamState adam;
  double best_val = -1.0;
  std::vector<Tensor> best_params;
  int bad_epochs = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    acfg.lr = scheduled_lr(lr0, epoch);
    const auto batches = make_batches(graph.train_mask, cfg.batch_size, rng_batch);
    for (const auto& batch : batches) {
      Tape tape;
      std::vector<Var> pvars;
      Forward f = model_forward(tape, graph, ops, res.model, pvars, true, rng_model);
      Var loss = tape.sum_all(per_node_ce(tape, f.probs, graph.labels, batch));
      check_finite_loss(tape.value(loss).data[0], "model");
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (Var v : pvars) grads.push_back(tape.grad(v));
      adam_step(res.model.params, grads, adam, acfg);
    }
    const EvalResult ev = evaluate_model(graph, ops, res.model);
    const double val = micro_f1(predict_labels(ev.logits), graph.labels, graph.val_mask);
    res.val_f1.push_back(val);
    if (val > best_val) {
      best_val = val;
      res.best_epoch = epoch;
      best_params = res.model.params;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }
  if (!best_params.empty()) res.model.params = best_params;
  const EvalResult ev = evaluate_model(graph, ops, res.model);
  res.test_f1 = micro_f1(predict_labels(ev.logits), graph.labels, graph.test_mask);
  return res;
}

std::vector<ProbeRow> noise_probe(const Graph& g, const GnnModel& phi, const GnnModel& psi,
                                  const PolicyNet& theta, const std::vector<double>& sigmas,
                                  uint64_t seed) {
  const bool need_gat = phi.arch == Arch::gat || psi.arch == Arch::gat;
  const GraphOps ops = make_graph_ops(g, need_gat);
  const EvalResult ev_psi = evaluate_model(g, ops, psi);
  const auto ce_psi = eval_ce(ev_psi.probs, g.labels, g.train_mask);

  std::vector<ProbeRow> rows;
  for (double sigma : sigmas) {
    GnnModel noisy = phi;
    if (sigma > 0.0) {
      std::mt19937_64 rng(mix_seed(seed, kTagProbe));
      std::normal_distribution<double> gauss(0.0, sigma);
      for (Tensor& p : noisy.params)
        for (double& v : p.data) v += gauss(rng);
    }
    const EvalResult ev_phi = evaluate_model(g, ops, noisy);
    const auto ce_phi = eval_ce(ev_phi.probs, g.labels, g.train_mask);
    for (size_t k = 0; k < g.train_mask.size(); ++k) {
      const int i = g.train_mask[k];
      const auto state = build_node_state(i, ev_phi.probs, ev_psi.probs, ce_phi[k], ce_psi[k]);
      const auto p = policy_probs(theta, state);
      ProbeRow row;
      row.node = i;
      row.sigma = sigma;
      row.prob_phi_teacher = p[0];  // a=0 means Phi teaches
      row.prob_psi_teacher = p[1];
      rows.push_back(row);
    }
  }
  return rows;
}

double mean_prob_phi_teacher(const std::vector<ProbeRow>& rows, double sigma) {
  double acc = 0.0;
  long n = 0;
  for (const auto& r : rows)
    if (r.sigma == sigma) {
      acc += r.prob_phi_teacher;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("mean_prob_phi_teacher: sigma not present");
  return acc / static_cast<double>(n);
}

std::vector<NodeLossRow> per_node_loss_report(const Graph& g, const GnnModel& phi,
                                              const GnnModel& psi, const std::vector<int>& nodes) {
  const bool need_gat = phi.arch == Arch::gat || psi.arch == Arch::gat;
  const GraphOps ops = make_graph_ops(g, need_gat);
  const EvalResult ev_phi = evaluate_model(g, ops, phi);
  const EvalResult ev_psi = evaluate_model(g, ops, psi);
  const auto ce_phi = eval_ce(ev_phi.probs, g.labels, nodes);
  const auto ce_psi = eval_ce(ev_psi.probs, g.labels, nodes);
  std::vector<NodeLossRow> rows;
  for (size_t k = 0; k < nodes.size(); ++k) rows.push_back({nodes[k], ce_phi[k], ce_psi[k]});
  return rows;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_curves_csv(const std::filesystem::path& path, const Metrics& m) {
  std::ofstream out(path);
  out << "epoch,loss_phi,loss_psi,val_f1_phi,val_f1_psi,mean_reward\n";
  for (const auto& s : m.curves)
    out << s.epoch << ',' << fmt(s.loss_phi) << ',' << fmt(s.loss_psi) << ',' << fmt(s.val_f1_phi)
        << ',' << fmt(s.val_f1_psi) << ',' << fmt(s.mean_reward) << '\n';
}

void write_actions_csv(const std::filesystem::path& path, const Metrics& m) {
  std::ofstream out(path);
  out << "epoch,node,a1,a2,prob1,prob2\n";
  for (const auto& r : m.actions)
    out << r.epoch << ',' << r.node << ',' << r.a1 << ',' << r.a2 << ',' << fmt(r.prob1) << ','
        << fmt(r.prob2) << '\n';
}

void write_probe_csv(const std::filesystem::path& path, const std::vector<ProbeRow>& rows) {
  std::ofstream out(path);
  out << "node,sigma,prob_phi_teacher,prob_psi_teacher\n";
  for (const auto& r : rows)
    out << r.node << ',' << fmt(r.sigma) << ',' << fmt(r.prob_phi_teacher) << ','
        << fmt(r.prob_psi_teacher) << '\n';
}

void write_node_losses_csv(const std::filesystem::path& path, const std::vector<NodeLossRow>& rows) {
  std::ofstream out(path);
  out << "node,ce_phi,ce_psi\n";
  for (const auto& r : rows)
    out << r.node << ',' << fmt(r.ce_phi) << ',' << fmt(r.ce_psi) << '\n';
}

}  // namespace freekd
