#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "freekd/agent.hpp"
#include "freekd/graph.hpp"
#include "freekd/models.hpp"

namespace freekd {

enum class Variant {
  freekd,
  freekd_node,
  wo_judge,
  loss_heuristic,
  all_neighbors,
  all_structures,
  independent,
};

Variant variant_from_string(const std::string& s);
std::string variant_name(Variant v);

struct TrainConfig {
  Arch arch_phi = Arch::gcn;
  Arch arch_psi = Arch::gcn;
  double mu = 1.0;
  double rho = 1.0;
  double gamma = 0.3;
  double lr_phi = 0.0;  // 0 -> architecture default (0.05 gat, 0.01 otherwise)
  double lr_psi = 0.0;
  double policy_lr = 0.01;
  double dropout = 0.5;
  double weight_decay = 0.0005;
  int hidden = 64;
  int layers = 2;
  int heads = 8;
  int patience = 150;
  int max_epochs = 500;
  uint64_t seed = 1;
  int batch_size = 0;  // 0 = full training set
  Variant variant = Variant::freekd;
  bool row_normalize = false;
};

double default_model_lr(Arch a);
// lr(epoch) = lr0 * 0.1^floor(epoch / 100), epoch counted from 0.
double scheduled_lr(double lr0, int epoch);

struct EpochStats {
  int epoch = 0;
  double loss_phi = 0.0;
  double loss_psi = 0.0;
  double val_f1_phi = 0.0;
  double val_f1_psi = 0.0;
  double mean_reward = 0.0;
};

struct ActionLogRow {
  int epoch = 0;
  int node = 0;
  int a1 = 0;
  int a2 = 0;
  double prob1 = 0.0;  // probability of the taken node-level action
  double prob2 = 0.0;
};

struct Metrics {
  std::vector<EpochStats> curves;
  std::vector<ActionLogRow> actions;
  double test_f1_phi = 0.0;
  double test_f1_psi = 0.0;
  double best_val_f1_phi = 0.0;
  double best_val_f1_psi = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
};

struct TrainResult {
  GnnModel phi;
  GnnModel psi;
  PolicyNet theta;
  PolicyNet delta;
  Metrics metrics;
};

TrainResult train(const Graph& g, const TrainConfig& cfg);

// Trains one model by itself with the same per-role random streams as train();
// role 0 is Phi, role 1 is Psi.
struct SingleResult {
  GnnModel model;
  std::vector<double> val_f1;
  double test_f1 = 0.0;
  int best_epoch = -1;
};
SingleResult train_single(const Graph& g, const TrainConfig& cfg, int role);

double micro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<int>& node_set);

struct ProbeRow {
  int node = 0;
  double sigma = 0.0;
  double prob_phi_teacher = 0.0;
  double prob_psi_teacher = 0.0;
};

// Perturbs a copy of Phi's parameters with Gaussian noise per sigma and records
// the node-level policy probabilities at every labeled training node.
std::vector<ProbeRow> noise_probe(const Graph& g, const GnnModel& phi, const GnnModel& psi,
                                  const PolicyNet& theta, const std::vector<double>& sigmas,
                                  uint64_t seed);

double mean_prob_phi_teacher(const std::vector<ProbeRow>& rows, double sigma);

struct NodeLossRow {
  int node = 0;
  double ce_phi = 0.0;
  double ce_psi = 0.0;
};
std::vector<NodeLossRow> per_node_loss_report(const Graph& g, const GnnModel& phi,
                                              const GnnModel& psi, const std::vector<int>& nodes);

// Run-directory artifacts: curves.csv, actions.csv, probe.csv, node_losses.csv.
void write_curves_csv(const std::filesystem::path& path, const Metrics& m);
void write_actions_csv(const std::filesystem::path& path, const Metrics& m);
void write_probe_csv(const std::filesystem::path& path, const std::vector<ProbeRow>& rows);
void write_node_losses_csv(const std::filesystem::path& path, const std::vector<NodeLossRow>& rows);

uint64_t mix_seed(uint64_t seed, uint64_t tag);

}  // namespace freekd
