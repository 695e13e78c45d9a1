#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "freekd/trainer.hpp"

namespace freekd::cli {

// Flat key = value config file; '#' starts a comment; unknown keys are errors.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string dataset;
  TrainConfig train;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::map<std::string, std::string> config_echo(const RunConfig& cfg);
RunConfig config_from_echo(const std::map<std::string, std::string>& kv);

// Runs one training job and writes the run directory artifacts
// (metrics.json, curves.csv, actions.csv, probe.csv, node_losses.csv,
// models.json).
void run_training(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Entry point used by the binary; returns the process exit code.
int run(const std::vector<std::string>& args);

struct ReportRow {
  std::string variant;
  std::string arch_phi;
  std::string arch_psi;
  double mean_f1_phi = 0.0;
  double std_f1_phi = 0.0;
  double mean_f1_psi = 0.0;
  double std_f1_psi = 0.0;
  bool has_improvement = false;
  double improvement_vs_independent = 0.0;
  int runs = 0;
};

std::vector<ReportRow> aggregate_runs(const std::vector<std::filesystem::path>& run_dirs);
void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);

}  // namespace freekd::cli
