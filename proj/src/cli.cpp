#include "freekd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

namespace freekd::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for config key '" + key + "': " + v);
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for config key '" + key + "': " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid value for config key '" + key + "': " + v);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kv.count(key)) throw ConfigError("duplicate config key '" + key + "'");
    kv[key] = value;
  }
  return config_from_echo(kv);
}

RunConfig config_from_echo(const std::map<std::string, std::string>& kv) {
  static const std::vector<std::string> known = {
      "dataset",    "arch_phi",   "arch_psi",  "mu",        "rho",       "gamma",
      "lr_phi",     "lr_psi",     "policy_lr", "dropout",   "weight_decay",
      "hidden",     "layers",     "heads",     "patience",  "max_epochs",
      "seed",       "batch_size", "variant",   "row_normalize"};
  for (const auto& [k, v] : kv) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown config key '" + k + "'");
  }
  static const std::vector<std::string> required = {"dataset", "arch_phi", "arch_psi", "mu",
                                                    "rho",     "gamma",    "seed",     "max_epochs",
                                                    "variant"};
  for (const auto& k : required)
    if (!kv.count(k)) throw ConfigError("missing config key '" + k + "'");

  RunConfig cfg;
  auto get = [&kv](const std::string& k) { return kv.at(k); };
  auto opt = [&kv](const std::string& k, const std::string& dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  };
  cfg.dataset = get("dataset");
  TrainConfig& t = cfg.train;
  try {
    t.arch_phi = arch_from_string(get("arch_phi"));
    t.arch_psi = arch_from_string(get("arch_psi"));
    t.variant = variant_from_string(get("variant"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  t.mu = to_double("mu", get("mu"));
  t.rho = to_double("rho", get("rho"));
  t.gamma = to_double("gamma", get("gamma"));
  t.seed = static_cast<uint64_t>(to_long("seed", get("seed")));
  t.max_epochs = static_cast<int>(to_long("max_epochs", get("max_epochs")));
  t.lr_phi = to_double("lr_phi", opt("lr_phi", "0"));
  t.lr_psi = to_double("lr_psi", opt("lr_psi", "0"));
  t.policy_lr = to_double("policy_lr", opt("policy_lr", "0.01"));
  t.dropout = to_double("dropout", opt("dropout", "0.5"));
  t.weight_decay = to_double("weight_decay", opt("weight_decay", "0.0005"));
  t.hidden = static_cast<int>(to_long("hidden", opt("hidden", "64")));
  t.layers = static_cast<int>(to_long("layers", opt("layers", "2")));
  t.heads = static_cast<int>(to_long("heads", opt("heads", "8")));
  t.patience = static_cast<int>(to_long("patience", opt("patience", "150")));
  t.batch_size = static_cast<int>(to_long("batch_size", opt("batch_size", "0")));
  t.row_normalize = to_bool("row_normalize", opt("row_normalize", "false"));
  if (t.mu < 0 || t.rho < 0) throw ConfigError("invalid value for config key 'mu'/'rho': must be >= 0");
  if (t.max_epochs <= 0) throw ConfigError("invalid value for config key 'max_epochs': must be > 0");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {
std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

std::map<std::string, std::string> config_echo(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  return {
      {"dataset", cfg.dataset},
      {"arch_phi", arch_name(t.arch_phi)},
      {"arch_psi", arch_name(t.arch_psi)},
      {"mu", num(t.mu)},
      {"rho", num(t.rho)},
      {"gamma", num(t.gamma)},
      {"lr_phi", num(t.lr_phi)},
      {"lr_psi", num(t.lr_psi)},
      {"policy_lr", num(t.policy_lr)},
      {"dropout", num(t.dropout)},
      {"weight_decay", num(t.weight_decay)},
      {"hidden", std::to_string(t.hidden)},
      {"layers", std::to_string(t.layers)},
      {"heads", std::to_string(t.heads)},
      {"patience", std::to_string(t.patience)},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"seed", std::to_string(t.seed)},
      {"batch_size", std::to_string(t.batch_size)},
      {"variant", variant_name(t.variant)},
      {"row_normalize", t.row_normalize ? "true" : "false"},
  };
}

namespace {

json tensor_to_json(const Tensor& t) {
  json j;
  j["rows"] = t.rows;
  j["cols"] = t.cols;
  j["data"] = t.data;
  return j;
}

Tensor tensor_from_json(const json& j) {
  Tensor t(j.at("rows").get<int>(), j.at("cols").get<int>());
  t.data = j.at("data").get<std::vector<double>>();
  if (static_cast<int>(t.data.size()) != t.size()) throw std::runtime_error("models.json: bad tensor");
  return t;
}

json model_to_json(const GnnModel& m) {
  json j;
  j["arch"] = arch_name(m.arch);
  j["layers"] = m.layers;
  j["hidden"] = m.hidden;
  j["heads"] = m.heads;
  j["in_dim"] = m.in_dim;
  j["out_dim"] = m.out_dim;
  j["dropout"] = m.dropout;
  j["params"] = json::array();
  for (const Tensor& p : m.params) j["params"].push_back(tensor_to_json(p));
  return j;
}

GnnModel model_from_json(const json& j) {
  GnnModel m;
  m.arch = arch_from_string(j.at("arch").get<std::string>());
  m.layers = j.at("layers").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.heads = j.at("heads").get<int>();
  m.in_dim = j.at("in_dim").get<int>();
  m.out_dim = j.at("out_dim").get<int>();
  m.dropout = j.at("dropout").get<double>();
  for (const auto& pj : j.at("params")) m.params.push_back(tensor_from_json(pj));
  return m;
}

json policy_to_json(const PolicyNet& p) {
  json j;
  j["in_dim"] = p.in_dim;
  j["params"] = json::array();
  for (const Tensor& t : p.params) j["params"].push_back(tensor_to_json(t));
  return j;
}

PolicyNet policy_from_json(const json& j) {
  PolicyNet p;
  p.in_dim = j.at("in_dim").get<int>();
  for (const auto& pj : j.at("params")) p.params.push_back(tensor_from_json(pj));
  return p;
}

uint64_t effective_seed(uint64_t config_seed, const std::optional<uint64_t>& flag_seed) {
  if (flag_seed) return *flag_seed;
  if (const char* env = std::getenv("FREEKD_SEED")) return std::strtoull(env, nullptr, 10);
  return config_seed;
}

}  // namespace

void run_training(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const Graph graph = load_dataset(cfg.dataset);
  TrainResult result = train(graph, cfg.train);
  const Metrics& m = result.metrics;

  json metrics;
  metrics["test_f1_phi"] = m.test_f1_phi;
  metrics["test_f1_psi"] = m.test_f1_psi;
  metrics["best_epoch"] = m.best_epoch;
  metrics["best_val_f1_phi"] = m.best_val_f1_phi;
  metrics["best_val_f1_psi"] = m.best_val_f1_psi;
  metrics["epochs_run"] = m.epochs_run;
  metrics["config"] = config_echo(cfg);
  {
    std::ofstream out(out_dir / "metrics.json");
    out << metrics.dump(2) << '\n';
  }

  write_curves_csv(out_dir / "curves.csv", m);
  write_actions_csv(out_dir / "actions.csv", m);
  write_node_losses_csv(out_dir / "node_losses.csv",
                        per_node_loss_report(graph, result.phi, result.psi, graph.train_mask));

  std::vector<ProbeRow> probe_rows;
  if (!result.theta.params.empty())
    probe_rows = noise_probe(graph, result.phi, result.psi, result.theta, {0.0, 0.5, 1.0},
                             cfg.train.seed);
  write_probe_csv(out_dir / "probe.csv", probe_rows);

  json models;
  models["phi"] = model_to_json(result.phi);
  models["psi"] = model_to_json(result.psi);
  if (!result.theta.params.empty()) {
    models["theta"] = policy_to_json(result.theta);
    models["delta"] = policy_to_json(result.delta);
  }
  {
    std::ofstream out(out_dir / "models.json");
    out << models.dump() << '\n';
  }
}

std::vector<ReportRow> aggregate_runs(const std::vector<fs::path>& run_dirs) {
  struct Group {
    std::vector<double> f1_phi, f1_psi;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Group> groups;
  for (const auto& dir : run_dirs) {
    const fs::path mp = dir / "metrics.json";
    std::ifstream in(mp);
    if (!in) throw std::runtime_error("malformed or missing metrics.json: " + mp.string());
    json j;
    try {
      in >> j;
      const auto& c = j.at("config");
      Group& g = groups[{c.at("variant").get<std::string>(), c.at("arch_phi").get<std::string>(),
                         c.at("arch_psi").get<std::string>()}];
      g.f1_phi.push_back(j.at("test_f1_phi").get<double>());
      g.f1_psi.push_back(j.at("test_f1_psi").get<double>());
    } catch (const json::exception& e) {
      throw std::runtime_error("malformed metrics.json: " + mp.string() + ": " + e.what());
    }
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto pop_std = [&](const std::vector<double>& v) {
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size()));
  };

  std::vector<ReportRow> rows;
  for (const auto& [key, g] : groups) {
    ReportRow r;
    r.variant = std::get<0>(key);
    r.arch_phi = std::get<1>(key);
    r.arch_psi = std::get<2>(key);
    r.mean_f1_phi = mean(g.f1_phi);
    r.std_f1_phi = pop_std(g.f1_phi);
    r.mean_f1_psi = mean(g.f1_psi);
    r.std_f1_psi = pop_std(g.f1_psi);
    r.runs = static_cast<int>(g.f1_phi.size());
    auto base = groups.find({"independent", r.arch_phi, r.arch_psi});
    if (base != groups.end() && r.variant != "independent") {
      r.has_improvement = true;
      r.improvement_vs_independent =
          0.5 * ((r.mean_f1_phi - mean(base->second.f1_phi)) + (r.mean_f1_psi - mean(base->second.f1_psi)));
    }
    rows.push_back(r);
  }
  return rows;
}

void write_report_csv(const fs::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  out.precision(17);
  out << "variant,arch_phi,arch_psi,runs,mean_f1_phi,std_f1_phi,mean_f1_psi,std_f1_psi,"
         "improvement_vs_independent\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.arch_phi << ',' << r.arch_psi << ',' << r.runs << ','
        << r.mean_f1_phi << ',' << r.std_f1_phi << ',' << r.mean_f1_psi << ',' << r.std_f1_psi
        << ',';
    if (r.has_improvement) out << r.improvement_vs_independent;
    out << '\n';
  }
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"FreeKD training engine and experiment harness"};
  app.require_subcommand(1);

  // gen-sbm
  auto* gen = app.add_subcommand("gen-sbm", "Generate a stochastic-block-model dataset directory");
  std::string gen_out;
  SbmParams sbm;
  sbm.nodes_per_block = 150;
  sbm.num_blocks = 4;
  sbm.p_in = 0.08;
  sbm.p_out = 0.01;
  sbm.feature_dim = 16;
  sbm.feature_noise = 1.0;
  sbm.seed = 1;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--n", sbm.nodes_per_block, "Nodes per block");
  gen->add_option("--k", sbm.num_blocks, "Number of blocks");
  gen->add_option("--p-in", sbm.p_in, "Intra-block edge probability");
  gen->add_option("--p-out", sbm.p_out, "Inter-block edge probability");
  gen->add_option("--d", sbm.feature_dim, "Feature dimension");
  gen->add_option("--sigma-f", sbm.feature_noise, "Feature noise stddev");
  gen->add_option("--seed", sbm.seed, "Generator seed");
  gen->add_option("--train-frac", sbm.train_frac, "Training fraction per block");
  gen->add_option("--val-frac", sbm.val_frac, "Validation fraction per block");

  // validate-data
  auto* validate = app.add_subcommand("validate-data", "Validate a dataset directory");
  std::string validate_dir;
  validate->add_option("dir", validate_dir, "Dataset directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train from a config file");
  std::string train_config, train_out;
  std::optional<uint64_t> seed_override;
  tr->add_option("--config", train_config, "Config file path")->required();
  tr->add_option("--out", train_out, "Run output directory")->required();
  tr->add_option("--seed", seed_override, "Seed override");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the ablation variant list over shared seeds");
  std::string ab_config, ab_out, ab_seeds = "1,2,3";
  ab->add_option("--config", ab_config, "Base config file path")->required();
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--seeds", ab_seeds, "Comma-separated seed list");

  // probe
  auto* pr = app.add_subcommand("probe", "Noise-injection policy-probability probe on a finished run");
  std::string pr_run, pr_sigmas = "0,0.5,1.0", pr_out;
  pr->add_option("--run", pr_run, "Run directory containing models.json and metrics.json")->required();
  pr->add_option("--sigmas", pr_sigmas, "Comma-separated noise stddev list");
  pr->add_option("--out", pr_out, "Output CSV (default: <run>/probe.csv)");

  // report
  auto* rp = app.add_subcommand("report", "Aggregate run directories into a summary table");
  std::vector<std::string> rp_dirs;
  std::string rp_out;
  rp->add_option("dirs", rp_dirs, "Run directories")->required();
  rp->add_option("--out", rp_out, "Output CSV path")->required();

  std::vector<const char*> argv;
  argv.push_back("freekd");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto parse_seeds = [](const std::string& s) {
    std::vector<uint64_t> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (!tok.empty()) out.push_back(std::strtoull(tok.c_str(), nullptr, 10));
    }
    return out;
  };
  auto parse_doubles = [](const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
  };

  try {
    if (gen->parsed()) {
      save_dataset(generate_sbm(sbm), gen_out);
      std::cout << "wrote dataset to " << gen_out << '\n';
      return 0;
    }
    if (validate->parsed()) {
      try {
        const Graph g = load_dataset(validate_dir);
        std::cout << "ok: " << g.num_nodes << " nodes, " << g.num_edges() << " edges, "
                  << g.num_classes << " classes\n";
        return 0;
      } catch (const DatasetError& e) {
        std::cerr << "invalid dataset: " << e.what() << '\n';
        return 1;
      }
    }
    if (tr->parsed()) {
      RunConfig cfg = load_config(train_config);
      cfg.train.seed = effective_seed(cfg.train.seed, seed_override);
      run_training(cfg, train_out);
      std::cout << "run written to " << train_out << '\n';
      return 0;
    }
    if (ab->parsed()) {
      RunConfig base = load_config(ab_config);
      const auto seeds = parse_seeds(ab_seeds);
      if (seeds.empty()) throw ConfigError("ablate: empty seed list");
      static const std::vector<std::string> variants = {
          "independent",  "freekd",         "freekd-node", "w.o.-judge",
          "loss-heuristic", "all-neighbors", "all-structures"};
      std::vector<fs::path> dirs;
      for (const auto& vname : variants) {
        for (uint64_t seed : seeds) {
          RunConfig cfg = base;
          cfg.train.variant = variant_from_string(vname);
          cfg.train.seed = seed;
          const fs::path dir = fs::path(ab_out) / vname / ("seed_" + std::to_string(seed));
          run_training(cfg, dir);
          dirs.push_back(dir);
          std::cout << vname << " seed " << seed << " done\n";
        }
      }
      write_report_csv(fs::path(ab_out) / "ablation.csv", aggregate_runs(dirs));
      std::cout << "ablation summary written to " << (fs::path(ab_out) / "ablation.csv") << '\n';
      return 0;
    }
    if (pr->parsed()) {
      const fs::path run_dir(pr_run);
      json models_j, metrics_j;
      {
        std::ifstream in(run_dir / "models.json");
        if (!in) throw std::runtime_error("missing models.json in " + pr_run);
        in >> models_j;
      }
      {
        std::ifstream in(run_dir / "metrics.json");
        if (!in) throw std::runtime_error("missing metrics.json in " + pr_run);
        in >> metrics_j;
      }
      if (!models_j.contains("theta"))
        throw std::runtime_error("run has no trained policy (non-agent variant); nothing to probe");
      const GnnModel phi = model_from_json(models_j.at("phi"));
      const GnnModel psi = model_from_json(models_j.at("psi"));
      const PolicyNet theta = policy_from_json(models_j.at("theta"));
      const std::string dataset = metrics_j.at("config").at("dataset").get<std::string>();
      const uint64_t seed = std::strtoull(
          metrics_j.at("config").at("seed").get<std::string>().c_str(), nullptr, 10);
      const Graph g = load_dataset(dataset);
      const auto rows = noise_probe(g, phi, psi, theta, parse_doubles(pr_sigmas), seed);
      const fs::path out = pr_out.empty() ? run_dir / "probe.csv" : fs::path(pr_out);
      write_probe_csv(out, rows);
      std::cout << "probe written to " << out << '\n';
      return 0;
    }
    if (rp->parsed()) {
      std::vector<fs::path> dirs(rp_dirs.begin(), rp_dirs.end());
      write_report_csv(rp_out, aggregate_runs(dirs));
      std::cout << "report written to " << rp_out << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace freekd::cli
