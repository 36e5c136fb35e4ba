#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fspda/harness.hpp"
#include "fspda/spectral.hpp"

namespace {

using namespace fspda;

// "ring:8", "complete:5", "er:10:0.5[:seed]", "file:<path>"
TopologySpec parse_topology_arg(const std::string& arg) {
  std::vector<std::string> parts;
  std::stringstream ss(arg);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  if (parts.empty()) throw std::invalid_argument("empty topology spec");
  TopologySpec t;
  if (parts[0] == "file") {
    if (parts.size() != 2) throw std::invalid_argument("file:<path>");
    t.kind = TopologySpec::Kind::File;
    t.path = parts[1];
    return t;
  }
  if (parts.size() < 2) throw std::invalid_argument("missing agent count");
  t.n = std::stoi(parts[1]);
  if (parts[0] == "ring") t.kind = TopologySpec::Kind::Ring;
  else if (parts[0] == "complete") t.kind = TopologySpec::Kind::Complete;
  else if (parts[0] == "er") {
    t.kind = TopologySpec::Kind::ErdosRenyi;
    if (parts.size() < 3) throw std::invalid_argument("er:<n>:<p>[:seed]");
    t.p = std::stod(parts[2]);
    if (parts.size() > 3) t.seed = std::stoull(parts[3]);
  } else {
    throw std::invalid_argument("unknown topology kind " + parts[0]);
  }
  return t;
}

// "one_edge:s=0.5", "bernoulli:p=0.3,s=1", "full", "periodic:P=5,s=0.5"
SamplerSpec parse_sampler_arg(const std::string& arg) {
  SamplerSpec s;
  auto colon = arg.find(':');
  const std::string kind = arg.substr(0, colon);
  if (kind == "one_edge") s.edge_law = EdgeLaw::OneEdgeUniform;
  else if (kind == "bernoulli") s.edge_law = EdgeLaw::IndependentBernoulli;
  else if (kind == "full") s.edge_law = EdgeLaw::FullGraph;
  else if (kind == "periodic") s.edge_law = EdgeLaw::PeriodicLocalUpdate;
  else throw std::invalid_argument("unknown sampler kind " + kind);
  if (colon == std::string::npos) return s;
  std::stringstream ss(arg.substr(colon + 1));
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("sampler parameter must be key=value");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    if (key == "s") s.sparsity = std::stod(val);
    else if (key == "p") s.bernoulli_p = {std::stod(val)};
    else if (key == "P") s.period = std::stol(val);
    else if (key == "seed") s.seed = std::stoull(val);
    else throw std::invalid_argument("unknown sampler parameter " + key);
  }
  return s;
}

int cmd_run(const std::string& config_path, int seeds,
            const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot open " << config_path << "\n";
    return 2;
  }
  nlohmann::json doc;
  in >> doc;
  if (doc.contains("preset")) {
    const std::string name = doc["preset"].get<std::string>();
    std::uint64_t master = doc.value("master_seed", 1234);
    std::vector<std::string> overrides;
    if (doc.contains("overrides"))
      overrides = doc["overrides"].get<std::vector<std::string>>();
    auto plan = build_preset(name, master, overrides);
    auto summary = run_preset(plan, out_dir);
    std::cout << summary.dump(2) << "\n";
    return 0;
  }
  RunConfig config = parse_config(doc);
  auto result = run_batch(config, seeds, out_dir);
  std::cout << result.summary.dump(2) << "\n";
  if (out_dir.empty()) {
    // no output directory: stream the single-seed metrics to stdout
    if (seeds == 1) write_jsonl(result.per_seed[0], std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FSPDA decentralized optimization simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset_name, analyze_dir;
  std::string topology_arg, sampler_arg, mode_arg = "exact";
  std::vector<std::string> overrides;
  int seeds = 1, dim = 1;
  long mc_samples = 100000;
  std::uint64_t master_seed = 1234;

  auto* run_cmd = app.add_subcommand("run", "run a config (or preset invocation)");
  run_cmd->add_option("--config", config_path, "JSON config path")->required();
  run_cmd->add_option("--seeds", seeds, "number of replicas");
  run_cmd->add_option("--out", out_dir, "output directory");

  auto* preset_cmd = app.add_subcommand("preset", "run a named experiment preset");
  preset_cmd->add_option("name", preset_name, "preset name")->required();
  preset_cmd->add_option("--out", out_dir, "output directory");
  preset_cmd->add_option("--seed", master_seed, "master seed");
  preset_cmd->add_option("--override", overrides,
                         "config override path.to.key=value");

  auto* analyze_cmd = app.add_subcommand("analyze", "recompute summaries");
  analyze_cmd->add_option("dir", analyze_dir, "results directory")->required();

  auto* spectral_cmd =
      app.add_subcommand("spectral", "print the spectral constants report");
  spectral_cmd->add_option("--topology", topology_arg, "e.g. ring:4")
      ->required();
  spectral_cmd->add_option("--sampler", sampler_arg, "e.g. one_edge:s=0.5")
      ->required();
  spectral_cmd->add_option("--dim", dim, "coordinate dimension");
  spectral_cmd->add_option("--mode", mode_arg, "exact | monte_carlo");
  spectral_cmd->add_option("--samples", mc_samples, "Monte Carlo samples");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, seeds, out_dir);
    if (preset_cmd->parsed()) {
      auto plan = build_preset(preset_name, master_seed, overrides);
      auto summary = run_preset(plan, out_dir);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    if (analyze_cmd->parsed()) {
      std::cout << fspda::analyze(analyze_dir).dump(2) << "\n";
      return 0;
    }
    if (spectral_cmd->parsed()) {
      Topology topo = build_topology(parse_topology_arg(topology_arg));
      IncidenceMatrix inc = build_incidence(topo, dim);
      GraphSampler sampler(parse_sampler_arg(sampler_arg), topo, dim);
      SpectralMode mode;
      if (mode_arg == "exact") mode = SpectralMode::Exact;
      else if (mode_arg == "monte_carlo") mode = SpectralMode::MonteCarlo;
      else throw std::invalid_argument("mode must be exact or monte_carlo");
      auto rep = spectral_constants(sampler, inc, mode, mc_samples);
      nlohmann::json j;
      j["rho_min"] = rep.rho_min;
      j["rho_max"] = rep.rho_max;
      j["rho_bar_min"] = rep.rho_bar_min;
      j["rho_bar_max"] = rep.rho_bar_max;
      j["sigma_A_sq"] = rep.sigma_A_sq;
      j["method"] = rep.method;
      if (rep.mc_samples) j["mc_samples"] = *rep.mc_samples;
      if (rep.mc_stderr) j["mc_stderr"] = *rep.mc_stderr;
      if (rep.period_averaged) j["period_averaged"] = true;
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
