#include <cmath>
#include <filesystem>
#include <fstream>

#include "fspda/async_runtime.hpp"
#include "fspda/harness.hpp"
#include "fspda/stats.hpp"

namespace fspda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Desk-scale stand-in for the reference training problems: heterogeneous
// quadratic on a ring of five agents.
RunConfig base_quadratic(std::uint64_t master_seed) {
  RunConfig c;
  c.algorithm = AlgorithmKind::FspdaSa;
  c.dim = 10;
  c.topology = {TopologySpec::Kind::Ring, 5, 0.5, "", 7};
  c.problem.kind = ProblemSpec::Kind::Quadratic;
  c.problem.heterogeneity = 10.0;
  c.problem.seed = CounterRng::keyed(master_seed, 0x9).next_u64();
  c.seeds.graph = CounterRng::keyed(master_seed, 0x1).next_u64();
  c.seeds.noise = CounterRng::keyed(master_seed, 0x2).next_u64();
  c.seeds.init = CounterRng::keyed(master_seed, 0x3).next_u64();
  c.hp = {0.05, 0.05, 0.4, 1.0, 1.0, 1.0};
  c.sampler = {EdgeLaw::OneEdgeUniform, {}, 1, 0.5, 0};
  c.metric_period = 1;
  return c;
}

PresetPlan rate_sweep(std::uint64_t seed) {
  PresetPlan plan{"rate_sweep", {}};
  for (long T : {1000L, 4000L, 16000L}) {
    RunConfig c = base_quadratic(seed);
    c.T = T;
    c.noise = NoiseModel::gaussian(1.0);
    c.hp.alpha = 2.0 / std::sqrt(static_cast<double>(T));
    c.hp.eta = 0.05;
    c.hp.gamma = 0.4;
    c.hp.beta = 1.0;
    plan.jobs.push_back({"T" + std::to_string(T), c, 20});
  }
  return plan;
}

PresetPlan pl_linear(std::uint64_t seed) {
  PresetPlan plan{"pl_linear", {}};
  RunConfig c = base_quadratic(seed);
  c.T = 20000;
  c.sampler = {EdgeLaw::FullGraph, {}, 1, 1.0, 0};
  c.noise = NoiseModel::none();
  c.hp = {0.004, 0.02, 0.1, 1.0, 1.0, 1.0};
  c.potential = {true, 1.0, 8.0};
  plan.jobs.push_back({"deterministic", c, 1});
  return plan;
}

PresetPlan storm_vs_sa(std::uint64_t seed) {
  PresetPlan plan{"storm_vs_sa", {}};
  RunConfig sa = base_quadratic(seed);
  sa.T = 100000;
  sa.metric_period = 10;
  sa.noise = NoiseModel::gaussian(10.0);
  sa.hp = {0.004, 0.05, 0.4, 1.0, 1.0, 1.0};
  plan.jobs.push_back({"fspda_sa", sa, 10});
  RunConfig storm = sa;
  storm.algorithm = AlgorithmKind::FspdaStorm;
  storm.hp = {0.004, 0.05, 0.4, 0.1, 0.05, 0.05};
  storm.storm_init_mode = StormInitMode::Zero;
  plan.jobs.push_back({"fspda_storm", storm, 10});
  return plan;
}

PresetPlan heterogeneity(std::uint64_t seed) {
  PresetPlan plan{"heterogeneity", {}};
  for (auto partition : {Partition::LabelSorted, Partition::Shuffled}) {
    for (auto algo : {AlgorithmKind::FspdaSa, AlgorithmKind::Dsgd}) {
      RunConfig c;
      c.algorithm = algo;
      c.dim = 8;
      c.T = 20000;
      c.metric_period = 20;
      c.topology = {TopologySpec::Kind::Complete, 4, 0.5, "", 7};
      c.problem.kind = ProblemSpec::Kind::Logistic;
      c.problem.samples_per_agent = 500;
      c.problem.partition = partition;
      c.problem.l2 = 1e-4;
      c.problem.seed = CounterRng::keyed(seed, 0x9).next_u64();
      c.seeds.graph = CounterRng::keyed(seed, 0x1).next_u64();
      c.seeds.noise = CounterRng::keyed(seed, 0x2).next_u64();
      c.noise = NoiseModel::minibatch(32);
      c.sampler = {EdgeLaw::OneEdgeUniform, {}, 1, 0.5, 0};
      c.hp = algo == AlgorithmKind::FspdaSa
                 ? HyperParams{0.05, 0.05, 0.4, 1.0, 1.0, 1.0}
                 : HyperParams{0.05, 0.0, 0.4, 0.0, 1.0, 1.0};
      std::string label =
          std::string(partition == Partition::LabelSorted ? "label_sorted"
                                                          : "shuffled") +
          "_" + algorithm_name(algo);
      plan.jobs.push_back({label, c, 3});
    }
  }
  return plan;
}

PresetPlan sparsity_sweep(std::uint64_t seed) {
  PresetPlan plan{"sparsity_sweep", {}};
  for (double s : {1.0, 0.5, 0.1, 0.05}) {
    RunConfig c = base_quadratic(seed);
    c.T = 20000;
    c.metric_period = 20;
    c.noise = NoiseModel::gaussian(1.0);
    c.sampler = {EdgeLaw::OneEdgeUniform, {}, 1, s, 0};
    c.hp = {0.01, 0.05, 0.4, 1.0, 1.0, 1.0};
    plan.jobs.push_back({"s" + std::to_string(s).substr(0, 4), c, 3});
  }
  return plan;
}

PresetPlan topology_sweep(std::uint64_t seed) {
  PresetPlan plan{"topology_sweep", {}};
  const std::vector<std::pair<std::string, TopologySpec>> topologies = {
      {"complete", {TopologySpec::Kind::Complete, 5, 0.5, "", 7}},
      {"ring", {TopologySpec::Kind::Ring, 5, 0.5, "", 7}},
      {"er05", {TopologySpec::Kind::ErdosRenyi, 5, 0.5, "", 7}},
  };
  for (const auto& [label, topo] : topologies) {
    RunConfig c = base_quadratic(seed);
    c.T = 20000;
    c.metric_period = 20;
    c.topology = topo;
    c.noise = NoiseModel::gaussian(1.0);
    c.hp = {0.01, 0.05, 0.4, 1.0, 1.0, 1.0};
    plan.jobs.push_back({label, c, 3});
  }
  return plan;
}

PresetPlan deterministic(std::uint64_t seed) {
  PresetPlan plan{"deterministic", {}};
  for (double s : {1.0, 0.1}) {
    RunConfig c = base_quadratic(seed);
    c.T = 20000;
    c.metric_period = 20;
    c.noise = NoiseModel::none();
    c.sampler = {EdgeLaw::OneEdgeUniform, {}, 1, s, 0};
    c.hp = {0.02, 0.05, 0.4, 1.0, 1.0, 1.0};
    plan.jobs.push_back({"s" + std::to_string(s).substr(0, 4), c, 1});
  }
  return plan;
}

PresetPlan dual_momentum(std::uint64_t seed) {
  PresetPlan plan{"dual_momentum", {}};
  for (double a_lambda : {1.0, 0.01}) {
    RunConfig c = base_quadratic(seed);
    c.algorithm = AlgorithmKind::FspdaStorm;
    c.T = 50000;
    c.metric_period = 50;
    c.noise = NoiseModel::gaussian(10.0);
    c.sampler = {EdgeLaw::OneEdgeUniform, {}, 1, 0.1, 0};
    c.hp = {0.004, 0.05, 0.4, 0.1, 0.05, a_lambda};
    plan.jobs.push_back(
        {a_lambda == 1.0 ? "momentum_off" : "momentum_on", c, 3});
  }
  return plan;
}

PresetPlan dsgd_bias(std::uint64_t seed) {
  PresetPlan plan{"dsgd_bias", {}};
  RunConfig fspda = base_quadratic(seed);
  fspda.T = 40000;
  fspda.metric_period = 10;
  fspda.noise = NoiseModel::none();
  fspda.hp = {0.05, 0.05, 0.4, 1.0, 1.0, 1.0};
  plan.jobs.push_back({"fspda_sa", fspda, 1});
  RunConfig dsgd = fspda;
  dsgd.algorithm = AlgorithmKind::Dsgd;
  dsgd.hp = {0.05, 0.0, 0.4, 0.0, 1.0, 1.0};
  plan.jobs.push_back({"dsgd", dsgd, 1});
  return plan;
}

PresetPlan async_vs_sync(std::uint64_t seed) {
  PresetPlan plan{"async_vs_sync", {}};
  RunConfig c = base_quadratic(seed);
  c.topology = {TopologySpec::Kind::Ring, 4, 0.5, "", 7};
  c.T = 200;
  c.noise = NoiseModel::gaussian(0.5);
  c.hp = {0.05, 0.05, 0.4, 1.0, 1.0, 1.0};
  plan.jobs.push_back({"sync", c, 1});
  plan.jobs.push_back({"async_scripted", c, 1});
  return plan;
}

std::vector<double> series(const std::vector<MetricsRecord>& m,
                           double MetricsRecord::*field) {
  std::vector<double> out;
  out.reserve(m.size());
  for (const auto& r : m) out.push_back(r.*field);
  return out;
}

json summarize(const std::string& name,
               const std::vector<std::pair<std::string,
                                           std::vector<std::vector<MetricsRecord>>>>&
                   streams) {
  json summary;
  summary["preset"] = name;
  json jobs = json::object();
  for (const auto& [label, per_seed] : streams) {
    json j;
    std::vector<double> finals, consensus, time_avgs, ta_cons;
    for (const auto& s : per_seed) {
      finals.push_back(s.back().grad_norm_sq_avg);
      consensus.push_back(s.back().consensus_err);
      time_avgs.push_back(time_average(s, &MetricsRecord::grad_norm_sq_avg));
      ta_cons.push_back(time_average(s, &MetricsRecord::consensus_err));
    }
    auto f = mean_stderr(finals);
    auto cexp = mean_stderr(consensus);
    auto ta = mean_stderr(time_avgs);
    auto tc = mean_stderr(ta_cons);
    j["final_grad_norm_sq"] = {{"mean", f.mean}, {"stderr", f.stderr_}};
    j["final_consensus_err"] = {{"mean", cexp.mean}, {"stderr", cexp.stderr_}};
    j["time_avg_grad_norm_sq"] = {{"mean", ta.mean}, {"stderr", ta.stderr_}};
    j["time_avg_consensus_err"] = {{"mean", tc.mean}, {"stderr", tc.stderr_}};
    jobs[label] = j;
  }
  summary["jobs"] = jobs;

  if (name == "rate_sweep") {
    // log-log slope of the mean time-averaged stationarity vs T
    std::vector<double> log_T, log_g, cons;
    for (const auto& [label, per_seed] : streams) {
      const double T = static_cast<double>(per_seed[0].back().t);
      std::vector<double> tavg, tcons;
      for (const auto& s : per_seed) {
        tavg.push_back(time_average(s, &MetricsRecord::grad_norm_sq_avg));
        tcons.push_back(time_average(s, &MetricsRecord::consensus_err));
      }
      log_T.push_back(std::log(T));
      log_g.push_back(std::log(mean_stderr(tavg).mean));
      cons.push_back(mean_stderr(tcons).mean);
    }
    auto fit = linear_fit(log_T, log_g);
    summary["loglog_slope"] = fit.slope;
    summary["loglog_r2"] = fit.r2;
    summary["consensus_ratio_largest_vs_smallest_T"] =
        cons.back() / cons.front();
  } else if (name == "pl_linear") {
    const auto& s = streams.at(0).second.at(0);
    std::vector<double> ts, logs;
    for (const auto& r : s) {
      const double val = (r.suboptimality ? *r.suboptimality : 0.0) +
                         r.consensus_err;
      if (val > 0) {
        ts.push_back(static_cast<double>(r.t));
        logs.push_back(std::log(val));
      }
    }
    auto fit = linear_fit(ts, logs);
    summary["geometric_decay_fit"] = {
        {"slope", fit.slope}, {"r2", fit.r2}, {"points", ts.size()}};
  } else if (name == "dsgd_bias") {
    for (const auto& [label, per_seed] : streams) {
      summary["jobs"][label]["tail_grad_norm_sq"] = tail_average(
          per_seed[0], &MetricsRecord::grad_norm_sq_avg, 0.1);
    }
  } else if (name == "storm_vs_sa" || name == "dual_momentum") {
    // job comparison already present in jobs{}
  } else if (name == "async_vs_sync") {
    const auto& sync_s = streams.at(0).second.at(0);
    const auto& async_s = streams.at(1).second.at(0);
    double dev = 0;
    const size_t m = std::min(sync_s.size(), async_s.size());
    for (size_t i = 0; i < m; ++i) {
      dev = std::max(dev, std::abs(sync_s[i].consensus_err -
                                   async_s[i].consensus_err));
      dev = std::max(dev, std::abs(sync_s[i].grad_norm_sq_avg -
                                   async_s[i].grad_norm_sq_avg));
    }
    summary["max_metric_deviation"] = dev;
  }
  return summary;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"rate_sweep",    "pl_linear",      "storm_vs_sa",
          "heterogeneity", "sparsity_sweep", "topology_sweep",
          "deterministic", "dual_momentum",  "dsgd_bias",
          "async_vs_sync"};
}

PresetPlan build_preset(const std::string& name, std::uint64_t master_seed,
                        const std::vector<std::string>& overrides) {
  PresetPlan plan;
  if (name == "rate_sweep") plan = rate_sweep(master_seed);
  else if (name == "pl_linear") plan = pl_linear(master_seed);
  else if (name == "storm_vs_sa") plan = storm_vs_sa(master_seed);
  else if (name == "heterogeneity") plan = heterogeneity(master_seed);
  else if (name == "sparsity_sweep") plan = sparsity_sweep(master_seed);
  else if (name == "topology_sweep") plan = topology_sweep(master_seed);
  else if (name == "deterministic") plan = deterministic(master_seed);
  else if (name == "dual_momentum") plan = dual_momentum(master_seed);
  else if (name == "dsgd_bias") plan = dsgd_bias(master_seed);
  else if (name == "async_vs_sync") plan = async_vs_sync(master_seed);
  else
    throw std::invalid_argument("unknown preset: " + name);
  if (!overrides.empty()) {
    for (auto& job : plan.jobs) {
      json doc = config_to_json(job.config);
      for (const auto& o : overrides) apply_override(doc, o);
      job.config = parse_config(doc);
    }
  }
  return plan;
}

json run_preset(const PresetPlan& plan, const std::string& out_dir) {
  std::vector<std::pair<std::string, std::vector<std::vector<MetricsRecord>>>>
      streams;
  for (const auto& job : plan.jobs) {
    std::string job_dir =
        out_dir.empty() ? "" : (fs::path(out_dir) / job.label).string();
    if (plan.name == "async_vs_sync" && job.label == "async_scripted") {
      Topology topo = build_topology(job.config.topology);
      auto suite = build_suite(job.config.problem, topo.num_agents(),
                               job.config.dim);
      AsyncScheduler sched;
      sched.mode = AsyncScheduler::Mode::ScriptedRounds;
      auto res = run_async(job.config, *suite, topo, sched);
      if (!job_dir.empty()) {
        fs::create_directories(job_dir);
        std::ofstream out(fs::path(job_dir) / "seed_0.jsonl");
        write_jsonl(res.metrics, out);
      }
      streams.push_back({job.label, {res.metrics}});
      continue;
    }
    auto batch = run_batch(job.config, job.n_seeds, job_dir);
    streams.push_back({job.label, std::move(batch.per_seed)});
  }
  json summary = summarize(plan.name, streams);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json meta;
    meta["preset"] = plan.name;
    json jobs = json::array();
    for (const auto& job : plan.jobs)
      jobs.push_back({{"label", job.label},
                      {"n_seeds", job.n_seeds},
                      {"config", config_to_json(job.config)}});
    meta["jobs"] = jobs;
    std::ofstream m(fs::path(out_dir) / "run_meta.json");
    m << meta.dump(2) << "\n";
    std::ofstream s(fs::path(out_dir) / "summary.json");
    s << summary.dump(2) << "\n";
  }
  return summary;
}

json analyze(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta_in(root / "run_meta.json");
  if (!meta_in)
    throw std::runtime_error("analyze: no run_meta.json under " + dir);
  json meta;
  meta_in >> meta;

  auto read_streams = [](const fs::path& job_dir) {
    std::vector<std::vector<MetricsRecord>> streams;
    for (int k = 0;; ++k) {
      fs::path p = job_dir / ("seed_" + std::to_string(k) + ".jsonl");
      if (!fs::exists(p)) break;
      std::ifstream in(p);
      streams.push_back(read_jsonl(in));
    }
    if (streams.empty())
      throw std::runtime_error("analyze: no seed_*.jsonl under " +
                               job_dir.string());
    return streams;
  };

  if (meta.contains("preset")) {
    std::vector<std::pair<std::string,
                          std::vector<std::vector<MetricsRecord>>>>
        streams;
    for (const auto& job : meta["jobs"]) {
      const std::string label = job["label"].get<std::string>();
      streams.push_back({label, read_streams(root / label)});
    }
    json summary = summarize(meta["preset"].get<std::string>(), streams);
    std::ofstream s(root / "summary.json");
    s << summary.dump(2) << "\n";
    return summary;
  }

  // plain batch directory
  auto streams = read_streams(root);
  json summary;
  summary["n_seeds"] = streams.size();
  std::vector<double> finals, time_avgs;
  for (const auto& s : streams) {
    finals.push_back(s.back().grad_norm_sq_avg);
    if (s.size() >= 2)
      time_avgs.push_back(time_average(s, &MetricsRecord::grad_norm_sq_avg));
  }
  auto f = mean_stderr(finals);
  summary["final_grad_norm_sq"] = {{"mean", f.mean}, {"stderr", f.stderr_}};
  if (!time_avgs.empty()) {
    auto t = mean_stderr(time_avgs);
    summary["time_avg_grad_norm_sq"] = {{"mean", t.mean},
                                        {"stderr", t.stderr_}};
  }
  std::ofstream s(root / "summary.json");
  s << summary.dump(2) << "\n";
  return summary;
}

}  // namespace fspda
