#include "fspda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "fspda/async_runtime.hpp"
#include "fspda/stats.hpp"

namespace fspda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key `" +
                        (path.empty() ? it.key() : path + "." + it.key()) +
                        "`");
}

double get_num(const json& obj, const std::string& path,
               const std::string& key, std::optional<double> def = {}) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError("config: missing `" + path + key + "`");
  }
  if (!obj[key].is_number())
    throw ConfigError("config: `" + path + key + "` must be a number");
  return obj[key].get<double>();
}

long get_int(const json& obj, const std::string& path, const std::string& key,
             std::optional<long> def = {}) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError("config: missing `" + path + key + "`");
  }
  if (!obj[key].is_number_integer())
    throw ConfigError("config: `" + path + key + "` must be an integer");
  return obj[key].get<long>();
}

std::string get_str(const json& obj, const std::string& path,
                    const std::string& key,
                    std::optional<std::string> def = {}) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError("config: missing `" + path + key + "`");
  }
  if (!obj[key].is_string())
    throw ConfigError("config: `" + path + key + "` must be a string");
  return obj[key].get<std::string>();
}

HyperParams parse_hyperparams(const json& node) {
  if (node.is_string()) {
    const auto& table = named_hyperparams();
    auto it = table.find(node.get<std::string>());
    if (it == table.end())
      throw ConfigError("config: unknown hyperparams preset `" +
                        node.get<std::string>() + "`");
    return it->second;
  }
  if (!node.is_object())
    throw ConfigError("config: `hyperparams` must be an object or preset name");
  reject_unknown(node, "hyperparams",
                 {"alpha", "eta", "gamma", "beta", "a_x", "a_lambda"});
  HyperParams hp;
  hp.alpha = get_num(node, "hyperparams.", "alpha");
  hp.eta = get_num(node, "hyperparams.", "eta", 0.0);
  hp.gamma = get_num(node, "hyperparams.", "gamma", 0.0);
  hp.beta = get_num(node, "hyperparams.", "beta", 0.0);
  hp.a_x = get_num(node, "hyperparams.", "a_x", 1.0);
  hp.a_lambda = get_num(node, "hyperparams.", "a_lambda", 1.0);
  if (hp.alpha <= 0)
    throw ConfigError("config: `hyperparams.alpha` must be > 0");
  if (hp.eta < 0) throw ConfigError("config: `hyperparams.eta` must be >= 0");
  if (hp.gamma < 0)
    throw ConfigError("config: `hyperparams.gamma` must be >= 0");
  if (hp.beta < 0) throw ConfigError("config: `hyperparams.beta` must be >= 0");
  if (hp.a_x <= 0 || hp.a_x > 1)
    throw ConfigError("config: `hyperparams.a_x` must be in (0, 1]");
  if (hp.a_lambda <= 0 || hp.a_lambda > 1)
    throw ConfigError("config: `hyperparams.a_lambda` must be in (0, 1]");
  return hp;
}

SamplerSpec parse_sampler(const json& node) {
  reject_unknown(node, "sampler", {"edge_law", "params", "sparsity"});
  SamplerSpec s;
  const std::string law = get_str(node, "sampler.", "edge_law", "full_graph");
  json params = node.contains("params") ? node["params"] : json::object();
  if (law == "one_edge_uniform") {
    s.edge_law = EdgeLaw::OneEdgeUniform;
    reject_unknown(params, "sampler.params", {});
  } else if (law == "independent_bernoulli") {
    s.edge_law = EdgeLaw::IndependentBernoulli;
    reject_unknown(params, "sampler.params", {"p"});
    if (!params.contains("p"))
      throw ConfigError("config: missing `sampler.params.p`");
    if (params["p"].is_array())
      s.bernoulli_p = params["p"].get<std::vector<double>>();
    else
      s.bernoulli_p = {params["p"].get<double>()};
  } else if (law == "full_graph") {
    s.edge_law = EdgeLaw::FullGraph;
    reject_unknown(params, "sampler.params", {});
  } else if (law == "periodic_local_update") {
    s.edge_law = EdgeLaw::PeriodicLocalUpdate;
    reject_unknown(params, "sampler.params", {"period"});
    s.period = get_int(params, "sampler.params.", "period");
  } else {
    throw ConfigError("config: unknown `sampler.edge_law` `" + law + "`");
  }
  s.sparsity = get_num(node, "sampler.", "sparsity", 1.0);
  if (!(s.sparsity > 0) || s.sparsity > 1)
    throw ConfigError("config: `sampler.sparsity` must be in (0, 1]");
  return s;
}

TopologySpec parse_topology(const json& node) {
  reject_unknown(node, "topology", {"kind", "n", "p", "path", "seed"});
  TopologySpec t;
  const std::string kind = get_str(node, "topology.", "kind");
  if (kind == "complete") t.kind = TopologySpec::Kind::Complete;
  else if (kind == "ring") t.kind = TopologySpec::Kind::Ring;
  else if (kind == "er") t.kind = TopologySpec::Kind::ErdosRenyi;
  else if (kind == "file") t.kind = TopologySpec::Kind::File;
  else throw ConfigError("config: unknown `topology.kind` `" + kind + "`");
  if (t.kind == TopologySpec::Kind::File) {
    t.path = get_str(node, "topology.", "path");
  } else {
    t.n = static_cast<int>(get_int(node, "topology.", "n"));
    if (t.n < 1) throw ConfigError("config: `topology.n` must be >= 1");
  }
  if (t.kind == TopologySpec::Kind::ErdosRenyi) {
    t.p = get_num(node, "topology.", "p");
    t.seed = static_cast<std::uint64_t>(get_int(node, "topology.", "seed", 7));
  }
  return t;
}

std::pair<ProblemSpec, int> parse_problem(const json& node) {
  reject_unknown(node, "problem", {"kind", "params"});
  ProblemSpec p;
  const std::string kind = get_str(node, "problem.", "kind");
  json params = node.contains("params") ? node["params"] : json::object();
  int dim = 2;
  if (kind == "quadratic") {
    p.kind = ProblemSpec::Kind::Quadratic;
    reject_unknown(params, "problem.params", {"d", "h", "seed"});
    dim = static_cast<int>(get_int(params, "problem.params.", "d", 2));
    p.heterogeneity = get_num(params, "problem.params.", "h", 10.0);
    p.seed = static_cast<std::uint64_t>(
        get_int(params, "problem.params.", "seed", 0xF00D));
  } else if (kind == "logistic") {
    p.kind = ProblemSpec::Kind::Logistic;
    reject_unknown(params, "problem.params",
                   {"d", "samples_per_agent", "partition", "l2", "seed"});
    dim = static_cast<int>(get_int(params, "problem.params.", "d", 2));
    p.samples_per_agent =
        get_int(params, "problem.params.", "samples_per_agent", 200);
    const std::string part =
        get_str(params, "problem.params.", "partition", "shuffled");
    if (part == "shuffled") p.partition = Partition::Shuffled;
    else if (part == "label_sorted") p.partition = Partition::LabelSorted;
    else
      throw ConfigError("config: `problem.params.partition` must be "
                        "`shuffled` or `label_sorted`");
    p.l2 = get_num(params, "problem.params.", "l2", 1e-4);
    p.seed = static_cast<std::uint64_t>(
        get_int(params, "problem.params.", "seed", 0xF00D));
  } else {
    throw ConfigError("config: unknown `problem.kind` `" + kind + "`");
  }
  if (dim < 1) throw ConfigError("config: `problem.params.d` must be >= 1");
  return {p, dim};
}

NoiseModel parse_noise(const json& node) {
  reject_unknown(node, "noise", {"kind", "sigma", "batch"});
  const std::string kind = get_str(node, "noise.", "kind", "none");
  if (kind == "none") return NoiseModel::none();
  if (kind == "gaussian")
    return NoiseModel::gaussian(get_num(node, "noise.", "sigma"));
  if (kind == "minibatch")
    return NoiseModel::minibatch(get_int(node, "noise.", "batch"));
  throw ConfigError("config: unknown `noise.kind` `" + kind + "`");
}

InitSpec parse_init(const json& node) {
  reject_unknown(node, "init", {"kind", "point", "points", "scale"});
  InitSpec init;
  const std::string kind = get_str(node, "init.", "kind", "consensus");
  if (kind == "consensus") {
    init.kind = InitSpec::Kind::Consensus;
    if (node.contains("point"))
      init.point = node["point"].get<std::vector<double>>();
  } else if (kind == "per_agent") {
    init.kind = InitSpec::Kind::PerAgent;
    if (!node.contains("points"))
      throw ConfigError("config: `init.points` required for per_agent");
    init.points = node["points"].get<std::vector<std::vector<double>>>();
  } else if (kind == "random") {
    init.kind = InitSpec::Kind::RandomConsensus;
    init.scale = get_num(node, "init.", "scale", 1.0);
  } else {
    throw ConfigError("config: unknown `init.kind` `" + kind + "`");
  }
  return init;
}

}  // namespace

const std::map<std::string, HyperParams>& named_hyperparams() {
  static const std::map<std::string, HyperParams> table = {
      {"mnist_sa_defaults", {1e-4, 1e-5, 0.5, 1.0, 1.0, 1.0}},
      {"mnist_storm_defaults", {1e-3, 1e-2, 0.5, 0.1, 1e-2, 1e-2}},
      {"mnist_hetero_sa", {1e-4, 1e-4, 0.5, 1.0, 1.0, 1.0}},
      {"mnist_hetero_storm", {1e-3, 1e-3, 0.5, 0.1, 0.1, 0.1}},
      {"mnist_exact_sa_nosparse", {1e-3, 5e-6, 0.5, 1.0, 1.0, 1.0}},
      {"mnist_exact_sa_1pct", {1e-4, 5e-4, 0.5, 1.0, 1.0, 1.0}},
      {"imagenet_sa_10pct", {0.1, 5e-9, 0.5, 1.0, 1.0, 1.0}},
      {"imagenet_sa_1pct", {0.1, 1e-9, 0.5, 1.0, 1.0, 1.0}},
      {"imagenet_sa_01pct", {0.05, 5e-10, 0.5, 1.0, 1.0, 1.0}},
      {"storm_dual_momentum_on", {1e-3, 5e-6, 0.5, 1.0, 1e-3, 1e-2}},
      {"storm_dual_momentum_off", {1e-3, 5e-6, 0.5, 1.0, 1e-3, 1.0}},
  };
  return table;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: document must be an object");
  reject_unknown(doc, "",
                 {"algorithm", "T", "hyperparams", "schedule", "sampler",
                  "topology", "problem", "noise", "async_mask", "init",
                  "storm_init_mode", "seeds", "metric_period", "bits",
                  "output"});
  RunConfig c;
  c.algorithm = algorithm_from_name(get_str(doc, "", "algorithm"));
  c.T = get_int(doc, "", "T");
  if (c.T < 0) throw ConfigError("config: `T` must be >= 0");
  if (!doc.contains("hyperparams"))
    throw ConfigError("config: missing `hyperparams`");
  c.hp = parse_hyperparams(doc["hyperparams"]);

  if (doc.contains("schedule")) {
    const json& node = doc["schedule"];
    reject_unknown(node, "schedule", {"kind", "warmup_frac"});
    const std::string kind = get_str(node, "schedule.", "kind", "constant");
    if (kind == "constant") c.schedule = Schedule::constant();
    else if (kind == "cosine_warmup")
      c.schedule = Schedule::cosine(get_num(node, "schedule.", "warmup_frac", 0.0));
    else throw ConfigError("config: unknown `schedule.kind` `" + kind + "`");
    if (c.schedule.warmup_frac < 0 || c.schedule.warmup_frac >= 1)
      throw ConfigError("config: `schedule.warmup_frac` must be in [0, 1)");
  }
  if (doc.contains("sampler")) c.sampler = parse_sampler(doc["sampler"]);
  if (!doc.contains("topology")) throw ConfigError("config: missing `topology`");
  c.topology = parse_topology(doc["topology"]);
  if (!doc.contains("problem")) throw ConfigError("config: missing `problem`");
  auto [prob, dim] = parse_problem(doc["problem"]);
  c.problem = prob;
  c.dim = dim;
  if (doc.contains("noise")) c.noise = parse_noise(doc["noise"]);
  if (doc.contains("async_mask")) {
    const json& node = doc["async_mask"];
    reject_unknown(node, "async_mask", {"b_bar"});
    AsyncGradientMask mask;
    if (!node.contains("b_bar"))
      throw ConfigError("config: missing `async_mask.b_bar`");
    if (node["b_bar"].is_array())
      mask.b_bar = node["b_bar"].get<std::vector<double>>();
    else
      mask.b_bar.assign(1, node["b_bar"].get<double>());
    for (double b : mask.b_bar)
      if (b < 1.0)
        throw ConfigError("config: `async_mask.b_bar` entries must be >= 1");
    c.async_mask = std::move(mask);
  }
  if (doc.contains("init")) c.init = parse_init(doc["init"]);
  if (doc.contains("storm_init_mode")) {
    const std::string mode = doc["storm_init_mode"].get<std::string>();
    if (mode == "zero") c.storm_init_mode = StormInitMode::Zero;
    else if (mode == "theoretical")
      c.storm_init_mode = StormInitMode::Theoretical;
    else
      throw ConfigError("config: `storm_init_mode` must be `zero` or "
                        "`theoretical`");
  }
  if (doc.contains("seeds")) {
    const json& node = doc["seeds"];
    reject_unknown(node, "seeds", {"graph", "noise", "init"});
    c.seeds.graph =
        static_cast<std::uint64_t>(get_int(node, "seeds.", "graph", 1));
    c.seeds.noise =
        static_cast<std::uint64_t>(get_int(node, "seeds.", "noise", 2));
    c.seeds.init =
        static_cast<std::uint64_t>(get_int(node, "seeds.", "init", 3));
  }
  c.metric_period = get_int(doc, "", "metric_period", 1);
  if (c.metric_period < 1)
    throw ConfigError("config: `metric_period` must be >= 1");
  if (doc.contains("bits")) {
    const json& node = doc["bits"];
    reject_unknown(node, "bits", {"value_bits", "index_bits"});
    c.bits.value_bits =
        static_cast<int>(get_int(node, "bits.", "value_bits", 32));
    c.bits.index_bits =
        static_cast<int>(get_int(node, "bits.", "index_bits", 32));
  }
  if (doc.contains("output")) {
    const json& node = doc["output"];
    reject_unknown(node, "output", {"dir", "csv", "potential"});
    if (node.contains("potential")) {
      const json& pot = node["potential"];
      reject_unknown(pot, "output.potential", {"enabled", "weight_a", "delta1"});
      c.potential.enabled = pot.value("enabled", true);
      c.potential.weight_a = get_num(pot, "output.potential.", "weight_a", 1.0);
      c.potential.delta1 = get_num(pot, "output.potential.", "delta1", 8.0);
      if (c.potential.delta1 < 8.0)
        throw ConfigError("config: `output.potential.delta1` must be >= 8");
    }
  }
  // async mask broadcast needs agent count
  if (c.async_mask && c.async_mask->b_bar.size() == 1 &&
      c.topology.kind != TopologySpec::Kind::File)
    c.async_mask->b_bar.assign(static_cast<size_t>(c.topology.n),
                               c.async_mask->b_bar[0]);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const RunConfig& c) {
  json doc;
  doc["algorithm"] = algorithm_name(c.algorithm);
  doc["T"] = c.T;
  doc["hyperparams"] = {{"alpha", c.hp.alpha},   {"eta", c.hp.eta},
                        {"gamma", c.hp.gamma},   {"beta", c.hp.beta},
                        {"a_x", c.hp.a_x},       {"a_lambda", c.hp.a_lambda}};
  if (c.schedule.kind == Schedule::Kind::Constant)
    doc["schedule"] = {{"kind", "constant"}};
  else
    doc["schedule"] = {{"kind", "cosine_warmup"},
                       {"warmup_frac", c.schedule.warmup_frac}};
  {
    json s;
    switch (c.sampler.edge_law) {
      case EdgeLaw::OneEdgeUniform:
        s["edge_law"] = "one_edge_uniform";
        break;
      case EdgeLaw::IndependentBernoulli:
        s["edge_law"] = "independent_bernoulli";
        s["params"]["p"] = c.sampler.bernoulli_p.size() == 1
                               ? json(c.sampler.bernoulli_p[0])
                               : json(c.sampler.bernoulli_p);
        break;
      case EdgeLaw::FullGraph:
        s["edge_law"] = "full_graph";
        break;
      case EdgeLaw::PeriodicLocalUpdate:
        s["edge_law"] = "periodic_local_update";
        s["params"]["period"] = c.sampler.period;
        break;
    }
    s["sparsity"] = c.sampler.sparsity;
    doc["sampler"] = s;
  }
  {
    json t;
    switch (c.topology.kind) {
      case TopologySpec::Kind::Complete:
        t = {{"kind", "complete"}, {"n", c.topology.n}};
        break;
      case TopologySpec::Kind::Ring:
        t = {{"kind", "ring"}, {"n", c.topology.n}};
        break;
      case TopologySpec::Kind::ErdosRenyi:
        t = {{"kind", "er"},
             {"n", c.topology.n},
             {"p", c.topology.p},
             {"seed", static_cast<long long>(c.topology.seed)}};
        break;
      case TopologySpec::Kind::File:
        t = {{"kind", "file"}, {"path", c.topology.path}};
        break;
    }
    doc["topology"] = t;
  }
  {
    json p;
    if (c.problem.kind == ProblemSpec::Kind::Quadratic) {
      p["kind"] = "quadratic";
      p["params"] = {{"d", c.dim},
                     {"h", c.problem.heterogeneity},
                     {"seed", static_cast<long long>(c.problem.seed)}};
    } else {
      p["kind"] = "logistic";
      p["params"] = {
          {"d", c.dim},
          {"samples_per_agent", c.problem.samples_per_agent},
          {"partition", c.problem.partition == Partition::Shuffled
                            ? "shuffled"
                            : "label_sorted"},
          {"l2", c.problem.l2},
          {"seed", static_cast<long long>(c.problem.seed)}};
    }
    doc["problem"] = p;
  }
  switch (c.noise.kind) {
    case NoiseModel::Kind::None:
      doc["noise"] = {{"kind", "none"}};
      break;
    case NoiseModel::Kind::AdditiveGaussian:
      doc["noise"] = {{"kind", "gaussian"}, {"sigma", c.noise.sigma}};
      break;
    case NoiseModel::Kind::Minibatch:
      doc["noise"] = {{"kind", "minibatch"}, {"batch", c.noise.batch}};
      break;
  }
  if (c.async_mask) doc["async_mask"] = {{"b_bar", c.async_mask->b_bar}};
  switch (c.init.kind) {
    case InitSpec::Kind::Consensus:
      doc["init"] = {{"kind", "consensus"}};
      if (!c.init.point.empty()) doc["init"]["point"] = c.init.point;
      break;
    case InitSpec::Kind::PerAgent:
      doc["init"] = {{"kind", "per_agent"}, {"points", c.init.points}};
      break;
    case InitSpec::Kind::RandomConsensus:
      doc["init"] = {{"kind", "random"}, {"scale", c.init.scale}};
      break;
  }
  doc["storm_init_mode"] =
      c.storm_init_mode == StormInitMode::Zero ? "zero" : "theoretical";
  doc["seeds"] = {{"graph", static_cast<long long>(c.seeds.graph)},
                  {"noise", static_cast<long long>(c.seeds.noise)},
                  {"init", static_cast<long long>(c.seeds.init)}};
  doc["metric_period"] = c.metric_period;
  doc["bits"] = {{"value_bits", c.bits.value_bits},
                 {"index_bits", c.bits.index_bits}};
  if (c.potential.enabled)
    doc["output"] = {{"potential",
                      {{"enabled", true},
                       {"weight_a", c.potential.weight_a},
                       {"delta1", c.potential.delta1}}}};
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like path.to.key=value: " +
                      assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain string
  }
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override: empty path");
  for (size_t i = 0; i + 1 < parts.size(); ++i)
    node = &((*node)[parts[i]]);
  (*node)[parts.back()] = parsed;
}

double time_average(const std::vector<MetricsRecord>& metrics,
                    double MetricsRecord::*field) {
  if (metrics.size() < 2)
    throw std::invalid_argument("time_average: need >= 2 records");
  double acc = 0;
  // averages states t = 0..T-1 (the final record is the T-th state)
  for (size_t i = 0; i + 1 < metrics.size(); ++i) acc += metrics[i].*field;
  return acc / static_cast<double>(metrics.size() - 1);
}

double tail_average(const std::vector<MetricsRecord>& metrics,
                    double MetricsRecord::*field, double tail_fraction) {
  const size_t m = metrics.size();
  size_t start = static_cast<size_t>(
      std::floor(static_cast<double>(m) * (1.0 - tail_fraction)));
  if (start >= m) start = m - 1;
  double acc = 0;
  for (size_t i = start; i < m; ++i) acc += metrics[i].*field;
  return acc / static_cast<double>(m - start);
}

namespace {

int thread_cap() {
  if (const char* env = std::getenv("FSPDA_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 4;
}

Seeds derive_seeds(const Seeds& base, int replica) {
  auto d = [&](std::uint64_t s, std::uint64_t tag) {
    auto r = CounterRng::keyed(s, tag, static_cast<std::uint64_t>(replica));
    return r.next_u64();
  };
  if (replica == 0) return base;  // replica 0 runs the config verbatim
  return Seeds{d(base.graph, 0xA1), d(base.noise, 0xA2), d(base.init, 0xA3)};
}

json aggregate_records(const std::vector<std::vector<MetricsRecord>>& per_seed,
                       size_t idx) {
  auto field = [&](auto getter) {
    std::vector<double> vals;
    vals.reserve(per_seed.size());
    for (const auto& stream : per_seed) {
      auto v = getter(stream[idx]);
      if (v) vals.push_back(*v);
    }
    return vals;
  };
  json j;
  j["t"] = per_seed[0][idx].t;
  auto put = [&](const char* name, const std::vector<double>& vals) {
    if (vals.empty()) return;
    auto ms = mean_stderr(vals);
    j[std::string(name) + "_mean"] = ms.mean;
    j[std::string(name) + "_stderr"] = ms.stderr_;
  };
  put("grad_norm_sq_avg", field([](const MetricsRecord& r) {
        return std::optional<double>(r.grad_norm_sq_avg);
      }));
  put("worst_grad_norm_sq", field([](const MetricsRecord& r) {
        return std::optional<double>(r.worst_grad_norm_sq);
      }));
  put("worst_loss", field([](const MetricsRecord& r) {
        return std::optional<double>(r.worst_loss);
      }));
  put("consensus_err", field([](const MetricsRecord& r) {
        return std::optional<double>(r.consensus_err);
      }));
  put("v_norm_sq",
      field([](const MetricsRecord& r) { return r.v_norm_sq; }));
  put("suboptimality",
      field([](const MetricsRecord& r) { return r.suboptimality; }));
  put("bits_cum", field([](const MetricsRecord& r) {
        return std::optional<double>(static_cast<double>(r.bits_cum));
      }));
  return j;
}

}  // namespace

BatchResult run_batch(const RunConfig& config, int n_seeds,
                      const std::string& out_dir) {
  if (n_seeds < 1) throw std::invalid_argument("run_batch: n_seeds >= 1");
  Topology topo = build_topology(config.topology);
  auto suite = build_suite(config.problem, topo.num_agents(), config.dim);

  BatchResult result;
  result.per_seed.resize(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);

  const int cap = std::min(thread_cap(), n_seeds);
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < cap; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        int k = next.fetch_add(1);
        if (k >= n_seeds) return;
        try {
          RunConfig rc = config;
          rc.seeds = derive_seeds(config.seeds, k);
          result.per_seed[k] = run(rc, *suite, topo).metrics;
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (int k = 0; k < n_seeds; ++k)
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        throw std::runtime_error("run_batch: seed " + std::to_string(k) +
                                 " aborted: " + e.what());
      }
    }

  // generic summary: final-record statistics plus the time-averaged
  // stationarity each rate criterion consumes
  json summary;
  summary["n_seeds"] = n_seeds;
  {
    std::vector<double> finals, consensus, time_avgs;
    for (const auto& stream : result.per_seed) {
      finals.push_back(stream.back().grad_norm_sq_avg);
      consensus.push_back(stream.back().consensus_err);
      if (stream.size() >= 2)
        time_avgs.push_back(
            time_average(stream, &MetricsRecord::grad_norm_sq_avg));
    }
    auto f = mean_stderr(finals);
    summary["final_grad_norm_sq"] = {{"mean", f.mean}, {"stderr", f.stderr_}};
    auto cexp = mean_stderr(consensus);
    summary["final_consensus_err"] = {{"mean", cexp.mean},
                                      {"stderr", cexp.stderr_}};
    if (!time_avgs.empty()) {
      auto t = mean_stderr(time_avgs);
      summary["time_avg_grad_norm_sq"] = {{"mean", t.mean},
                                          {"stderr", t.stderr_}};
      auto ta_cons = std::vector<double>();
      for (const auto& stream : result.per_seed)
        ta_cons.push_back(time_average(stream, &MetricsRecord::consensus_err));
      auto tc = mean_stderr(ta_cons);
      summary["time_avg_consensus_err"] = {{"mean", tc.mean},
                                           {"stderr", tc.stderr_}};
    }
  }
  result.summary = summary;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (int k = 0; k < n_seeds; ++k) {
      std::ofstream out(fs::path(out_dir) /
                        ("seed_" + std::to_string(k) + ".jsonl"));
      write_jsonl(result.per_seed[k], out);
    }
    {
      std::ofstream agg(fs::path(out_dir) / "aggregate.jsonl");
      for (size_t idx = 0; idx < result.per_seed[0].size(); ++idx)
        agg << aggregate_records(result.per_seed, idx).dump() << "\n";
    }
    {
      json meta;
      meta["config"] = config_to_json(config);
      meta["n_seeds"] = n_seeds;
      std::ofstream m(fs::path(out_dir) / "run_meta.json");
      m << meta.dump(2) << "\n";
    }
    std::ofstream s(fs::path(out_dir) / "summary.json");
    s << summary.dump(2) << "\n";
  }
  return result;
}

}  // namespace fspda
