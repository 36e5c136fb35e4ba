#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fspda/sync_engine.hpp"

namespace fspda {

// Named hyperparameter defaults lifted from the reference experiment tables;
// usable as `"hyperparams": "<name>"` in a config.
const std::map<std::string, HyperParams>& named_hyperparams();

// Parses and validates a config document. Unknown keys are rejected;
// diagnostics name the offending field path (e.g. "hyperparams.alpha").
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& config);

// Dotted-path override (e.g. "hyperparams.alpha=1e-3") applied to a config
// document before validation.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct BatchResult {
  std::vector<std::vector<MetricsRecord>> per_seed;
  nlohmann::json summary;
};

// Runs `n_seeds` independent replicas of the config (seeds derived from the
// config's base seeds), writes seed_<k>.jsonl, aggregate.jsonl (per-record
// mean and standard error across seeds), run_meta.json and summary.json
// under out_dir (when non-empty). Seeds execute in parallel, capped by the
// FSPDA_THREADS environment variable.
BatchResult run_batch(const RunConfig& config, int n_seeds,
                      const std::string& out_dir);

// Experiment presets reproducing the reference studies at desk scale. Each
// preset expands to a list of labelled runs plus a summarizer computing the
// quantities its acceptance check needs (slopes, plateaus, ratios).
std::vector<std::string> preset_names();

struct PresetJob {
  std::string label;
  RunConfig config;
  int n_seeds = 1;
};

struct PresetPlan {
  std::string name;
  std::vector<PresetJob> jobs;
};

PresetPlan build_preset(const std::string& name, std::uint64_t master_seed,
                        const std::vector<std::string>& overrides = {});

// Runs every job of the plan and writes per-job outputs plus a single
// preset-level summary.json under out_dir.
nlohmann::json run_preset(const PresetPlan& plan, const std::string& out_dir);

// Recomputes summaries from the JSONL streams found under dir (inverse of
// run_preset/run_batch persistence).
nlohmann::json analyze(const std::string& dir);

// Summary fitting helpers shared by presets and the acceptance suite.
double time_average(const std::vector<MetricsRecord>& metrics,
                    double MetricsRecord::*field);
double tail_average(const std::vector<MetricsRecord>& metrics,
                    double MetricsRecord::*field, double tail_fraction);

}  // namespace fspda
