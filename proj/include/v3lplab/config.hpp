#pragma once

// Run configuration: the single JSON document that drives a run, plus
// loaders for the shipped parameter tables under config/.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "v3lplab/baselines.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/env.hpp"

namespace v3lplab::config {

// Malformed or out-of-range configuration. The message always names the
// offending field as "config.<field>: <problem>" so the CLI can surface
// it on one line.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Where the hourly rows come from during ingest.
struct SourceSection {
    std::string kind = "synthetic";  // "synthetic" | "csv" | "subgraph"
    // first generated or fetched hour; a calendar split re-anchors this
    std::string start_date = "2021-08-02";
    // synthetic
    std::uint64_t synth_seed = 1;
    int hours = 2000;
    // csv
    std::string path;
    // subgraph
    std::string url;
    std::string pool_address;
    int page_size = 1000;
};

// How the aligned dataset is cut into train/valid/test.
struct SplitSection {
    std::string kind = "fractions";  // "fractions" | "period"
    double train_frac = 0.8;         // fractions mode
    double valid_frac = 0.1;
};

struct TrainSection {
    int max_epochs = 200;
    int patience = 10;
    int steps_per_epoch = 0;  // 0 means one pass over the train slice
    int window_length = 32;   // sequence agent only
};

struct PathsSection {
    std::string data_csv = "out/pool_hours.csv";
    std::string tables_dir = "config";
    std::string out_dir = "out";
};

struct ExperimentConfig {
    std::string pool;   // table key, e.g. "ETH_USDC_03"
    int period = 1;     // 1..4
    double l0 = 250.0;  // initial fund, USD
    std::string agent = "ddqn";            // "ddqn" | "mamba"
    std::string reward_mode = "original";  // "original" | "risk"
    double lambda = 0.5;
    double gas_flat = 5.0;
    int max_width = 10;  // actions 0..max_width
    int tick_spacing = 60;
    bool literal_lvr_bonus = false;
    std::uint64_t seed = 1;
    PathsSection paths;
    SourceSection source;
    SplitSection split;
    TrainSection train;

    env::EnvConfig env_config() const;
};

// Parses and validates; throws ConfigError naming the first bad field.
// Unknown top-level keys are rejected so typos fail loudly.
ExperimentConfig experiment_from_json(const std::string& text);

// Reads the file, parses, then applies environment overrides to the path
// fields only: V3LPLAB_DATA_CSV, V3LPLAB_TABLES_DIR, V3LPLAB_OUT_DIR.
ExperimentConfig load_experiment(const std::string& path);

// Agent trainer hyperparameters as shipped in ddqn.json.
struct DdqnTable {
    std::vector<int> hidden_units;
    std::string hidden_activation;
    std::string final_activation;
    double learning_rate = 0.0;
    int batch_size = 0;
    std::int64_t buffer_size = 0;
    double discount = 0.0;
    double target_update_rate = 0.0;
    double grad_clip_norm = 0.0;
};
DdqnTable load_ddqn_table(const std::string& path);

// Parameter tables keyed by (pool, period, l0) as shipped in
// baselines.json. Lookups throw ConfigError when the key is absent or l0
// is not one of the tabulated funding levels.
class BaselineTables {
  public:
    int tau(const std::string& pool, int period, double l0) const;
    baselines::EwaParams ewa(const std::string& pool, int period, double l0) const;

  private:
    friend BaselineTables load_baseline_tables(const std::string& path);
    std::map<std::string, int> tau_;  // keys are "<pool>/<period>/<l0>"
    std::map<std::string, baselines::EwaParams> ewa_;
};
BaselineTables load_baseline_tables(const std::string& path);

// Calendar slice for (pool, period) as shipped in periods.json. The
// returned id is "<pool>/<period>".
data::PeriodSpec load_period_spec(const std::string& path, const std::string& pool, int period);

// The fixed feature lists shipped in features.json: the canonical
// indicator order, the columns dropped by correlation pruning, and the
// columns that are log-transformed before normalization.
struct FeatureTable {
    std::vector<std::string> canonical_order;
    std::vector<std::string> dropped;
    std::vector<std::string> log_transform;
    double correlation_threshold = 0.0;
    int warmup_rows = 0;

    // canonical_order minus dropped, original order preserved
    std::vector<std::string> kept() const;
};
FeatureTable load_feature_table(const std::string& path);

}  // namespace v3lplab::config
