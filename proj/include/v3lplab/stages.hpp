#pragma once

// The pipeline behind the CLI subcommands. Each stage reads the single
// run configuration, consumes its predecessor's artifacts and leaves its
// own under paths.out_dir, so stages can be rerun independently.

#include <string>
#include <vector>

#include "v3lplab/config.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/env.hpp"

namespace v3lplab::stages {

// Artifact locations, all derived from the configuration.
std::string features_csv_path(const config::ExperimentConfig& cfg);
std::string feature_stats_path(const config::ExperimentConfig& cfg);
std::string checkpoint_path(const config::ExperimentConfig& cfg);
std::string training_log_path(const config::ExperimentConfig& cfg);
std::string metrics_path(const config::ExperimentConfig& cfg, const std::string& strategy);
std::string trace_path(const config::ExperimentConfig& cfg, const std::string& strategy);
std::string report_csv_path(const config::ExperimentConfig& cfg);
std::string report_json_path(const config::ExperimentConfig& cfg);

// Pairs every feature row with the pool row at the same timestamp. The
// frame must be a timestamp subset of rows; a feature hour with no pool
// row is a std::invalid_argument naming the timestamp.
data::EnvData align_features(const data::FeatureFrame& frame,
                             const std::vector<data::PoolHourRow>& rows);

struct IngestSummary {
    int rows_fetched = 0;
    int rows_kept = 0;
    std::string csv_path;
};
// Pulls hourly rows from the configured source (synthetic generator, CSV
// file or subgraph endpoint), cleans them and writes paths.data_csv.
// A synthetic source under a calendar split anchors generation so the
// feature warm-up ends exactly at the period start.
IngestSummary run_ingest(const config::ExperimentConfig& cfg);

struct FeatureSummary {
    int rows = 0;
    std::vector<std::string> kept;
    std::string features_path;
    std::string stats_path;
};
// Indicator computation, fixed-list pruning, train-only normalization.
// Writes the normalized feature frame and the fitted stats.
FeatureSummary run_features(const config::ExperimentConfig& cfg);

// Reassembles the aligned dataset from the ingest and feature artifacts
// and cuts it into train/valid/test per the configured split.
data::EnvSplit load_split(const config::ExperimentConfig& cfg);

struct TrainSummary {
    int epochs_run = 0;
    int best_epoch = -1;
    double best_score = 0.0;
    std::string checkpoint;
    std::string log_path;
};
// Trains the configured agent on the train slice with per-epoch greedy
// validation; writes the best checkpoint, the training log and a
// manifest. config_text is the raw driving document, hashed into the
// manifest.
TrainSummary run_train(const config::ExperimentConfig& cfg, const std::string& config_text);

struct BacktestSummary {
    env::EpisodeMetrics metrics;
    std::string metrics_file;
    std::string trace_file;  // empty when the strategy leaves no hourly trace
};
// Replays one strategy over the test slice and writes its raw metrics
// (plus an hourly trace where one exists). Strategies: ddqn, mamba,
// tau_reset, ewa, dp, buy_and_hold, daily_rebalance.
BacktestSummary run_backtest(const config::ExperimentConfig& cfg, const std::string& strategy,
                             const std::string& config_text);

struct ReportSummary {
    int rows = 0;
    std::string csv_path;
    std::string json_path;
};
// Aggregates every metrics_*.json under out_dir into the relative table.
ReportSummary run_report(const config::ExperimentConfig& cfg);

}  // namespace v3lplab::stages
