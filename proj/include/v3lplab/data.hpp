#pragma once

// Hourly pool data plumbing: cleaning, the canonical feature set,
// correlation pruning, train-only normalization, period splits and CSV
// round trips.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace v3lplab::data {

// One hour of pool history. Prices quote token0 in units of token1 (USD).
struct PoolHourRow {
    std::int64_t timestamp = 0;  // hour start, unix seconds
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume_usd = 0.0;
    double fees_usd = 0.0;
    double active_liquidity = 0.0;
    int tick = 0;
};

// Rows x features matrix with aligned hour timestamps.
struct FeatureFrame {
    std::vector<std::string> names;
    std::vector<std::int64_t> timestamps;
    Eigen::MatrixXd values;  // timestamps.size() rows, names.size() cols

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    int column_index(const std::string& name) const;  // -1 when absent
};

// Feature frame plus the raw rows at the same timestamps; what the
// backtest environment consumes.
struct EnvData {
    FeatureFrame features;
    std::vector<PoolHourRow> rows;
};

// Keep the first row per timestamp (input order), drop rows with any
// non-finite field, return sorted ascending by timestamp.
std::vector<PoolHourRow> clean_rows(const std::vector<PoolHourRow>& rows);

// Rows dropped from the head of the indicator output while the windowed
// kernels stabilize.
inline constexpr int kWarmupRows = 50;

// The fixed 28-column indicator layout, in order.
const std::vector<std::string>& canonical_feature_names();

// Full canonical frame over the cleaned rows, warm-up prefix removed.
// Throws std::invalid_argument when fewer than kWarmupRows + 1 rows remain.
FeatureFrame compute_features(const std::vector<PoolHourRow>& rows);

// Greedy Pearson pruning in canonical column order: a column is dropped
// when its |correlation| with an already-kept column exceeds the threshold.
struct PruneResult {
    std::vector<std::string> kept;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;  // e.g. zero-variance columns
};
PruneResult prune_features(const FeatureFrame& frame, double threshold);

// Frame restricted to `names`, in the given order.
FeatureFrame select_features(const FeatureFrame& frame, const std::vector<std::string>& names);

// Per-feature z-score parameters fitted on a training slice only.
// log_features are log-transformed before the fit and before every apply.
struct NormalizerStats {
    std::vector<std::string> names;
    std::vector<bool> log_flag;
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // population convention
};
NormalizerStats fit_normalizer(const FeatureFrame& train,
                               const std::vector<std::string>& log_features);
FeatureFrame apply_normalizer(const NormalizerStats& stats, const FeatureFrame& frame);

std::string normalizer_to_json(const NormalizerStats& stats);
NormalizerStats normalizer_from_json(const std::string& text);

// Contiguous train/valid/test slice description anchored at a start time.
struct PeriodSpec {
    std::string id;
    std::int64_t start_ts = 0;
    std::int64_t end_ts = 0;  // informational
    int n_train = 0;
    int n_valid = 0;
    int n_test = 0;
};

struct SplitIndex {
    Eigen::Index train_begin = 0, train_end = 0;
    Eigen::Index valid_end = 0, test_end = 0;
};

// Locate the spec's slices inside ascending timestamps. Throws
// std::invalid_argument naming the shortfall when coverage is insufficient.
SplitIndex locate_split(const std::vector<std::int64_t>& timestamps, const PeriodSpec& spec);

struct FrameSplit {
    FeatureFrame train, valid, test;
};
FrameSplit split_dataset(const FeatureFrame& frame, const PeriodSpec& spec);

struct EnvSplit {
    EnvData train, valid, test;
};
EnvSplit split_dataset(const EnvData& dataset, const PeriodSpec& spec);

// Fraction-based split for fixtures without calendar anchoring.
EnvSplit split_fractions(const EnvData& dataset, double train_frac, double valid_frac);

// "YYYY-MM-DD" -> unix seconds at UTC midnight.
std::int64_t parse_utc_date(const std::string& text);

// CSV round trips. Pool schema:
//   timestamp,open,high,low,close,volume_usd,fees_usd,active_liquidity,tick
// Feature files carry timestamp plus one column per feature. Numbers are
// written with 17 significant digits so values survive the round trip
// bit-exactly.
void write_pool_csv(const std::string& path, const std::vector<PoolHourRow>& rows);
std::vector<PoolHourRow> read_pool_csv(const std::string& path);
void write_feature_csv(const std::string& path, const FeatureFrame& frame);
FeatureFrame read_feature_csv(const std::string& path);

}  // namespace v3lplab::data
