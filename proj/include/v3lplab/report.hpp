#pragma once

// Run reporting: l0-relative metric tables with best-per-period markers,
// reproducibility manifests, and plot-ready CSV series.

#include <cstdint>
#include <string>
#include <vector>

#include "v3lplab/agents.hpp"
#include "v3lplab/env.hpp"

namespace v3lplab::report {

struct StrategyResult {
    std::string strategy;
    std::string period;  // display label, e.g. "1"
    double l0 = 0.0;     // divisor for the relative columns
    env::EpisodeMetrics metrics;
};

// CSV with header strategy,period,rel_fee,rel_gas,rel_lvr,rel_pnl, one
// row per result in input order. Values are metric / l0, fixed six
// decimals. rel_pnl uses the hedged PnL. Throws std::invalid_argument on
// empty input or nonpositive l0.
std::string metrics_csv(const std::vector<StrategyResult>& results);

// JSON mirror of the CSV: same rows and rounding, plus direction
// metadata (fee and PnL score upward, gas and LVR downward) and a "best"
// marker list per row naming the columns where it beats its period group.
std::string metrics_json(const std::vector<StrategyResult>& results);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);  // 16 lowercase hex digits

struct ManifestInput {
    std::string name;
    std::string path;
};

// Reproducibility record: hash of the driving config text, the master
// seed, and a content hash per input file. Throws std::runtime_error
// naming any unreadable input path.
std::string manifest_json(const std::string& config_text, std::uint64_t seed,
                          const std::vector<ManifestInput>& inputs);

// epoch,td_loss,valid_pnl,epsilon; numbers carry 17 significant digits
// so reruns of the same seed produce byte-identical files.
std::string training_log_csv(const std::vector<agents::TrainLogRow>& log);

// t,action,fee,gas,lvr,cash,fund,center,width,price at 17 significant
// digits; the price column doubles as the plot-ready price series.
std::string trace_csv(const std::vector<env::TraceRow>& trace);

// Writes text to path, throwing std::runtime_error naming the path on
// failure. Parent directories must already exist.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace v3lplab::report
