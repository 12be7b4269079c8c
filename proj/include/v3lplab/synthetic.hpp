#pragma once

// Deterministic synthetic pool history: a seeded GBM close path with
// consistent OHLC envelopes, lognormal volume, proportional fees and a
// noisy active-liquidity level. Used for fixtures and offline smoke runs.

#include <cstdint>
#include <vector>

#include "v3lplab/data.hpp"

namespace v3lplab::synth {

struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::int64_t start_ts = 1627862400;  // 2021-08-02T00:00:00Z
    int hours = 2000;
    double init_price = 2000.0;
    double hourly_vol = 0.005;
    double drift = 0.0;                  // per-hour log drift
    double volume_base = 300000.0;       // USD per hour, lognormal around this
    double volume_vol = 0.6;
    double fee_tier = 0.003;
    double liquidity_base = 300000.0;
    double liquidity_vol = 0.2;
};

std::vector<data::PoolHourRow> generate(const SyntheticSpec& spec);

}  // namespace v3lplab::synth
