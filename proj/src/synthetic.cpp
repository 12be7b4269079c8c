#include "v3lplab/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "v3lplab/amm.hpp"
#include "v3lplab/rng.hpp"

namespace v3lplab::synth {

std::vector<data::PoolHourRow> generate(const SyntheticSpec& spec) {
    if (spec.hours <= 0) throw std::invalid_argument("synthetic: hours must be positive");
    if (spec.init_price <= 0.0) throw std::invalid_argument("synthetic: price must be positive");
    Rng rng(spec.seed);
    std::vector<data::PoolHourRow> rows;
    rows.reserve(spec.hours);
    double prev_close = spec.init_price;
    for (int h = 0; h < spec.hours; ++h) {
        data::PoolHourRow r;
        r.timestamp = spec.start_ts + static_cast<std::int64_t>(h) * 3600;
        r.open = prev_close;
        const double z = rng.normal();
        r.close = r.open * std::exp(spec.drift - 0.5 * spec.hourly_vol * spec.hourly_vol +
                                    spec.hourly_vol * z);
        const double wick_hi = std::abs(rng.normal()) * spec.hourly_vol * 0.5;
        const double wick_lo = std::abs(rng.normal()) * spec.hourly_vol * 0.5;
        r.high = std::max(r.open, r.close) * std::exp(wick_hi);
        r.low = std::min(r.open, r.close) * std::exp(-wick_lo);
        const double vz = rng.normal();
        r.volume_usd = spec.volume_base *
                       std::exp(spec.volume_vol * vz - 0.5 * spec.volume_vol * spec.volume_vol);
        r.fees_usd = r.volume_usd * spec.fee_tier;
        const double lz = rng.normal();
        r.active_liquidity =
            spec.liquidity_base *
            std::exp(spec.liquidity_vol * lz - 0.5 * spec.liquidity_vol * spec.liquidity_vol);
        r.tick = amm::price_to_tick(r.close);
        rows.push_back(r);
        prev_close = r.close;
    }
    return rows;
}

}  // namespace v3lplab::synth
