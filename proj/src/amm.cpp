#include "v3lplab/amm.hpp"

#include <algorithm>
#include <cmath>

namespace v3lplab::amm {

namespace {

// No domain check; price_to_tick probes one tick beyond the caller's value.
double tick_price_unchecked(int tick) {
    return std::pow(kTickBase, static_cast<double>(tick));
}

void require_price(double price, const char* who) {
    if (!std::isfinite(price) || price <= 0.0) {
        throw std::domain_error(std::string(who) + ": price must be positive and finite");
    }
}

}  // namespace

int price_to_tick(double price) {
    require_price(price, "price_to_tick");
    const double raw = std::log(price) / std::log(kTickBase);
    int t = static_cast<int>(std::floor(raw));
    // The log quotient can land a hair on the wrong side of an integer;
    // settle the floor against the forward map itself.
    while (tick_price_unchecked(t + 1) <= price) ++t;
    while (tick_price_unchecked(t) > price) --t;
    return t;
}

double tick_to_price(int tick) {
    if (tick < -kMaxTickAbs || tick > kMaxTickAbs) {
        throw std::domain_error("tick_to_price: |tick| exceeds 400000");
    }
    return tick_price_unchecked(tick);
}

double tick_to_sqrt_price(int tick) {
    if (tick < -kMaxTickAbs || tick > kMaxTickAbs) {
        throw std::domain_error("tick_to_sqrt_price: |tick| exceeds 400000");
    }
    return std::pow(kTickBase, 0.5 * static_cast<double>(tick));
}

int snap_to_spacing(int tick, int spacing) {
    if (spacing <= 0) throw std::domain_error("snap_to_spacing: spacing must be positive");
    // Quotients of ints this size round exactly in double, and exact .5
    // ties are representable, so llround gives half-away-from-zero ties.
    const long long k = std::llround(static_cast<double>(tick) / static_cast<double>(spacing));
    return static_cast<int>(k * spacing);
}

void validate_range(const PriceRange& range) {
    if (range.spacing <= 0) throw std::domain_error("range: spacing must be positive");
    if (range.lower >= range.upper) throw std::domain_error("range: lower must be below upper");
    if (range.lower % range.spacing != 0 || range.upper % range.spacing != 0) {
        throw std::domain_error("range: bounds must be multiples of the spacing");
    }
    if (range.lower < -kMaxTickAbs || range.upper > kMaxTickAbs) {
        throw std::domain_error("range: bounds exceed the tick domain");
    }
}

PriceRange make_range(int center_tick, int width, int spacing) {
    if (width <= 0) throw std::domain_error("make_range: width must be positive");
    if (spacing <= 0) throw std::domain_error("make_range: spacing must be positive");
    if (center_tick % spacing != 0) {
        throw std::domain_error("make_range: center tick not on the spacing grid");
    }
    PriceRange r{center_tick - width * spacing, center_tick + width * spacing, spacing};
    validate_range(r);
    return r;
}

int range_width(const PriceRange& range) {
    validate_range(range);
    return (range.upper - range.lower) / (2 * range.spacing);
}

TokenAmounts position_amounts(double liquidity, const PriceRange& range, double price) {
    validate_range(range);
    require_price(price, "position_amounts");
    if (!(liquidity >= 0.0)) throw std::domain_error("position_amounts: negative liquidity");
    const double sa = tick_to_sqrt_price(range.lower);
    const double sb = tick_to_sqrt_price(range.upper);
    const double s = std::clamp(std::sqrt(price), sa, sb);
    return {liquidity * (1.0 / s - 1.0 / sb), liquidity * (s - sa)};
}

double position_value(double liquidity, const PriceRange& range, double price) {
    const TokenAmounts a = position_amounts(liquidity, range, price);
    return a.amount1 + price * a.amount0;
}

double solve_liquidity(double budget_usd, const PriceRange& range, double price) {
    validate_range(range);
    require_price(price, "solve_liquidity");
    if (!(budget_usd > 0.0)) throw std::domain_error("solve_liquidity: budget must be positive");
    const double sa = tick_to_sqrt_price(range.lower);
    const double sb = tick_to_sqrt_price(range.upper);
    const double s = std::clamp(std::sqrt(price), sa, sb);
    // Value of one liquidity unit at this price; positive for any valid range.
    const double unit_value = price * (1.0 / s - 1.0 / sb) + (s - sa);
    return budget_usd / unit_value;
}

double accrue_fee(double pool_fee_usd, double agent_liquidity,
                  double pool_active_liquidity, bool in_range) {
    if (!(pool_fee_usd >= 0.0)) throw std::domain_error("accrue_fee: negative pool fee");
    if (!(agent_liquidity >= 0.0)) throw std::domain_error("accrue_fee: negative agent liquidity");
    if (!(pool_active_liquidity >= 0.0)) {
        throw std::domain_error("accrue_fee: negative pool liquidity");
    }
    if (!in_range || agent_liquidity == 0.0) return 0.0;
    return pool_fee_usd * agent_liquidity / (pool_active_liquidity + agent_liquidity);
}

double lvr_increment(const Position& position, double price_now, double price_next) {
    validate_range(position.range);
    require_price(price_now, "lvr_increment");
    require_price(price_next, "lvr_increment");
    if (!(position.liquidity >= 0.0)) throw std::domain_error("lvr_increment: negative liquidity");
    const double sa = tick_to_sqrt_price(position.range.lower);
    const double sb = tick_to_sqrt_price(position.range.upper);
    const double s = std::clamp(std::sqrt(price_now), sa, sb);
    const double s2 = std::clamp(std::sqrt(price_next), sa, sb);
    return position.liquidity * (s2 - s) * (price_next - s * s2) / (s * s2);
}

}  // namespace v3lplab::amm
