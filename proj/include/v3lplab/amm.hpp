#pragma once

// Concentrated-liquidity pool math on decimal prices.
//
// A position holds liquidity L on a tick range [lower, upper] with
// price(tick) = 1.0001^tick. Token amounts follow the three-regime closed
// form: all token0 below the range, all token1 above, a mix inside. All
// USD values are amount1 + price * amount0.

#include <stdexcept>

namespace v3lplab::amm {

inline constexpr double kTickBase = 1.0001;

// price(tick) stays comfortably inside double range for |tick| <= 400000.
inline constexpr int kMaxTickAbs = 400000;

// Largest integer t with 1.0001^t <= price. Throws std::domain_error on a
// non-positive or non-finite price.
int price_to_tick(double price);

// 1.0001^tick. Throws std::domain_error when |tick| > kMaxTickAbs.
double tick_to_price(int tick);

// 1.0001^(tick/2); same domain as tick_to_price.
double tick_to_sqrt_price(int tick);

// Nearest multiple of spacing, ties rounded half away from zero.
int snap_to_spacing(int tick, int spacing);

// Symmetric range of half-width `width` spacing units around a snapped
// center tick.
struct PriceRange {
    int lower = 0;
    int upper = 0;
    int spacing = 1;
};

// Throws std::domain_error unless lower < upper, both bounds are multiples
// of spacing and inside the tick domain.
void validate_range(const PriceRange& range);

// [center - width*spacing, center + width*spacing]; center must already be
// snapped to the spacing grid.
PriceRange make_range(int center_tick, int width, int spacing);

// Half-width in spacing units; exact for ranges built by make_range.
int range_width(const PriceRange& range);

struct TokenAmounts {
    double amount0 = 0.0;  // risky token
    double amount1 = 0.0;  // numeraire
};

struct Position {
    PriceRange range;
    double liquidity = 0.0;
    double open_price = 0.0;  // bookkeeping only; valuation depends on spot
};

// Token amounts backing `liquidity` at the given spot price. With
// s = clamp(sqrt(price), sqrt(pa), sqrt(pb)):
//   amount0 = L * (1/s - 1/sqrt(pb)),  amount1 = L * (s - sqrt(pa))
// which reproduces all three regimes and is continuous at the edges.
TokenAmounts position_amounts(double liquidity, const PriceRange& range, double price);

// USD value amount1 + price * amount0 of the position at the spot price.
double position_value(double liquidity, const PriceRange& range, double price);

// Liquidity purchasable with budget_usd deployed at `price` on `range`:
// budget divided by the per-unit position value. Throws std::domain_error
// on budget <= 0.
double solve_liquidity(double budget_usd, const PriceRange& range, double price);

// Agent's slice of one hour of pool fees. Zero when out of range; otherwise
// pool_fee_usd * L_agent / (L_pool + L_agent). Adding the agent's own
// liquidity to the denominator keeps the share in [0, 1) and well defined
// for a thin pool.
double accrue_fee(double pool_fee_usd, double agent_liquidity,
                  double pool_active_liquidity, bool in_range);

// One-step loss versus the rebalancing portfolio: value of the amounts held
// at price_now, marked at price_next, minus the position value at
// price_next. Nonnegative by concavity of the position value; exactly zero
// when the price does not move or both prices sit on the same side outside
// the range. Evaluated in the cancellation-free form
//   L * (s' - s) * (p' - s*s') / (s*s'),   s = clamp(sqrt(p)), s' = clamp(sqrt(p')).
double lvr_increment(const Position& position, double price_now, double price_next);

}  // namespace v3lplab::amm
