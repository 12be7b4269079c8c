#pragma once

// Technical-indicator kernels over hourly OHLCV series. Every kernel returns
// a vector aligned with its input and finite at every index: windows that are
// not yet full fall back to the available prefix, and flat-window edge cases
// resolve to a neutral value instead of NaN. Callers are expected to discard
// a warm-up prefix before using the values.

#include <Eigen/Dense>

namespace v3lplab::ta {

using Eigen::VectorXd;

// Exponential moving average, alpha = 2/(span+1), seeded at x[0].
VectorXd ema(const VectorXd& x, int span);

// Simple moving average over `window` samples; shorter prefixes average what
// exists.
VectorXd sma(const VectorXd& x, int window);

// Wilder's smoothing (period-length running average with 1/period decay),
// seeded with the prefix mean.
VectorXd wilder(const VectorXd& x, int period);

// True range: max(h-l, |h - prev_c|, |l - prev_c|); first bar h-l.
VectorXd true_range(const VectorXd& high, const VectorXd& low, const VectorXd& close);

// 2 * EMA(x) - EMA(EMA(x)).
VectorXd dema(const VectorXd& x, int span);

// Commodity channel index: (tp - SMA(tp)) / (0.015 * mean |tp - SMA(tp)|),
// tp = (h+l+c)/3; zero where the mean deviation vanishes.
VectorXd cci(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period);

// Chande momentum oscillator over `period` one-bar changes.
VectorXd cmo(const VectorXd& close, int period);

// close_t - close_{t-period}; zero inside the first period.
VectorXd momentum(const VectorXd& close, int period);

// 1-bar rate of change (x100) of a triple EMA.
VectorXd trix(const VectorXd& close, int span);

// Ultimate oscillator on the 7/14/28 buying-pressure ratios.
VectorXd ultimate_oscillator(const VectorXd& high, const VectorXd& low, const VectorXd& close,
                             int p1, int p2, int p3);

// Slow stochastic %K and %D (k_period lookback, then two SMA smoothings).
struct StochOut {
    VectorXd k;
    VectorXd d;
};
StochOut stochastic(const VectorXd& high, const VectorXd& low, const VectorXd& close,
                    int k_period, int k_smooth, int d_smooth);

// Stochastic momentum index: distance of the close from the midpoint of the
// `period` high/low channel, double-EMA smoothed with `smooth` spans,
// scaled to +-100.
VectorXd smi(const VectorXd& high, const VectorXd& low, const VectorXd& close,
             int period, int smooth);

// Normalized ATR: 100 * wilder(TR) / close.
VectorXd natr(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period);

// Welles Wilder's parabolic stop-and-reverse.
VectorXd psar(const VectorXd& high, const VectorXd& low,
              double accel_step, double accel_max);

// Balance of power: (c - o) / (h - l), zero on a flat bar.
VectorXd bop(const VectorXd& open, const VectorXd& high, const VectorXd& low,
             const VectorXd& close);

// Directional movement pieces, Wilder-smoothed over `period`.
struct DmiOut {
    VectorXd dx;    // directional movement index
    VectorXd adx;   // its Wilder smoothing
};
DmiOut dmi(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period);

// Aroon oscillator over a (period+1)-bar window; ties go to the most
// recent extreme.
VectorXd aroon_oscillator(const VectorXd& high, const VectorXd& low, int period);

// Absolute price oscillator: EMA(fast) - EMA(slow).
VectorXd apo(const VectorXd& close, int fast, int slow);

}  // namespace v3lplab::ta
