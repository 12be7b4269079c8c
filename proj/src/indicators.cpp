#include "v3lplab/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace v3lplab::ta {

namespace {

void require_same_size(std::initializer_list<const VectorXd*> series, const char* who) {
    const VectorXd* first = *series.begin();
    for (const VectorXd* s : series) {
        if (s->size() != first->size()) {
            throw std::invalid_argument(std::string(who) + ": series lengths differ");
        }
    }
    if (first->size() == 0) throw std::invalid_argument(std::string(who) + ": empty series");
}

void require_period(int period, const char* who) {
    if (period <= 0) throw std::invalid_argument(std::string(who) + ": period must be positive");
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

VectorXd ema(const VectorXd& x, int span) {
    require_same_size({&x}, "ema");
    require_period(span, "ema");
    const double alpha = 2.0 / (span + 1.0);
    VectorXd out(x.size());
    out[0] = x[0];
    for (Eigen::Index i = 1; i < x.size(); ++i) {
        out[i] = alpha * x[i] + (1.0 - alpha) * out[i - 1];
    }
    return out;
}

VectorXd sma(const VectorXd& x, int window) {
    require_same_size({&x}, "sma");
    require_period(window, "sma");
    VectorXd out(x.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        acc += x[i];
        if (i >= window) acc -= x[i - window];
        const Eigen::Index n = std::min<Eigen::Index>(i + 1, window);
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

VectorXd wilder(const VectorXd& x, int period) {
    require_same_size({&x}, "wilder");
    require_period(period, "wilder");
    VectorXd out(x.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i < period) {
            acc += x[i];
            out[i] = acc / static_cast<double>(i + 1);
        } else {
            out[i] = out[i - 1] + (x[i] - out[i - 1]) / period;
        }
    }
    return out;
}

VectorXd true_range(const VectorXd& high, const VectorXd& low, const VectorXd& close) {
    require_same_size({&high, &low, &close}, "true_range");
    VectorXd out(high.size());
    out[0] = high[0] - low[0];
    for (Eigen::Index i = 1; i < high.size(); ++i) {
        const double pc = close[i - 1];
        out[i] = std::max({high[i] - low[i], std::abs(high[i] - pc), std::abs(low[i] - pc)});
    }
    return out;
}

VectorXd dema(const VectorXd& x, int span) {
    const VectorXd e1 = ema(x, span);
    return 2.0 * e1 - ema(e1, span);
}

VectorXd cci(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period) {
    require_same_size({&high, &low, &close}, "cci");
    require_period(period, "cci");
    const VectorXd tp = (high + low + close) / 3.0;
    const VectorXd tp_sma = sma(tp, period);
    VectorXd out(tp.size());
    for (Eigen::Index i = 0; i < tp.size(); ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - period + 1);
        double dev = 0.0;
        for (Eigen::Index j = lo; j <= i; ++j) dev += std::abs(tp[j] - tp_sma[i]);
        dev /= static_cast<double>(i - lo + 1);
        out[i] = safe_div(tp[i] - tp_sma[i], 0.015 * dev);
    }
    return out;
}

VectorXd cmo(const VectorXd& close, int period) {
    require_same_size({&close}, "cmo");
    require_period(period, "cmo");
    const Eigen::Index n = close.size();
    VectorXd gain = VectorXd::Zero(n);
    VectorXd loss = VectorXd::Zero(n);
    for (Eigen::Index i = 1; i < n; ++i) {
        const double d = close[i] - close[i - 1];
        gain[i] = std::max(d, 0.0);
        loss[i] = std::max(-d, 0.0);
    }
    VectorXd out(n);
    double g = 0.0, l = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        g += gain[i];
        l += loss[i];
        if (i >= period) {
            g -= gain[i - period];
            l -= loss[i - period];
        }
        out[i] = safe_div(100.0 * (g - l), g + l);
    }
    return out;
}

VectorXd momentum(const VectorXd& close, int period) {
    require_same_size({&close}, "momentum");
    require_period(period, "momentum");
    VectorXd out = VectorXd::Zero(close.size());
    for (Eigen::Index i = period; i < close.size(); ++i) {
        out[i] = close[i] - close[i - period];
    }
    return out;
}

VectorXd trix(const VectorXd& close, int span) {
    const VectorXd e3 = ema(ema(ema(close, span), span), span);
    VectorXd out = VectorXd::Zero(e3.size());
    for (Eigen::Index i = 1; i < e3.size(); ++i) {
        out[i] = safe_div(100.0 * (e3[i] - e3[i - 1]), e3[i - 1]);
    }
    return out;
}

VectorXd ultimate_oscillator(const VectorXd& high, const VectorXd& low, const VectorXd& close,
                             int p1, int p2, int p3) {
    require_same_size({&high, &low, &close}, "ultimate_oscillator");
    require_period(p1, "ultimate_oscillator");
    const Eigen::Index n = close.size();
    VectorXd bp(n), tr(n);
    bp[0] = close[0] - low[0];
    tr[0] = high[0] - low[0];
    for (Eigen::Index i = 1; i < n; ++i) {
        const double pc = close[i - 1];
        bp[i] = close[i] - std::min(low[i], pc);
        tr[i] = std::max(high[i], pc) - std::min(low[i], pc);
    }
    auto ratio_at = [&](Eigen::Index i, int period) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - period + 1);
        double b = 0.0, t = 0.0;
        for (Eigen::Index j = lo; j <= i; ++j) {
            b += bp[j];
            t += tr[j];
        }
        return safe_div(b, t);
    };
    VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out[i] = 100.0 * (4.0 * ratio_at(i, p1) + 2.0 * ratio_at(i, p2) + ratio_at(i, p3)) / 7.0;
    }
    return out;
}

StochOut stochastic(const VectorXd& high, const VectorXd& low, const VectorXd& close,
                    int k_period, int k_smooth, int d_smooth) {
    require_same_size({&high, &low, &close}, "stochastic");
    require_period(k_period, "stochastic");
    const Eigen::Index n = close.size();
    VectorXd fast_k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - k_period + 1);
        double hh = high[lo], ll = low[lo];
        for (Eigen::Index j = lo; j <= i; ++j) {
            hh = std::max(hh, high[j]);
            ll = std::min(ll, low[j]);
        }
        // flat channel has no direction; park at the midpoint
        fast_k[i] = hh == ll ? 50.0 : 100.0 * (close[i] - ll) / (hh - ll);
    }
    StochOut out;
    out.k = sma(fast_k, k_smooth);
    out.d = sma(out.k, d_smooth);
    return out;
}

VectorXd smi(const VectorXd& high, const VectorXd& low, const VectorXd& close,
             int period, int smooth) {
    require_same_size({&high, &low, &close}, "smi");
    require_period(period, "smi");
    const Eigen::Index n = close.size();
    VectorXd dist(n), width(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - period + 1);
        double hh = high[lo], ll = low[lo];
        for (Eigen::Index j = lo; j <= i; ++j) {
            hh = std::max(hh, high[j]);
            ll = std::min(ll, low[j]);
        }
        dist[i] = close[i] - 0.5 * (hh + ll);
        width[i] = hh - ll;
    }
    const VectorXd num = ema(ema(dist, smooth), smooth);
    const VectorXd den = ema(ema(width, smooth), smooth);
    VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = safe_div(100.0 * num[i], 0.5 * den[i]);
    return out;
}

VectorXd natr(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period) {
    const VectorXd atr = wilder(true_range(high, low, close), period);
    VectorXd out(close.size());
    for (Eigen::Index i = 0; i < close.size(); ++i) out[i] = safe_div(100.0 * atr[i], close[i]);
    return out;
}

VectorXd psar(const VectorXd& high, const VectorXd& low,
              double accel_step, double accel_max) {
    require_same_size({&high, &low}, "psar");
    if (accel_step <= 0.0 || accel_max < accel_step) {
        throw std::invalid_argument("psar: bad acceleration parameters");
    }
    const Eigen::Index n = high.size();
    VectorXd out(n);
    out[0] = low[0];
    if (n == 1) return out;

    bool rising = high[1] + low[1] >= high[0] + low[0];
    double sar = rising ? low[0] : high[0];
    double ep = rising ? high[0] : low[0];
    double af = accel_step;
    out[0] = sar;
    for (Eigen::Index i = 1; i < n; ++i) {
        sar += af * (ep - sar);
        if (rising) {
            // never ratchet into the prior two bars
            sar = std::min(sar, low[i - 1]);
            if (i >= 2) sar = std::min(sar, low[i - 2]);
            if (low[i] < sar) {
                rising = false;
                sar = ep;
                ep = low[i];
                af = accel_step;
            } else if (high[i] > ep) {
                ep = high[i];
                af = std::min(af + accel_step, accel_max);
            }
        } else {
            sar = std::max(sar, high[i - 1]);
            if (i >= 2) sar = std::max(sar, high[i - 2]);
            if (high[i] > sar) {
                rising = true;
                sar = ep;
                ep = high[i];
                af = accel_step;
            } else if (low[i] < ep) {
                ep = low[i];
                af = std::min(af + accel_step, accel_max);
            }
        }
        out[i] = sar;
    }
    return out;
}

VectorXd bop(const VectorXd& open, const VectorXd& high, const VectorXd& low,
             const VectorXd& close) {
    require_same_size({&open, &high, &low, &close}, "bop");
    VectorXd out(open.size());
    for (Eigen::Index i = 0; i < open.size(); ++i) {
        out[i] = safe_div(close[i] - open[i], high[i] - low[i]);
    }
    return out;
}

DmiOut dmi(const VectorXd& high, const VectorXd& low, const VectorXd& close, int period) {
    require_same_size({&high, &low, &close}, "dmi");
    require_period(period, "dmi");
    const Eigen::Index n = close.size();
    VectorXd plus_dm = VectorXd::Zero(n);
    VectorXd minus_dm = VectorXd::Zero(n);
    for (Eigen::Index i = 1; i < n; ++i) {
        const double up = high[i] - high[i - 1];
        const double dn = low[i - 1] - low[i];
        if (up > dn && up > 0.0) plus_dm[i] = up;
        if (dn > up && dn > 0.0) minus_dm[i] = dn;
    }
    const VectorXd atr = wilder(true_range(high, low, close), period);
    const VectorXd p = wilder(plus_dm, period);
    const VectorXd m = wilder(minus_dm, period);
    VectorXd dx(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pdi = safe_div(100.0 * p[i], atr[i]);
        const double mdi = safe_div(100.0 * m[i], atr[i]);
        dx[i] = safe_div(100.0 * std::abs(pdi - mdi), pdi + mdi);
    }
    DmiOut out;
    out.dx = dx;
    out.adx = wilder(dx, period);
    return out;
}

VectorXd aroon_oscillator(const VectorXd& high, const VectorXd& low, int period) {
    require_same_size({&high, &low}, "aroon_oscillator");
    require_period(period, "aroon_oscillator");
    const Eigen::Index n = high.size();
    VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - period);
        Eigen::Index hi_idx = lo, lo_idx = lo;
        for (Eigen::Index j = lo; j <= i; ++j) {
            if (high[j] >= high[hi_idx]) hi_idx = j;
            if (low[j] <= low[lo_idx]) lo_idx = j;
        }
        const double up = 100.0 * static_cast<double>(period - (i - hi_idx)) / period;
        const double down = 100.0 * static_cast<double>(period - (i - lo_idx)) / period;
        out[i] = up - down;
    }
    return out;
}

VectorXd apo(const VectorXd& close, int fast, int slow) {
    if (fast >= slow) throw std::invalid_argument("apo: fast span must be below slow span");
    return ema(close, fast) - ema(close, slow);
}

}  // namespace v3lplab::ta
