#include "v3lplab/env.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace v3lplab::env {
namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

RewardMode reward_mode_from_string(const std::string& name) {
    if (name == "original") return RewardMode::original;
    if (name == "risk_penalized") return RewardMode::risk_penalized;
    throw std::domain_error("reward mode: unknown mode: " + name);
}

std::string to_string(RewardMode mode) {
    return mode == RewardMode::original ? "original" : "risk_penalized";
}

double compute_reward(RewardMode mode, double fee, double lvr, double gas_charged,
                      int action, int prev_action, double lambda, double l0) {
    if (l0 <= 0.0) throw std::domain_error("compute_reward: l0 must be positive");
    if (lambda < 0.0) throw std::domain_error("compute_reward: lambda must be nonnegative");
    switch (mode) {
        case RewardMode::original:
            return fee - gas_charged - lvr;
        case RewardMode::risk_penalized: {
            const double switch_pen = action != prev_action ? lambda : 0.0;
            return (fee - lambda * lvr - gas_charged - switch_pen) / l0;
        }
    }
    throw std::domain_error("compute_reward: unknown mode");
}

LpEnv::LpEnv(data::EnvData slice, EnvConfig config)
    : slice_(std::move(slice)), config_(config) {
    const auto n = static_cast<Eigen::Index>(slice_.rows.size());
    if (n < 2) throw std::domain_error("lp env: slice needs at least 2 rows");
    if (slice_.features.rows() != n) {
        throw std::domain_error("lp env: feature frame and rows are misaligned");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (slice_.features.timestamps[i] != slice_.rows[i].timestamp) {
            throw std::domain_error("lp env: feature frame and rows are misaligned");
        }
    }
    if (config_.l0 <= 0.0) throw std::domain_error("lp env: l0 must be positive");
    if (config_.gas_flat < 0.0) throw std::domain_error("lp env: gas_flat must be nonnegative");
    if (config_.lambda < 0.0) throw std::domain_error("lp env: lambda must be nonnegative");
    if (config_.tick_spacing <= 0) throw std::domain_error("lp env: tick_spacing must be positive");
    if (config_.max_width < 1) throw std::domain_error("lp env: max_width must be at least 1");
    feature_dim_ = slice_.features.cols();
    reset();
}

Eigen::VectorXd LpEnv::reset() {
    t_ = 0;
    done_ = false;
    cash_ = 0.0;
    fund_ = config_.l0;
    center_ = amm::snap_to_spacing(amm::price_to_tick(slice_.rows[0].close), config_.tick_spacing);
    width_ = 0;
    liquidity_ = 0.0;
    prev_action_ = 0;
    metrics_ = EpisodeMetrics{};
    trace_.clear();
    return observation();
}

StepOutcome LpEnv::step(int action) {
    if (done_) throw std::logic_error("lp env: step after episode end");
    if (action < 0 || action > config_.max_width) {
        throw std::domain_error("lp env: action out of range: " + std::to_string(action));
    }

    const double price = slice_.rows[t_].close;
    double gas = 0.0;
    if (action != 0) {
        // Close out, recenter at the snapped spot tick and redeploy the
        // whole budget. The fund account is not marked to the position;
        // it evolves by the hedged cost recursion below.
        const double budget = cash_ + fund_;
        center_ = amm::snap_to_spacing(amm::price_to_tick(price), config_.tick_spacing);
        width_ = action;
        const amm::PriceRange range = amm::make_range(center_, width_, config_.tick_spacing);
        liquidity_ = budget > 0.0 ? amm::solve_liquidity(budget, range, price) : 0.0;
        cash_ = 0.0;
        gas = config_.gas_flat;
        metrics_.realloc_count += 1;
    }

    const data::PoolHourRow& next = slice_.rows[t_ + 1];
    double fee = 0.0;
    double lvr = 0.0;
    double directional = 0.0;
    if (liquidity_ > 0.0) {
        const amm::PriceRange range = amm::make_range(center_, width_, config_.tick_spacing);
        const amm::Position pos{range, liquidity_, price};
        const int next_tick = amm::price_to_tick(next.close);
        const bool in_range = next_tick >= range.lower && next_tick < range.upper;
        fee = amm::accrue_fee(next.fees_usd, liquidity_, next.active_liquidity, in_range);
        lvr = amm::lvr_increment(pos, price, next.close);
        directional = amm::position_amounts(liquidity_, range, price).amount0 * (next.close - price);
    }

    cash_ += fee;
    fund_ += fee - gas - lvr;
    metrics_.sum_fee += fee;
    metrics_.sum_gas += gas;
    metrics_.sum_lvr += lvr;
    metrics_.sum_directional += directional;
    metrics_.steps += 1;

    double reward;
    if (config_.mode == RewardMode::original && config_.literal_lvr_bonus) {
        reward = fee - gas + lvr;
    } else {
        reward = compute_reward(config_.mode, fee, lvr, gas, action, prev_action_,
                                config_.lambda, config_.l0);
    }

    trace_.push_back(TraceRow{t_, action, fee, gas, lvr, cash_, fund_, center_, width_, price});

    prev_action_ = action;
    t_ += 1;
    done_ = t_ + 1 == static_cast<int>(slice_.rows.size());

    StepOutcome out;
    out.obs = observation();
    out.reward = reward;
    out.done = done_;
    return out;
}

Eigen::VectorXd LpEnv::observation() const {
    Eigen::VectorXd obs(obs_dim());
    obs.head(feature_dim_) = slice_.features.values.row(t_).transpose();
    obs[feature_dim_ + 0] = cash_;
    obs[feature_dim_ + 1] = static_cast<double>(center_);
    obs[feature_dim_ + 2] = static_cast<double>(width_);
    obs[feature_dim_ + 3] = fund_;
    return obs;
}

Eigen::MatrixXd window(const std::vector<Eigen::VectorXd>& history, int length) {
    if (history.empty()) throw std::domain_error("window: history must not be empty");
    if (length < 1) throw std::domain_error("window: length must be positive");
    const Eigen::Index dim = history.front().size();
    Eigen::MatrixXd out(length, dim);
    const int have = static_cast<int>(history.size());
    for (int i = 0; i < length; ++i) {
        const int src = std::max(0, have - length + i);
        out.row(i) = history[src].transpose();
    }
    return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("trace csv: cannot open " + path);
    out << "t,action,fee,gas,lvr,cash,fund,center,width,price\n";
    for (const TraceRow& r : trace) {
        out << r.t << ',' << r.action << ',' << fmt(r.fee) << ',' << fmt(r.gas) << ','
            << fmt(r.lvr) << ',' << fmt(r.cash) << ',' << fmt(r.fund) << ',' << r.center << ','
            << r.width << ',' << fmt(r.price) << '\n';
    }
    if (!out.flush()) throw std::runtime_error("trace csv: write failed: " + path);
}

}  // namespace v3lplab::env
