#pragma once

// Hourly liquidity-provision decision process over a cleaned pool-hour
// slice: action 0 holds the current range, action k > 0 recenters at the
// snapped spot tick with half-width k spacings and redeploys the budget.

#include <cstdint>
#include <string>
#include <vector>

#include "v3lplab/amm.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/environment.hpp"

namespace v3lplab::env {

enum class RewardMode { original, risk_penalized };

RewardMode reward_mode_from_string(const std::string& name);
std::string to_string(RewardMode mode);

struct EnvConfig {
    RewardMode mode = RewardMode::original;
    double lambda = 0.5;      // risk weight, risk_penalized mode only
    double l0 = 250.0;        // initial fund, USD
    double gas_flat = 5.0;    // charged per reallocation, USD
    int tick_spacing = 60;
    int max_width = 10;       // actions 0..max_width
    // Ablation switch: score the original-mode reward with the adverse
    // selection term added instead of subtracted. Accounting is unaffected.
    bool literal_lvr_bonus = false;
};

// Reward of one step from its cost components. prev_action is the action
// taken one step earlier (0 at the episode start).
double compute_reward(RewardMode mode, double fee, double lvr, double gas_charged,
                      int action, int prev_action, double lambda, double l0);

// Per-episode cost decomposition. The hedged PnL ignores the directional
// exposure of holding token0; the unhedged PnL adds it back.
struct EpisodeMetrics {
    double sum_fee = 0.0;
    double sum_gas = 0.0;
    double sum_lvr = 0.0;
    double sum_directional = 0.0;
    int realloc_count = 0;
    int steps = 0;

    double pnl_hedged() const { return sum_fee - sum_gas - sum_lvr; }
    double pnl_unhedged() const { return pnl_hedged() + sum_directional; }
};

struct TraceRow {
    int t = 0;
    int action = 0;
    double fee = 0.0;
    double gas = 0.0;
    double lvr = 0.0;
    double cash = 0.0;
    double fund = 0.0;
    int center = 0;
    int width = 0;
    double price = 0.0;  // decision-time close
};

class LpEnv final : public Environment {
  public:
    // The slice must hold at least two aligned rows; an episode has
    // rows-1 steps, one per hour boundary.
    LpEnv(data::EnvData slice, EnvConfig config);

    Eigen::VectorXd reset() override;
    StepOutcome step(int action) override;
    int action_count() const override { return config_.max_width + 1; }
    Eigen::Index obs_dim() const override { return feature_dim_ + 4; }
    double episode_score() const override { return metrics_.pnl_hedged(); }

    bool done() const { return done_; }
    int time_index() const { return t_; }
    const data::PoolHourRow& current_row() const { return slice_.rows[t_]; }
    Eigen::Index episode_steps() const {
        return static_cast<Eigen::Index>(slice_.rows.size()) - 1;
    }

    bool has_position() const { return width_ > 0; }
    int center() const { return center_; }
    int width() const { return width_; }
    double liquidity() const { return liquidity_; }
    double cash() const { return cash_; }
    double fund() const { return fund_; }

    const EnvConfig& config() const { return config_; }
    const EpisodeMetrics& metrics() const { return metrics_; }
    const std::vector<TraceRow>& trace() const { return trace_; }

  private:
    Eigen::VectorXd observation() const;

    data::EnvData slice_;
    EnvConfig config_;
    Eigen::Index feature_dim_ = 0;

    int t_ = 0;
    bool done_ = false;
    double cash_ = 0.0;
    double fund_ = 0.0;
    int center_ = 0;
    int width_ = 0;
    double liquidity_ = 0.0;
    int prev_action_ = 0;
    EpisodeMetrics metrics_;
    std::vector<TraceRow> trace_;
};

// Observation history stacked oldest-first into a fixed-length window,
// left-padded by repeating the earliest entry.
Eigen::MatrixXd window(const std::vector<Eigen::VectorXd>& history, int length);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace v3lplab::env
