#pragma once

// The comparison strategies the learned agents are measured against: uniform
// width-tau reset, exponential-weights width selection, grid dynamic
// programming on a discretized price lattice, buy-and-hold, and fixed daily
// rebalancing. All range strategies run through the backtest environment so
// every number shares the same accounting.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "v3lplab/data.hpp"
#include "v3lplab/env.hpp"
#include "v3lplab/rng.hpp"

namespace v3lplab::baselines {

using PolicyFn = std::function<int(const env::LpEnv&)>;

// Drives one full episode with the given state-reading policy and returns the
// episode totals.
env::EpisodeMetrics run_policy(env::LpEnv& lp_env, const PolicyFn& policy);

// Width-tau reset rule: deploy at width tau when no position exists or when
// the spot tick has left the closed band center +- tau spacings, hold
// otherwise.
int tau_reset_action(const env::LpEnv& lp_env, int tau);

env::EpisodeMetrics tau_reset_run(const data::EnvData& slice, const env::EnvConfig& config,
                                  int tau);

// Recenters at a fixed width on the first step and then every 24 hours,
// regardless of price.
env::EpisodeMetrics daily_rebalance_run(const data::EnvData& slice, const env::EnvConfig& config,
                                        int width);

// Converts the budget to the risky token at the first open and values it at
// the last close; no fees, gas, or hedging anywhere.
env::EpisodeMetrics buy_and_hold(const data::EnvData& slice, double l0);

struct EwaParams {
    int n_arms = 10;        // candidate widths 1..n_arms
    double eta = 1.0;       // weight on cumulative reward
    int reeval_hours = 21;  // hours between draws
};

// Softmax of eta-scaled cumulative rewards, computed with max subtraction.
Eigen::VectorXd ewa_probabilities(const Eigen::VectorXd& cumulative_rewards, double eta);

struct EwaResult {
    env::EpisodeMetrics metrics;
    Eigen::VectorXd final_probabilities;
    std::vector<int> chosen_widths;  // one entry per re-evaluation
    std::vector<env::TraceRow> trace;
};

// Exponential-weights width selection: every reeval_hours steps a width is
// drawn from the current probabilities and deployed. Between draws the
// position is held. Every arm's cumulative reward is updated at each draw
// with its budget-relative interval result, the unchosen arms evaluated
// counterfactually over the elapsed interval.
EwaResult ewa_run(const data::EnvData& slice, const env::EnvConfig& config,
                  const EwaParams& params, std::uint64_t seed);

// Generic finite MDP with one transition kernel per action; the grid price
// model and the test oracles both use it.
struct FiniteMdp {
    std::vector<Eigen::MatrixXd> kernels;  // per action, states x states
    Eigen::MatrixXd rewards;               // states x actions
    double gamma = 0.95;
};

struct ValueIterationResult {
    Eigen::VectorXd values;
    std::vector<int> policy;
    std::vector<double> residuals;  // sup-norm change per sweep
};

// Value iteration to sup-norm tolerance; throws std::domain_error on a
// non-stochastic kernel or gamma outside [0, 1).
ValueIterationResult value_iterate(const FiniteMdp& mdp, double tolerance = 1e-8,
                                   int max_sweeps = 100000);

struct DpConfig {
    int grid_nodes = 201;
    double grid_stds = 4.0;  // half-span of the log grid in train stdevs
    double gamma = 0.95;
    double tolerance = 1e-8;
};

// Price lattice with per-width expected objective rows. The kernel moves one
// node up or down with probability q/2 each and stays otherwise, q chosen to
// match the train-slice hourly log-return variance.
struct DpModel {
    Eigen::VectorXd grid;  // node prices, ascending
    double sigma_hourly = 0.0;
    double avg_fee_usd = 0.0;
    double avg_pool_liquidity = 0.0;
    FiniteMdp mdp;
    ValueIterationResult solution;
};

// Estimates the lattice from the train slice and solves it. The action set is
// width 0 (stay out) plus widths 1..max_width from the environment config.
DpModel dp_solve(const data::EnvData& train_slice, const env::EnvConfig& config,
                 const DpConfig& dp_config);

// Width prescribed by the solved model at the given spot price.
int dp_action(const DpModel& model, double price);

// One step of the solved policy against a live environment: reallocates
// when the prescribed width differs from the deployed one or the spot
// tick has left the deployed range, holds otherwise.
int dp_policy_action(const DpModel& model, const env::LpEnv& lp_env);

// Runs the solved policy through the environment.
env::EpisodeMetrics dp_run(const data::EnvData& slice, const env::EnvConfig& config,
                           const DpModel& model);

}  // namespace v3lplab::baselines
