#include "v3lplab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "v3lplab/amm.hpp"

namespace v3lplab::baselines {

namespace {

bool tick_in_range(int tick, const amm::PriceRange& range) {
    return tick >= range.lower && tick < range.upper;
}

// Per-interval result of holding one candidate width, deployed at the
// interval's opening price with the budget the live run had there. For the
// width actually chosen this reproduces the environment's accounting exactly,
// so the chosen arm's update is its realized reward.
double interval_arm_reward(const std::vector<data::PoolHourRow>& rows, std::size_t from,
                           std::size_t to, int width, double budget,
                           const env::EnvConfig& config) {
    const double p_open = rows[from].close;
    const int center = amm::snap_to_spacing(amm::price_to_tick(p_open), config.tick_spacing);
    const amm::PriceRange range = amm::make_range(center, width, config.tick_spacing);
    amm::Position pos;
    pos.range = range;
    pos.liquidity = budget > 0.0 ? amm::solve_liquidity(budget, range, p_open) : 0.0;
    pos.open_price = p_open;

    double fee = 0.0;
    double lvr = 0.0;
    for (std::size_t t = from; t < to; ++t) {
        const auto& next = rows[t + 1];
        const bool in_range = tick_in_range(amm::price_to_tick(next.close), range);
        fee += amm::accrue_fee(next.fees_usd, pos.liquidity, next.active_liquidity, in_range);
        lvr += amm::lvr_increment(pos, rows[t].close, next.close);
    }
    return (fee - config.gas_flat - lvr) / config.l0;
}

void check_slice(const data::EnvData& slice, const char* who) {
    if (slice.rows.size() < 2)
        throw std::invalid_argument(std::string(who) + " needs at least 2 rows, got " +
                                    std::to_string(slice.rows.size()));
}

}  // namespace

env::EpisodeMetrics run_policy(env::LpEnv& lp_env, const PolicyFn& policy) {
    lp_env.reset();
    while (!lp_env.done()) lp_env.step(policy(lp_env));
    return lp_env.metrics();
}

int tau_reset_action(const env::LpEnv& lp_env, int tau) {
    if (tau < 1) throw std::domain_error("tau must be at least 1");
    if (!lp_env.has_position()) return tau;
    const int tick = amm::price_to_tick(lp_env.current_row().close);
    const int band = tau * lp_env.config().tick_spacing;
    if (tick >= lp_env.center() - band && tick <= lp_env.center() + band) return 0;
    return tau;
}

env::EpisodeMetrics tau_reset_run(const data::EnvData& slice, const env::EnvConfig& config,
                                  int tau) {
    env::LpEnv lp_env(slice, config);
    return run_policy(lp_env, [tau](const env::LpEnv& e) { return tau_reset_action(e, tau); });
}

env::EpisodeMetrics daily_rebalance_run(const data::EnvData& slice, const env::EnvConfig& config,
                                        int width) {
    if (width < 1) throw std::domain_error("rebalance width must be at least 1");
    env::LpEnv lp_env(slice, config);
    return run_policy(lp_env, [width](const env::LpEnv& e) {
        return e.time_index() % 24 == 0 ? width : 0;
    });
}

env::EpisodeMetrics buy_and_hold(const data::EnvData& slice, double l0) {
    check_slice(slice, "buy_and_hold");
    if (l0 <= 0.0) throw std::domain_error("l0 must be positive");
    const double p_start = slice.rows.front().open;
    const double p_end = slice.rows.back().close;
    if (p_start <= 0.0) throw std::domain_error("first open price must be positive");
    env::EpisodeMetrics m;
    m.steps = static_cast<int>(slice.rows.size()) - 1;
    m.sum_directional = l0 * (p_end / p_start - 1.0);
    return m;
}

Eigen::VectorXd ewa_probabilities(const Eigen::VectorXd& cumulative_rewards, double eta) {
    if (cumulative_rewards.size() == 0)
        throw std::domain_error("ewa needs at least one arm");
    if (!(eta >= 0.0)) throw std::domain_error("eta must be non-negative");
    if (!cumulative_rewards.allFinite())
        throw std::domain_error("cumulative rewards must be finite");
    const Eigen::VectorXd scaled = eta * cumulative_rewards;
    const Eigen::VectorXd shifted = (scaled.array() - scaled.maxCoeff()).exp();
    return shifted / shifted.sum();
}

EwaResult ewa_run(const data::EnvData& slice, const env::EnvConfig& config,
                  const EwaParams& params, std::uint64_t seed) {
    check_slice(slice, "ewa_run");
    if (params.n_arms < 1) throw std::domain_error("ewa needs at least one arm");
    if (params.n_arms > config.max_width)
        throw std::domain_error("ewa arm widths exceed the environment's max width");
    if (params.reeval_hours < 1) throw std::domain_error("reeval_hours must be at least 1");

    env::LpEnv lp_env(slice, config);
    lp_env.reset();
    Rng rng(seed);

    Eigen::VectorXd cumulative = Eigen::VectorXd::Zero(params.n_arms);
    EwaResult result;
    std::size_t interval_start = 0;
    double interval_budget = config.l0;

    while (!lp_env.done()) {
        const auto t = static_cast<std::size_t>(lp_env.time_index());
        int action = 0;
        if (t % static_cast<std::size_t>(params.reeval_hours) == 0) {
            // Settle the elapsed interval for every arm before redrawing.
            if (t > interval_start) {
                for (int arm = 0; arm < params.n_arms; ++arm)
                    cumulative[arm] += interval_arm_reward(slice.rows, interval_start, t, arm + 1,
                                                           interval_budget, config);
            }
            const Eigen::VectorXd probs = ewa_probabilities(cumulative, params.eta);
            const double u = rng.uniform();
            double acc = 0.0;
            int arm = params.n_arms - 1;
            for (int i = 0; i < params.n_arms; ++i) {
                acc += probs[i];
                if (u < acc) {
                    arm = i;
                    break;
                }
            }
            result.chosen_widths.push_back(arm + 1);
            interval_start = t;
            interval_budget = lp_env.cash() + lp_env.fund();
            action = arm + 1;
        }
        lp_env.step(action);
    }

    result.metrics = lp_env.metrics();
    result.final_probabilities = ewa_probabilities(cumulative, params.eta);
    result.trace = lp_env.trace();
    return result;
}

ValueIterationResult value_iterate(const FiniteMdp& mdp, double tolerance, int max_sweeps) {
    const Eigen::Index states = mdp.rewards.rows();
    const Eigen::Index actions = mdp.rewards.cols();
    if (states == 0 || actions == 0) throw std::domain_error("mdp must have states and actions");
    if (mdp.gamma < 0.0 || mdp.gamma >= 1.0)
        throw std::domain_error("discount must be in [0, 1)");
    if (static_cast<Eigen::Index>(mdp.kernels.size()) != actions)
        throw std::domain_error("mdp needs one kernel per action");
    for (Eigen::Index a = 0; a < actions; ++a) {
        const auto& k = mdp.kernels[static_cast<std::size_t>(a)];
        if (k.rows() != states || k.cols() != states)
            throw std::domain_error("kernel for action " + std::to_string(a) +
                                    " has the wrong shape");
        if ((k.array() < -1e-12).any())
            throw std::domain_error("kernel for action " + std::to_string(a) +
                                    " has negative entries");
        for (Eigen::Index s = 0; s < states; ++s) {
            if (std::abs(k.row(s).sum() - 1.0) > 1e-9)
                throw std::domain_error("kernel row " + std::to_string(s) + " for action " +
                                        std::to_string(a) + " does not sum to 1");
        }
    }

    ValueIterationResult out;
    out.values = Eigen::VectorXd::Zero(states);
    out.policy.assign(static_cast<std::size_t>(states), 0);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        Eigen::VectorXd next(states);
        for (Eigen::Index s = 0; s < states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_action = 0;
            for (Eigen::Index a = 0; a < actions; ++a) {
                const double q =
                    mdp.rewards(s, a) +
                    mdp.gamma * mdp.kernels[static_cast<std::size_t>(a)].row(s).dot(out.values);
                if (q > best) {
                    best = q;
                    best_action = static_cast<int>(a);
                }
            }
            next[s] = best;
            out.policy[static_cast<std::size_t>(s)] = best_action;
        }
        const double residual = (next - out.values).cwiseAbs().maxCoeff();
        out.residuals.push_back(residual);
        out.values = next;
        if (residual < tolerance) return out;
    }
    throw std::runtime_error("value iteration did not reach tolerance " +
                             std::to_string(tolerance) + " in " + std::to_string(max_sweeps) +
                             " sweeps");
}

DpModel dp_solve(const data::EnvData& train_slice, const env::EnvConfig& config,
                 const DpConfig& dp_config) {
    check_slice(train_slice, "dp_solve");
    if (dp_config.grid_nodes < 1) throw std::domain_error("grid needs at least one node");

    const auto& rows = train_slice.rows;
    const auto n = static_cast<Eigen::Index>(rows.size());

    Eigen::VectorXd log_prices(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (rows[static_cast<std::size_t>(i)].close <= 0.0)
            throw std::domain_error("close prices must be positive");
        log_prices[i] = std::log(rows[static_cast<std::size_t>(i)].close);
    }
    const double mean_log = log_prices.mean();
    const double std_log =
        std::sqrt((log_prices.array() - mean_log).square().sum() / static_cast<double>(n));

    Eigen::VectorXd log_returns(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) log_returns[i] = log_prices[i + 1] - log_prices[i];
    const double mean_ret = log_returns.mean();
    const double sigma_hourly = std::sqrt((log_returns.array() - mean_ret).square().sum() /
                                          static_cast<double>(n - 1));

    DpModel model;
    model.sigma_hourly = sigma_hourly;
    double fee_sum = 0.0;
    double liq_sum = 0.0;
    for (const auto& row : rows) {
        fee_sum += row.fees_usd;
        liq_sum += row.active_liquidity;
    }
    model.avg_fee_usd = fee_sum / static_cast<double>(n);
    model.avg_pool_liquidity = liq_sum / static_cast<double>(n);

    // A flat train series collapses the grid to its single price point.
    const int nodes = std_log > 0.0 ? dp_config.grid_nodes : 1;
    model.grid.resize(nodes);
    if (nodes == 1) {
        model.grid[0] = std::exp(mean_log);
    } else {
        const double lo = mean_log - dp_config.grid_stds * std_log;
        const double hi = mean_log + dp_config.grid_stds * std_log;
        for (int i = 0; i < nodes; ++i)
            model.grid[i] =
                std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nodes - 1));
    }

    // Adjacent-node moves with the stay mass chosen so one hour of the chain
    // reproduces the hourly log-return variance, up to the clamp.
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(nodes, nodes);
    if (nodes == 1) {
        kernel(0, 0) = 1.0;
    } else {
        const double dx = (std::log(model.grid[nodes - 1]) - std::log(model.grid[0])) /
                          static_cast<double>(nodes - 1);
        const double q = std::clamp(sigma_hourly * sigma_hourly / (dx * dx), 0.0, 1.0);
        for (int s = 0; s < nodes; ++s) {
            const int up = std::min(nodes - 1, s + 1);
            const int down = std::max(0, s - 1);
            kernel(s, up) += q / 2.0;
            kernel(s, down) += q / 2.0;
            kernel(s, s) += 1.0 - q;
        }
    }

    const int actions = config.max_width + 1;
    FiniteMdp mdp;
    mdp.gamma = dp_config.gamma;
    mdp.kernels.assign(static_cast<std::size_t>(actions), kernel);
    mdp.rewards = Eigen::MatrixXd::Zero(nodes, actions);
    for (int s = 0; s < nodes; ++s) {
        const double price = model.grid[s];
        const int center = amm::snap_to_spacing(amm::price_to_tick(price), config.tick_spacing);
        for (int k = 1; k < actions; ++k) {
            const amm::PriceRange range = amm::make_range(center, k, config.tick_spacing);
            const double liquidity = amm::solve_liquidity(config.l0, range, price);
            const double share = liquidity > 0.0
                                     ? liquidity / (model.avg_pool_liquidity + liquidity)
                                     : 0.0;
            double p_in = 0.0;
            for (int s2 = 0; s2 < nodes; ++s2) {
                if (kernel(s, s2) == 0.0) continue;
                if (tick_in_range(amm::price_to_tick(model.grid[s2]), range))
                    p_in += kernel(s, s2);
            }
            // Stationary objective is expected fee minus the volatility-drag
            // rate; gas is a realized cost of the runner, not of the model.
            const double lvr_rate =
                model.sigma_hourly * model.sigma_hourly * liquidity * std::sqrt(price) / 4.0;
            mdp.rewards(s, k) = model.avg_fee_usd * share * p_in - lvr_rate;
        }
    }

    model.mdp = mdp;
    model.solution = value_iterate(mdp, dp_config.tolerance);
    return model;
}

int dp_action(const DpModel& model, double price) {
    if (price <= 0.0) throw std::domain_error("price must be positive");
    const double lp = std::log(price);
    Eigen::Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < model.grid.size(); ++s) {
        const double d = std::abs(std::log(model.grid[s]) - lp);
        if (d < best_dist) {
            best_dist = d;
            best = s;
        }
    }
    return model.solution.policy[static_cast<std::size_t>(best)];
}

int dp_policy_action(const DpModel& model, const env::LpEnv& lp_env) {
    const double price = lp_env.current_row().close;
    const int want = dp_action(model, price);
    if (want == 0) return 0;
    if (!lp_env.has_position()) return want;
    const int tick = amm::price_to_tick(price);
    const amm::PriceRange held =
        amm::make_range(lp_env.center(), lp_env.width(), lp_env.config().tick_spacing);
    if (lp_env.width() != want || !tick_in_range(tick, held)) return want;
    return 0;
}

env::EpisodeMetrics dp_run(const data::EnvData& slice, const env::EnvConfig& config,
                           const DpModel& model) {
    env::LpEnv lp_env(slice, config);
    return run_policy(lp_env,
                      [&model](const env::LpEnv& e) { return dp_policy_action(model, e); });
}

}  // namespace v3lplab::baselines
