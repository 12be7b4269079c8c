#include "v3lplab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "v3lplab/env.hpp"

namespace v3lplab::agents {

namespace {

nn::NetConfig net_config(Eigen::Index obs_dim, int actions, const AgentConfig& config) {
    nn::NetConfig nc;
    nc.input_dim = obs_dim;
    nc.action_count = actions;
    nc.hidden = config.hidden;
    nc.input_scale = config.input_scale;
    return nc;
}

nn::AdamConfig adam_config(const AgentConfig& config) {
    nn::AdamConfig ac;
    ac.learning_rate = config.learning_rate;
    ac.clip_norm = config.clip_norm;
    return ac;
}

void check_agent_config(Eigen::Index obs_dim, int actions, const AgentConfig& config) {
    if (obs_dim <= 0) throw std::domain_error("agent obs_dim must be positive");
    if (actions <= 0) throw std::domain_error("agent action count must be positive");
    if (config.gamma < 0.0 || config.gamma >= 1.0)
        throw std::domain_error("agent gamma must be in [0, 1)");
    if (config.batch_size <= 0) throw std::domain_error("agent batch_size must be positive");
    if (config.warmup <= 0) throw std::domain_error("agent warmup must be positive");
    if (config.window_length <= 0) throw std::domain_error("agent window_length must be positive");
    if (config.target_update_rate <= 0.0 || config.target_update_rate > 1.0)
        throw std::domain_error("agent target_update_rate must be in (0, 1]");
}

// Stream ids hung off the master seed so init, exploration, and replay draw
// from independent generators.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kExploreStream = 1;
constexpr std::uint64_t kBufferStream = 2;

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void assign_params(const std::vector<nn::Tensor*>& params,
                   const std::vector<Eigen::MatrixXd>& weights) {
    if (params.size() != weights.size())
        throw std::invalid_argument("weight snapshot has " + std::to_string(weights.size()) +
                                    " tensors, net has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.rows() != weights[i].rows() ||
            params[i]->value.cols() != weights[i].cols())
            throw std::invalid_argument("weight snapshot shape mismatch for tensor: " +
                                        params[i]->name);
        params[i]->value = weights[i];
    }
}

}  // namespace

int argmax_lowest(const Eigen::VectorXd& values) {
    if (values.size() == 0) throw std::domain_error("argmax over empty value vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

double ddqn_target(const Eigen::VectorXd& policy_next_q, const Eigen::VectorXd& target_next_q,
                   double reward, double done, double gamma) {
    if (policy_next_q.size() != target_next_q.size())
        throw std::invalid_argument("policy and target Q rows differ in length");
    if (policy_next_q.size() == 0) throw std::domain_error("ddqn target over empty Q row");
    const int pick = argmax_lowest(policy_next_q);
    return reward + gamma * (1.0 - done) * target_next_q[pick];
}

int select_action(const Eigen::VectorXd& qvalues, double epsilon, Rng& rng) {
    if (qvalues.size() == 0) throw std::domain_error("action selection over empty Q row");
    if (epsilon < 0.0 || epsilon > 1.0)
        throw std::domain_error("epsilon must be in [0, 1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(qvalues.size()) - 1));
    return argmax_lowest(qvalues);
}

double EpsilonSchedule::value(std::int64_t step, std::int64_t planned_total_steps) const {
    if (planned_total_steps <= 0) throw std::domain_error("planned step budget must be positive");
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::domain_error("epsilon decay fraction must be in (0, 1]");
    const auto horizon = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(fraction * static_cast<double>(planned_total_steps)));
    if (step >= horizon) return end;
    if (step < 0) throw std::domain_error("schedule step must be non-negative");
    const double t = static_cast<double>(step) / static_cast<double>(horizon);
    return start + (end - start) * t;
}

DdqnAgent::DdqnAgent(Eigen::Index obs_dim, int actions, const AgentConfig& config,
                     std::uint64_t seed)
    : config_((check_agent_config(obs_dim, actions, config), config)),
      actions_(actions),
      obs_dim_(obs_dim),
      policy_([&] {
          Rng init(derive_seed(seed, kInitStream));
          return nn::MlpDuelingNet(net_config(obs_dim, actions, config), init);
      }()),
      target_([&] {
          Rng init(derive_seed(seed, kInitStream));
          return nn::MlpDuelingNet(net_config(obs_dim, actions, config), init);
      }()),
      optimizer_(adam_config(config)),
      buffer_(config.buffer_capacity, derive_seed(seed, kBufferStream)),
      explore_rng_(derive_seed(seed, kExploreStream)) {
    // Same init stream twice makes the target an exact copy of the policy.
    nn::copy_params(target_.params(), policy_.params());
}

int DdqnAgent::act(const Eigen::VectorXd& obs, double epsilon) {
    if (obs.size() != obs_dim_)
        throw std::invalid_argument("observation length " + std::to_string(obs.size()) +
                                    " does not match agent input " + std::to_string(obs_dim_));
    return select_action(policy_.qvalues(obs), epsilon, explore_rng_);
}

void DdqnAgent::observe(const Eigen::VectorXd& obs, int action, double reward,
                        const Eigen::VectorXd& next_obs, bool done) {
    if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
        throw std::invalid_argument("stored transition must carry observations of length " +
                                    std::to_string(obs_dim_));
    if (action < 0 || action >= actions_)
        throw std::domain_error("stored action " + std::to_string(action) + " out of range");
    Transition t;
    t.obs = obs;
    t.action = action;
    t.reward = reward;
    t.next_obs = next_obs;
    t.done = done ? 1.0 : 0.0;
    buffer_.push(std::move(t));
}

bool DdqnAgent::ready() const { return buffer_.size() >= static_cast<std::size_t>(config_.warmup); }

double DdqnAgent::learn() {
    const auto batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size));
    const auto b = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index d = batch[0].obs.size();

    Eigen::MatrixXd next(b, d);
    for (Eigen::Index i = 0; i < b; ++i) next.row(i) = batch[i].next_obs.transpose();
    const Eigen::MatrixXd next_policy_q = policy_.forward(next);
    const Eigen::MatrixXd next_target_q = target_.forward(next);

    Eigen::VectorXd targets(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const int pick = argmax_lowest(next_policy_q.row(i).transpose());
        targets[i] = batch[i].reward +
                     config_.gamma * (1.0 - batch[i].done) * next_target_q(i, pick);
    }

    Eigen::MatrixXd current(b, d);
    for (Eigen::Index i = 0; i < b; ++i) current.row(i) = batch[i].obs.transpose();
    const Eigen::MatrixXd q = policy_.forward(current);

    double loss = 0.0;
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(b, actions_);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double diff = q(i, batch[i].action) - targets[i];
        loss += diff * diff;
        dq(i, batch[i].action) = 2.0 * diff / static_cast<double>(b);
    }
    loss /= static_cast<double>(b);
    if (!std::isfinite(loss))
        throw std::runtime_error("td loss diverged to a non-finite value at learn step " +
                                 std::to_string(learn_steps_));

    policy_.zero_grad();
    policy_.backward(dq);
    optimizer_.step(policy_.params());
    nn::soft_update(target_.params(), policy_.params(), config_.target_update_rate);
    ++learn_steps_;
    return loss;
}

std::vector<Eigen::MatrixXd> DdqnAgent::snapshot() {
    std::vector<Eigen::MatrixXd> out;
    for (const auto* t : policy_.params()) out.push_back(t->value);
    return out;
}

void DdqnAgent::restore(const std::vector<Eigen::MatrixXd>& weights) {
    assign_params(policy_.params(), weights);
    assign_params(target_.params(), weights);
}

void DdqnAgent::save(const std::string& path) { nn::save_checkpoint(path, policy_.params()); }

void DdqnAgent::load(const std::string& path) {
    nn::load_checkpoint(path, policy_.params());
    nn::copy_params(target_.params(), policy_.params());
}

SeqDdqnAgent::SeqDdqnAgent(Eigen::Index obs_dim, int actions, const AgentConfig& config,
                           std::uint64_t seed)
    : config_((check_agent_config(obs_dim, actions, config), config)),
      actions_(actions),
      obs_dim_(obs_dim),
      policy_([&] {
          Rng init(derive_seed(seed, kInitStream));
          return nn::SsmDuelingNet(net_config(obs_dim, actions, config), init);
      }()),
      target_([&] {
          Rng init(derive_seed(seed, kInitStream));
          return nn::SsmDuelingNet(net_config(obs_dim, actions, config), init);
      }()),
      optimizer_(adam_config(config)),
      buffer_(config.buffer_capacity, derive_seed(seed, kBufferStream)),
      explore_rng_(derive_seed(seed, kExploreStream)) {
    nn::copy_params(target_.params(), policy_.params());
}

void SeqDdqnAgent::begin_episode() { history_.clear(); }

Eigen::MatrixXd SeqDdqnAgent::current_window() const {
    return env::window(history_, config_.window_length);
}

Eigen::MatrixXd SeqDdqnAgent::window_with(const Eigen::VectorXd& extra) const {
    std::vector<Eigen::VectorXd> extended = history_;
    extended.push_back(extra);
    return env::window(extended, config_.window_length);
}

int SeqDdqnAgent::act(const Eigen::VectorXd& obs, double epsilon) {
    if (obs.size() != obs_dim_)
        throw std::invalid_argument("observation length " + std::to_string(obs.size()) +
                                    " does not match agent input " + std::to_string(obs_dim_));
    history_.push_back(obs);
    // history_ only ever needs the last window_length rows.
    if (history_.size() > static_cast<std::size_t>(config_.window_length))
        history_.erase(history_.begin());
    return select_action(policy_.qvalues(current_window()), epsilon, explore_rng_);
}

void SeqDdqnAgent::observe(const Eigen::VectorXd& obs, int action, double reward,
                           const Eigen::VectorXd& next_obs, bool done) {
    if (history_.empty() || history_.back().size() != obs.size() ||
        (history_.back().array() != obs.array()).any())
        throw std::logic_error("observe() must follow act() on the same observation");
    SeqTransition t;
    t.window = current_window();
    t.action = action;
    t.reward = reward;
    t.next_window = window_with(next_obs);
    t.done = done ? 1.0 : 0.0;
    buffer_.push(std::move(t));
}

bool SeqDdqnAgent::ready() const {
    return buffer_.size() >= static_cast<std::size_t>(config_.warmup);
}

double SeqDdqnAgent::learn() {
    const auto batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size));
    const auto b = static_cast<Eigen::Index>(batch.size());

    std::vector<Eigen::MatrixXd> next_windows;
    next_windows.reserve(batch.size());
    for (const auto& t : batch) next_windows.push_back(t.next_window);
    const Eigen::MatrixXd next_policy_q = policy_.forward(next_windows);
    const Eigen::MatrixXd next_target_q = target_.forward(next_windows);

    Eigen::VectorXd targets(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const int pick = argmax_lowest(next_policy_q.row(i).transpose());
        targets[i] = batch[i].reward +
                     config_.gamma * (1.0 - batch[i].done) * next_target_q(i, pick);
    }

    std::vector<Eigen::MatrixXd> windows;
    windows.reserve(batch.size());
    for (const auto& t : batch) windows.push_back(t.window);
    const Eigen::MatrixXd q = policy_.forward(windows);

    double loss = 0.0;
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(b, actions_);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double diff = q(i, batch[i].action) - targets[i];
        loss += diff * diff;
        dq(i, batch[i].action) = 2.0 * diff / static_cast<double>(b);
    }
    loss /= static_cast<double>(b);
    if (!std::isfinite(loss))
        throw std::runtime_error("td loss diverged to a non-finite value");

    policy_.zero_grad();
    policy_.backward(dq);
    optimizer_.step(policy_.params());
    nn::soft_update(target_.params(), policy_.params(), config_.target_update_rate);
    return loss;
}

std::vector<Eigen::MatrixXd> SeqDdqnAgent::snapshot() {
    std::vector<Eigen::MatrixXd> out;
    for (const auto* t : policy_.params()) out.push_back(t->value);
    return out;
}

void SeqDdqnAgent::restore(const std::vector<Eigen::MatrixXd>& weights) {
    assign_params(policy_.params(), weights);
    assign_params(target_.params(), weights);
}

void SeqDdqnAgent::save(const std::string& path) { nn::save_checkpoint(path, policy_.params()); }

void SeqDdqnAgent::load(const std::string& path) {
    nn::load_checkpoint(path, policy_.params());
    nn::copy_params(target_.params(), policy_.params());
}

env::EpisodeMetrics evaluate(env::LpEnv& lp_env, Agent& agent) {
    run_greedy_episode(lp_env, agent);
    return lp_env.metrics();
}

double run_greedy_episode(Environment& env, Agent& agent) {
    agent.begin_episode();
    Eigen::VectorXd obs = env.reset();
    while (true) {
        const int action = agent.act(obs, 0.0);
        StepOutcome out = env.step(action);
        obs = std::move(out.obs);
        if (out.done || out.truncated) break;
    }
    return env.episode_score();
}

TrainResult train_agent(Agent& agent, Environment& train_env, Environment& valid_env,
                        const TrainConfig& config) {
    if (config.steps_per_epoch <= 0)
        throw std::domain_error("train steps_per_epoch must be positive");
    if (config.max_epochs <= 0) throw std::domain_error("train max_epochs must be positive");
    if (config.patience <= 0) throw std::domain_error("train patience must be positive");

    const std::int64_t planned =
        static_cast<std::int64_t>(config.max_epochs) * config.steps_per_epoch;

    TrainResult result;
    std::vector<Eigen::MatrixXd> best_weights = agent.snapshot();
    double best_score = -std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    std::int64_t global_step = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        // Fresh episode each epoch so the sequence history never spans a
        // validation rollout.
        agent.begin_episode();
        Eigen::VectorXd obs = train_env.reset();
        std::vector<double> losses;
        double epsilon = config.epsilon.value(global_step, planned);

        for (int s = 0; s < config.steps_per_epoch; ++s) {
            epsilon = config.epsilon.value(global_step, planned);
            const int action = agent.act(obs, epsilon);
            StepOutcome out = train_env.step(action);
            agent.observe(obs, action, out.reward, out.obs,
                          out.done && !out.truncated);
            obs = std::move(out.obs);
            ++global_step;
            if (agent.ready()) losses.push_back(agent.learn());
            if (out.done || out.truncated) {
                agent.begin_episode();
                obs = train_env.reset();
            }
        }

        const double score = run_greedy_episode(valid_env, agent);

        TrainLogRow row;
        row.epoch = epoch;
        row.td_loss = median(losses);
        row.valid_score = score;
        row.epsilon = epsilon;
        result.log.push_back(row);

        if (score > best_score) {
            best_score = score;
            best_weights = agent.snapshot();
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            if (score == best_score) {
                // Among tied scores keep the most recent weights; later
                // epochs have seen strictly more data.
                best_weights = agent.snapshot();
                result.best_epoch = epoch;
            }
            ++epochs_since_best;
            if (epochs_since_best >= config.patience) break;
        }
    }

    agent.restore(best_weights);
    result.best_score = best_score;
    return result;
}

}  // namespace v3lplab::agents
