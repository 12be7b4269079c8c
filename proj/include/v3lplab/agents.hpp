#pragma once

// Double-DQN learners over the episodic environment interface: a replay
// buffer, the decoupled bootstrap target, epsilon-greedy action selection,
// two agent variants (flat MLP and windowed state-space trunk), and the
// epoch-based training loop with greedy validation and early stopping.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "v3lplab/env.hpp"
#include "v3lplab/environment.hpp"
#include "v3lplab/neural.hpp"
#include "v3lplab/rng.hpp"

namespace v3lplab::agents {

// One stored interaction. done is 1.0 only for true terminal states; episodes
// cut by a step cap store 0.0 so the target keeps its bootstrap term.
struct Transition {
    Eigen::VectorXd obs;
    int action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_obs;
    double done = 0.0;
};

// Windowed counterpart used by the sequence agent. Each window is T x D with
// the oldest row first.
struct SeqTransition {
    Eigen::MatrixXd window;
    int action = 0;
    double reward = 0.0;
    Eigen::MatrixXd next_window;
    double done = 0.0;
};

// Fixed-capacity ring that evicts the oldest element once full. Sampling is
// uniform with replacement, so batches larger than the buffer are legal as
// long as at least min_size elements have been stored.
template <typename T>
class ReplayBuffer {
  public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed, std::size_t min_size = 1)
        : capacity_(capacity), min_size_(min_size), rng_(seed) {
        if (capacity_ == 0) throw std::domain_error("replay buffer capacity must be positive");
        if (min_size_ == 0 || min_size_ > capacity_)
            throw std::domain_error("replay buffer min_size must be in [1, capacity]");
        data_.reserve(capacity_ < 4096 ? capacity_ : 4096);
    }

    void push(T item) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(item));
        } else {
            data_[next_] = std::move(item);
            next_ = (next_ + 1) % capacity_;
        }
    }

    std::vector<T> sample(std::size_t batch) {
        if (data_.size() < min_size_)
            throw std::logic_error("replay buffer has " + std::to_string(data_.size()) +
                                   " elements, needs " + std::to_string(min_size_) +
                                   " before sampling");
        std::vector<T> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const auto idx =
                static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1));
            out.push_back(data_[idx]);
        }
        return out;
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

  private:
    std::size_t capacity_;
    std::size_t min_size_;
    Rng rng_;
    std::vector<T> data_;
    std::size_t next_ = 0;
};

// Index of the largest coefficient, lowest index on ties.
int argmax_lowest(const Eigen::VectorXd& values);

// Decoupled double-DQN bootstrap: the online net picks the argmax action at
// the next state, the target net prices it. done = 1 removes the bootstrap.
double ddqn_target(const Eigen::VectorXd& policy_next_q, const Eigen::VectorXd& target_next_q,
                   double reward, double done, double gamma);

// Epsilon-greedy over a Q row: explore uniformly with probability epsilon,
// otherwise take argmax_lowest.
int select_action(const Eigen::VectorXd& qvalues, double epsilon, Rng& rng);

// Linear decay from start to end over the first `fraction` of the planned
// step budget, then flat at end.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double fraction = 0.2;

    double value(std::int64_t step, std::int64_t planned_total_steps) const;
};

// Everything a learner needs besides the environment shape. window_length is
// only read by the sequence agent.
struct AgentConfig {
    int hidden = 64;
    double gamma = 0.99;
    double learning_rate = 1e-4;
    double clip_norm = 0.7;
    double target_update_rate = 0.01;
    int batch_size = 256;
    int warmup = 1000;
    std::size_t buffer_capacity = 1000000;
    int window_length = 32;
    Eigen::VectorXd input_scale;  // empty means no scaling
};

// Common learner surface. Weight vectors returned by snapshot() restore both
// the online and the target net, which is what checkpoint rollback wants.
class Agent {
  public:
    virtual ~Agent() = default;

    virtual void begin_episode() = 0;
    virtual int act(const Eigen::VectorXd& obs, double epsilon) = 0;
    virtual void observe(const Eigen::VectorXd& obs, int action, double reward,
                         const Eigen::VectorXd& next_obs, bool done) = 0;

    virtual bool ready() const = 0;
    virtual double learn() = 0;

    virtual int action_count() const = 0;

    virtual std::vector<Eigen::MatrixXd> snapshot() = 0;
    virtual void restore(const std::vector<Eigen::MatrixXd>& weights) = 0;

    virtual void save(const std::string& path) = 0;
    virtual void load(const std::string& path) = 0;
};

// Flat-observation dueling double-DQN with soft target tracking. One gradient
// step per learn() call.
class DdqnAgent final : public Agent {
  public:
    DdqnAgent(Eigen::Index obs_dim, int actions, const AgentConfig& config, std::uint64_t seed);

    void begin_episode() override {}
    int act(const Eigen::VectorXd& obs, double epsilon) override;
    void observe(const Eigen::VectorXd& obs, int action, double reward,
                 const Eigen::VectorXd& next_obs, bool done) override;

    bool ready() const override;
    double learn() override;

    int action_count() const override { return actions_; }

    std::vector<Eigen::MatrixXd> snapshot() override;
    void restore(const std::vector<Eigen::MatrixXd>& weights) override;

    void save(const std::string& path) override;
    void load(const std::string& path) override;

    nn::MlpDuelingNet& policy_net() { return policy_; }
    nn::MlpDuelingNet& target_net() { return target_; }
    std::size_t buffer_size() const { return buffer_.size(); }

  private:
    AgentConfig config_;
    int actions_;
    Eigen::Index obs_dim_;
    nn::MlpDuelingNet policy_;
    nn::MlpDuelingNet target_;
    nn::Adam optimizer_;
    ReplayBuffer<Transition> buffer_;
    Rng explore_rng_;
    std::int64_t learn_steps_ = 0;
};

// Windowed variant: observations within an episode are stacked into a sliding
// window (left-padded by repeating the earliest row) and fed to the
// state-space trunk. act() is the only place history grows, so the stored
// window for a step is exactly what the net saw when it chose the action.
class SeqDdqnAgent final : public Agent {
  public:
    SeqDdqnAgent(Eigen::Index obs_dim, int actions, const AgentConfig& config, std::uint64_t seed);

    void begin_episode() override;
    int act(const Eigen::VectorXd& obs, double epsilon) override;
    void observe(const Eigen::VectorXd& obs, int action, double reward,
                 const Eigen::VectorXd& next_obs, bool done) override;

    bool ready() const override;
    double learn() override;

    int action_count() const override { return actions_; }

    std::vector<Eigen::MatrixXd> snapshot() override;
    void restore(const std::vector<Eigen::MatrixXd>& weights) override;

    void save(const std::string& path) override;
    void load(const std::string& path) override;

    nn::SsmDuelingNet& policy_net() { return policy_; }
    std::size_t buffer_size() const { return buffer_.size(); }

  private:
    Eigen::MatrixXd current_window() const;
    Eigen::MatrixXd window_with(const Eigen::VectorXd& extra) const;

    AgentConfig config_;
    int actions_;
    Eigen::Index obs_dim_;
    nn::SsmDuelingNet policy_;
    nn::SsmDuelingNet target_;
    nn::Adam optimizer_;
    ReplayBuffer<SeqTransition> buffer_;
    Rng explore_rng_;
    std::vector<Eigen::VectorXd> history_;
};

struct TrainConfig {
    int max_epochs = 200;
    int patience = 10;
    int steps_per_epoch = 0;
    EpsilonSchedule epsilon;
};

struct TrainLogRow {
    int epoch = 0;
    double td_loss = 0.0;
    double valid_score = 0.0;
    double epsilon = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    int best_epoch = -1;
    double best_score = 0.0;
};

// Runs one greedy episode (epsilon = 0) and returns the environment's score
// for it. The agent's episode state is reset on entry.
double run_greedy_episode(Environment& env, Agent& agent);

// Greedy rollout on the backtest environment; leaves the environment at its
// terminal step and returns the completed episode's totals.
env::EpisodeMetrics evaluate(env::LpEnv& lp_env, Agent& agent);

// Epoch loop: steps_per_epoch interactions with epsilon from the schedule,
// one learn() per step once the agent is ready, then a greedy validation
// episode. Keeps the best-scoring weights and restores them before returning.
// Stops early after `patience` epochs without a new best.
TrainResult train_agent(Agent& agent, Environment& train_env, Environment& valid_env,
                        const TrainConfig& config);

}  // namespace v3lplab::agents
