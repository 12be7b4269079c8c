#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "v3lplab/agents.hpp"
#include "v3lplab/data.hpp"
#include "v3lplab/env.hpp"
#include "v3lplab/synthetic.hpp"

#include "chain_env.hpp"
#include "support.hpp"

using namespace v3lplab;
using namespace v3lplab::agents;

namespace {

// Single-state task with one deterministic payout per arm; every episode is
// one step long. With zero discount the action values must converge to the
// payouts themselves.
class BanditEnv final : public Environment {
  public:
    Eigen::VectorXd reset() override {
        last_ = 0.0;
        return Eigen::VectorXd::Ones(1);
    }

    StepOutcome step(int action) override {
        if (action < 0 || action >= 3) throw std::domain_error("bandit has 3 arms");
        StepOutcome out;
        out.reward = kMeans[action];
        out.done = true;
        out.obs = Eigen::VectorXd::Ones(1);
        last_ = out.reward;
        return out;
    }

    int action_count() const override { return 3; }
    Eigen::Index obs_dim() const override { return 1; }
    double episode_score() const override { return last_; }

    static constexpr double kMeans[3] = {1.0, 2.0, 0.5};

  private:
    double last_ = 0.0;
};

// Scripted environment for exercising the epoch loop in isolation: every
// episode is one step, and each completed validation episode reports the next
// score from the script.
class ScriptedEnv final : public Environment {
  public:
    explicit ScriptedEnv(std::vector<double> scores) : scores_(std::move(scores)) {}

    Eigen::VectorXd reset() override {
        ++reset_count;
        return Eigen::VectorXd::Zero(1);
    }

    StepOutcome step(int) override {
        StepOutcome out;
        out.obs = Eigen::VectorXd::Zero(1);
        out.done = true;
        if (episode_index_ < scores_.size()) current_score_ = scores_[episode_index_];
        ++episode_index_;
        return out;
    }

    int action_count() const override { return 1; }
    Eigen::Index obs_dim() const override { return 1; }
    double episode_score() const override { return current_score_; }

    int reset_count = 0;

  private:
    std::vector<double> scores_;
    std::size_t episode_index_ = 0;
    double current_score_ = 0.0;
};

// Minimal agent whose snapshot carries a version counter bumped by every
// gradient step, so checkpoint restoration is observable.
class VersionAgent final : public Agent {
  public:
    void begin_episode() override {}
    int act(const Eigen::VectorXd&, double) override { return 0; }
    void observe(const Eigen::VectorXd&, int, double, const Eigen::VectorXd&, bool) override {}
    bool ready() const override { return true; }
    double learn() override {
        ++version;
        return 0.0;
    }
    int action_count() const override { return 1; }
    std::vector<Eigen::MatrixXd> snapshot() override {
        return {Eigen::MatrixXd::Constant(1, 1, static_cast<double>(version))};
    }
    void restore(const std::vector<Eigen::MatrixXd>& w) override {
        restored_version = static_cast<int>(w.at(0)(0, 0));
    }
    void save(const std::string&) override {}
    void load(const std::string&) override {}

    int version = 0;
    int restored_version = -1;
};

// Always-flat policy for exercising greedy evaluation on the backtest env.
class NullAgent final : public Agent {
  public:
    void begin_episode() override {}
    int act(const Eigen::VectorXd&, double) override { return 0; }
    void observe(const Eigen::VectorXd&, int, double, const Eigen::VectorXd&, bool) override {}
    bool ready() const override { return false; }
    double learn() override { return 0.0; }
    int action_count() const override { return 1; }
    std::vector<Eigen::MatrixXd> snapshot() override { return {}; }
    void restore(const std::vector<Eigen::MatrixXd>&) override {}
    void save(const std::string&) override {}
    void load(const std::string&) override {}
};

// Deploys one range on the first step of each episode, then stays put.
class OneShotAgent final : public Agent {
  public:
    explicit OneShotAgent(int action) : action_(action) {}
    void begin_episode() override { acted_ = false; }
    int act(const Eigen::VectorXd&, double) override {
        if (acted_) return 0;
        acted_ = true;
        return action_;
    }
    void observe(const Eigen::VectorXd&, int, double, const Eigen::VectorXd&, bool) override {}
    bool ready() const override { return false; }
    double learn() override { return 0.0; }
    int action_count() const override { return action_ + 1; }
    std::vector<Eigen::MatrixXd> snapshot() override { return {}; }
    void restore(const std::vector<Eigen::MatrixXd>&) override {}
    void save(const std::string&) override {}
    void load(const std::string&) override {}

  private:
    int action_;
    bool acted_ = false;
};

data::EnvData synth_slice(int hours, std::uint64_t seed) {
    synth::SyntheticSpec spec;
    spec.seed = seed;
    spec.hours = hours;
    const auto rows = synth::generate(spec);
    data::EnvData out;
    out.features = data::compute_features(rows);
    out.rows.assign(rows.begin() + data::kWarmupRows, rows.end());
    return out;
}

AgentConfig small_config() {
    AgentConfig cfg;
    cfg.hidden = 32;
    cfg.gamma = 0.9;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 64;
    cfg.warmup = 500;
    cfg.buffer_capacity = 50000;
    cfg.target_update_rate = 0.05;
    return cfg;
}

}  // namespace

TEST_CASE("replay buffer evicts the oldest elements once full") {
    ReplayBuffer<int> buf(5, 7);
    for (int i = 0; i < 8; ++i) buf.push(i);
    CHECK(buf.size() == 5);
    CHECK(buf.capacity() == 5);

    std::set<int> seen;
    for (int draw = 0; draw < 2000; ++draw) {
        for (int v : buf.sample(1)) seen.insert(v);
    }
    CHECK(seen == std::set<int>{3, 4, 5, 6, 7});
}

TEST_CASE("replay buffer samples with replacement and enforces min_size") {
    ReplayBuffer<int> single(100, 3);
    single.push(42);
    const auto batch = single.sample(4);
    REQUIRE(batch.size() == 4);
    for (int v : batch) CHECK(v == 42);

    ReplayBuffer<int> gated(100, 3, 3);
    gated.push(1);
    gated.push(2);
    CHECK_THROWS_WITH_AS(gated.sample(2), "replay buffer has 2 elements, needs 3 before sampling",
                         std::logic_error);
    gated.push(3);
    CHECK(gated.sample(2).size() == 2);

    ReplayBuffer<int> empty(10, 1);
    CHECK_THROWS_AS(empty.sample(1), std::logic_error);

    CHECK_THROWS_AS(ReplayBuffer<int>(0, 1), std::domain_error);
    CHECK_THROWS_AS(ReplayBuffer<int>(10, 1, 0), std::domain_error);
    CHECK_THROWS_AS(ReplayBuffer<int>(10, 1, 11), std::domain_error);
}

TEST_CASE("replay buffer sampling is uniform over the stored elements") {
    ReplayBuffer<int> buf(10, 99);
    for (int i = 0; i < 10; ++i) buf.push(i);

    std::vector<long> counts(10, 0);
    const int draws = 100000;
    const auto batch = buf.sample(draws);
    for (int v : batch) ++counts[static_cast<std::size_t>(v)];

    const double stat = testsup::chi2_stat(counts, draws / 10.0);
    CHECK(stat < testsup::chi2_crit_99(9));
}

TEST_CASE("bootstrap target prices the online argmax with the target net") {
    Eigen::VectorXd policy_q(2), target_q(2);
    policy_q << 0.2, 0.5;
    target_q << 3.0, 7.0;
    CHECK(ddqn_target(policy_q, target_q, 1.0, 0.0, 0.9) == 7.3);
    CHECK(ddqn_target(policy_q, target_q, 1.0, 1.0, 0.9) == 1.0);
    CHECK(ddqn_target(policy_q, target_q, 1.0, 0.0, 0.0) == 1.0);

    Eigen::VectorXd tied(2), priced(2);
    tied << 0.5, 0.5;
    priced << 2.0, 9.0;
    CHECK(ddqn_target(tied, priced, 1.0, 0.0, 0.9) == doctest::Approx(2.8).epsilon(1e-15));

    Eigen::VectorXd three(3);
    three << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(ddqn_target(policy_q, three, 0.0, 0.0, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(ddqn_target(Eigen::VectorXd(), Eigen::VectorXd(), 0.0, 0.0, 0.9),
                    std::domain_error);
}

TEST_CASE("identical online and target nets reduce to the plain max target") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd q(5);
        for (int i = 0; i < 5; ++i) q[i] = rng.uniform(-3.0, 3.0);
        const double r = rng.uniform(-1.0, 1.0);
        CHECK(ddqn_target(q, q, r, 0.0, 0.9) == r + 0.9 * q.maxCoeff());
    }
}

TEST_CASE("epsilon-greedy selection explores uniformly and exploits the argmax") {
    Rng rng(17);

    Eigen::VectorXd q(4);
    q << 0.3, 0.7, 0.1, 0.7;
    for (int i = 0; i < 50; ++i) CHECK(select_action(q, 0.0, rng) == 1);

    Eigen::VectorXd five(5);
    five << 0.0, 1.0, 2.0, 3.0, 4.0;
    std::vector<long> counts(5, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(select_action(five, 1.0, rng))];
    CHECK(testsup::chi2_stat(counts, draws / 5.0) < testsup::chi2_crit_99(4));

    CHECK_THROWS_AS(select_action(Eigen::VectorXd(), 0.5, rng), std::domain_error);
    CHECK_THROWS_AS(select_action(q, -0.1, rng), std::domain_error);
    CHECK_THROWS_AS(select_action(q, 1.5, rng), std::domain_error);
}

TEST_CASE("epsilon schedule decays linearly then stays flat") {
    EpsilonSchedule sched;
    const std::int64_t planned = 10000;  // horizon = 2000
    CHECK(sched.value(0, planned) == 1.0);
    CHECK(sched.value(1000, planned) == doctest::Approx(0.525).epsilon(1e-12));
    CHECK(sched.value(2000, planned) == 0.05);
    CHECK(sched.value(9999, planned) == 0.05);

    CHECK_THROWS_AS(sched.value(0, 0), std::domain_error);
    CHECK_THROWS_AS(sched.value(-1, planned), std::domain_error);
    EpsilonSchedule bad;
    bad.fraction = 0.0;
    CHECK_THROWS_AS(bad.value(0, planned), std::domain_error);
}

TEST_CASE("agents start with the target net equal to the online net") {
    AgentConfig cfg = small_config();
    DdqnAgent agent(5, 2, cfg, 444);
    const auto weights = agent.snapshot();
    const auto target = agent.target_net().params();
    REQUIRE(weights.size() == target.size());
    for (std::size_t i = 0; i < weights.size(); ++i) CHECK(weights[i] == target[i]->value);
}

TEST_CASE("agents validate shapes and configuration at the buffer boundary") {
    AgentConfig cfg = small_config();
    cfg.warmup = 4;
    cfg.batch_size = 2;
    DdqnAgent flat(3, 2, cfg, 5);
    CHECK_THROWS_AS(flat.act(Eigen::VectorXd::Zero(4), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(flat.observe(Eigen::VectorXd::Zero(3), 0, 0.0, Eigen::VectorXd::Zero(2), false),
                    std::invalid_argument);
    CHECK_THROWS_AS(flat.observe(Eigen::VectorXd::Zero(3), 5, 0.0, Eigen::VectorXd::Zero(3), false),
                    std::domain_error);

    cfg.window_length = 4;
    SeqDdqnAgent seq(3, 2, cfg, 5);
    CHECK_THROWS_AS(seq.act(Eigen::VectorXd::Zero(2), 0.0), std::invalid_argument);
    // observe() without a preceding act() has no window to store.
    CHECK_THROWS_AS(seq.observe(Eigen::VectorXd::Zero(3), 0, 0.0, Eigen::VectorXd::Zero(3), false),
                    std::logic_error);

    AgentConfig bad = small_config();
    bad.gamma = 1.0;
    CHECK_THROWS_AS(DdqnAgent(3, 2, bad, 1), std::domain_error);
    bad = small_config();
    bad.batch_size = 0;
    CHECK_THROWS_AS(DdqnAgent(3, 2, bad, 1), std::domain_error);
    bad = small_config();
    bad.warmup = 0;
    CHECK_THROWS_AS(SeqDdqnAgent(3, 2, bad, 1), std::domain_error);
    CHECK_THROWS_AS(DdqnAgent(0, 2, small_config(), 1), std::domain_error);
    CHECK_THROWS_AS(DdqnAgent(3, 0, small_config(), 1), std::domain_error);
}

TEST_CASE("zero-discount bandit drives Q to the per-arm payouts") {
    BanditEnv env;
    AgentConfig cfg;
    cfg.hidden = 16;
    cfg.gamma = 0.0;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 32;
    cfg.warmup = 50;
    cfg.buffer_capacity = 10000;
    DdqnAgent agent(1, 3, cfg, 2024);

    Eigen::VectorXd obs = env.reset();
    agent.begin_episode();
    for (int step = 0; step < 3000; ++step) {
        const int action = agent.act(obs, 1.0);
        StepOutcome out = env.step(action);
        agent.observe(obs, action, out.reward, out.obs, out.done);
        if (agent.ready()) agent.learn();
        obs = env.reset();
        agent.begin_episode();
    }

    const Eigen::VectorXd q = agent.policy_net().qvalues(Eigen::VectorXd::Ones(1));
    REQUIRE(q.size() == 3);
    for (int a = 0; a < 3; ++a)
        CHECK(std::abs(q[a] - BanditEnv::kMeans[a]) / std::abs(BanditEnv::kMeans[a]) < 0.02);
    CHECK(agent.act(Eigen::VectorXd::Ones(1), 0.0) == 1);
}

TEST_CASE("flat agent recovers the optimal Q table on the corridor task") {
    const Eigen::MatrixXd q_star = testsup::chain_q_star(0.9);
    // Oracle self-check against the closed-form discounted path lengths.
    for (int s = 0; s <= 3; ++s)
        CHECK(q_star(s, 1) == doctest::Approx(std::pow(0.9, 3 - s)).epsilon(1e-10));
    for (int s = 1; s <= 3; ++s)
        CHECK(q_star(s, 0) == doctest::Approx(std::pow(0.9, 5 - s)).epsilon(1e-10));
    CHECK(q_star(0, 0) == doctest::Approx(std::pow(0.9, 4)).epsilon(1e-10));

    TrainConfig tc;
    tc.max_epochs = 80;
    tc.patience = 12;
    tc.steps_per_epoch = 250;

    for (std::uint64_t seed : {101ULL, 202ULL, 303ULL}) {
        CAPTURE(seed);
        testsup::ChainEnv train_env;
        testsup::ChainEnv valid_env;
        DdqnAgent agent(5, 2, small_config(), seed);
        const TrainResult result = train_agent(agent, train_env, valid_env, tc);

        REQUIRE(!result.log.empty());
        CHECK(result.best_epoch >= 0);
        CHECK(result.best_score == 1.0);

        double max_rel = 0.0;
        for (int s = 0; s <= 3; ++s) {
            const Eigen::VectorXd q = agent.policy_net().qvalues(testsup::ChainEnv::one_hot(s));
            CHECK(argmax_lowest(q) == 1);
            for (int a = 0; a < 2; ++a)
                max_rel = std::max(max_rel, std::abs(q[a] - q_star(s, a)) / std::abs(q_star(s, a)));
        }
        CHECK(max_rel < 0.05);

        // TD loss over epoch medians: never rises more than 20% step to step
        // once learning starts, and ends well below where it started.
        std::vector<double> medians;
        for (const auto& row : result.log)
            if (row.td_loss > 0.0) medians.push_back(row.td_loss);
        REQUIRE(medians.size() >= 6);
        for (std::size_t i = 1; i < medians.size(); ++i)
            CHECK(medians[i] <= 1.2 * medians[i - 1] + 1e-12);
        CHECK(medians.back() < medians.front());
    }
}

TEST_CASE("seeded corridor training runs are bit-identical") {
    TrainConfig tc;
    tc.max_epochs = 12;
    tc.patience = 12;
    tc.steps_per_epoch = 200;

    std::vector<TrainLogRow> logs[2];
    for (int run = 0; run < 2; ++run) {
        testsup::ChainEnv train_env;
        testsup::ChainEnv valid_env;
        DdqnAgent agent(5, 2, small_config(), 7777);
        logs[run] = train_agent(agent, train_env, valid_env, tc).log;
    }
    REQUIRE(logs[0].size() == logs[1].size());
    for (std::size_t i = 0; i < logs[0].size(); ++i) {
        CHECK(logs[0][i].epoch == logs[1][i].epoch);
        CHECK(logs[0][i].td_loss == logs[1][i].td_loss);
        CHECK(logs[0][i].valid_score == logs[1][i].valid_score);
        CHECK(logs[0][i].epsilon == logs[1][i].epsilon);
    }
}

TEST_CASE("early stopping restores the best validation checkpoint") {
    TrainConfig tc;
    tc.max_epochs = 10;
    tc.patience = 3;
    tc.steps_per_epoch = 3;

    ScriptedEnv train_env({});
    ScriptedEnv valid_env({0.1, 0.5, 0.3, 0.2, 0.45});
    VersionAgent agent;
    const TrainResult result = train_agent(agent, train_env, valid_env, tc);

    // Scores peak at epoch 1 (three learn steps per epoch -> version 6).
    CHECK(result.best_epoch == 1);
    CHECK(result.best_score == 0.5);
    CHECK(result.log.size() == 5);
    CHECK(agent.restored_version == 6);
    for (std::size_t i = 0; i < result.log.size(); ++i)
        CHECK(result.log[i].epoch == static_cast<int>(i));

    // Ties keep the newest weights but still count toward patience.
    ScriptedEnv tie_train({});
    ScriptedEnv tie_valid({0.5, 0.5, 0.1});
    VersionAgent tie_agent;
    tc.patience = 2;
    const TrainResult tie_result = train_agent(tie_agent, tie_train, tie_valid, tc);
    CHECK(tie_result.best_epoch == 1);
    CHECK(tie_result.log.size() == 3);
    CHECK(tie_agent.restored_version == 6);

    CHECK_THROWS_AS(train_agent(agent, train_env, valid_env, TrainConfig{}), std::domain_error);
}

TEST_CASE("sequence agent learns the corridor through windowed observations") {
    AgentConfig cfg;
    cfg.hidden = 24;
    cfg.gamma = 0.9;
    cfg.learning_rate = 1.5e-3;
    cfg.batch_size = 32;
    cfg.warmup = 300;
    cfg.buffer_capacity = 20000;
    cfg.target_update_rate = 0.05;
    cfg.window_length = 8;

    TrainConfig tc;
    tc.max_epochs = 40;
    tc.patience = 10;
    tc.steps_per_epoch = 200;

    testsup::ChainEnv train_env;
    testsup::ChainEnv valid_env;
    SeqDdqnAgent agent(5, 2, cfg, 606);
    const TrainResult result = train_agent(agent, train_env, valid_env, tc);

    REQUIRE(!result.log.empty());
    CHECK(result.best_score == 1.0);

    // The greedy policy must be optimal; Q accuracy gets a looser bound than
    // the flat agent because the recurrent trunk sees padded windows.
    const Eigen::MatrixXd q_star = testsup::chain_q_star(0.9);
    std::vector<Eigen::VectorXd> history;
    for (int s = 0; s <= 3; ++s) {
        history.clear();
        history.push_back(testsup::ChainEnv::one_hot(s));
        const Eigen::VectorXd q = agent.policy_net().qvalues(env::window(history, 8));
        CHECK(argmax_lowest(q) == 1);
        for (int a = 0; a < 2; ++a)
            CHECK(std::abs(q[a] - q_star(s, a)) / std::abs(q_star(s, a)) < 0.10);
    }
}

TEST_CASE("greedy evaluation is pure and reports the episode totals") {
    auto slice = synth_slice(260, 33);
    env::EnvConfig ecfg;
    env::LpEnv lp(slice, ecfg);

    NullAgent never;
    const auto idle = evaluate(lp, never);
    CHECK(idle.sum_fee == 0.0);
    CHECK(idle.sum_gas == 0.0);
    CHECK(idle.sum_lvr == 0.0);
    CHECK(idle.pnl_hedged() == 0.0);
    CHECK(idle.realloc_count == 0);

    OneShotAgent width2(2);
    const auto once = evaluate(lp, width2);
    CHECK(once.realloc_count == 1);
    CHECK(once.sum_gas == ecfg.gas_flat);
    CHECK(once.pnl_hedged() ==
          doctest::Approx(once.sum_fee - once.sum_gas - once.sum_lvr).epsilon(1e-12));

    const auto again = evaluate(lp, width2);
    CHECK(again.sum_fee == once.sum_fee);
    CHECK(again.sum_lvr == once.sum_lvr);
    CHECK(again.sum_gas == once.sum_gas);
    CHECK(again.steps == once.steps);
}
