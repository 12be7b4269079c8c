#pragma once

// Minimal episodic-environment interface shared by the hourly backtest and
// the synthetic control problems used to exercise the learners.

#include <Eigen/Dense>

namespace v3lplab {

struct StepOutcome {
    Eigen::VectorXd obs;
    double reward = 0.0;
    bool done = false;
    // Episode ended by a step cap rather than a terminal state. Learners must
    // still bootstrap from obs, so stored transitions keep done = 0.
    bool truncated = false;
};

class Environment {
  public:
    virtual ~Environment() = default;

    virtual Eigen::VectorXd reset() = 0;
    virtual StepOutcome step(int action) = 0;

    virtual int action_count() const = 0;
    virtual Eigen::Index obs_dim() const = 0;

    // Quality of the most recently completed episode, used to rank greedy
    // validation runs. Environments with a domain-specific notion of profit
    // report that; others report the undiscounted return.
    virtual double episode_score() const = 0;
};

}  // namespace v3lplab
