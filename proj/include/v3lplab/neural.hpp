#pragma once

// Dense Q-networks with hand-written backprop: a two-layer dueling MLP over
// single observations and a state-space recurrence over observation windows.
// Samples are rows throughout; a linear layer computes Y = X * W^T + b.

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "v3lplab/rng.hpp"

namespace v3lplab::nn {

// tanh-form gaussian error linear unit and its exact derivative
double gelu(double x);
double gelu_grad(double x);

struct Tensor {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // same shape as value
};

// Fully-connected layer. backward() accumulates parameter gradients and
// returns the gradient with respect to its input.
class Linear {
  public:
    Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
    Eigen::MatrixXd backward(const Eigen::MatrixXd& dy);

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

  private:
    Tensor weight_;  // out x in
    Tensor bias_;    // out x 1
    Eigen::MatrixXd last_input_;
};

// Value + advantage readout: Q = V + (A - rowmean(A)), so the advantage
// stream is zero-mean across actions by construction.
class DuelingHead {
  public:
    DuelingHead(const std::string& prefix, Eigen::Index in, Eigen::Index actions, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& repr);   // B x actions
    Eigen::MatrixXd backward(const Eigen::MatrixXd& dq);    // returns d(repr)
    Eigen::MatrixXd value_stream(const Eigen::MatrixXd& repr);  // B x 1, no cache

    void collect(std::vector<Tensor*>& out);

  private:
    Linear value_;
    Linear advantage_;
};

struct NetConfig {
    Eigen::Index input_dim = 0;
    int action_count = 0;
    int hidden = 64;
    // Per-field divisors applied to raw observations before any layer;
    // empty means no scaling.
    Eigen::VectorXd input_scale;
};

// Observation -> scale -> two ReLU layers -> dueling head.
class MlpDuelingNet {
  public:
    MlpDuelingNet(const NetConfig& config, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& obs_batch);  // B x actions
    void backward(const Eigen::MatrixXd& dq);
    Eigen::VectorXd qvalues(const Eigen::VectorXd& obs);
    // V(s) alone, for checking the zero-mean advantage decomposition
    Eigen::MatrixXd value_stream(const Eigen::MatrixXd& obs_batch);

    std::vector<Tensor*> params();
    void zero_grad();
    Eigen::Index input_dim() const { return config_.input_dim; }
    int action_count() const { return config_.action_count; }

  private:
    NetConfig config_;
    Linear l1_;
    Linear l2_;
    DuelingHead head_;
    Eigen::MatrixXd x1_, a1_, x2_, a2_;
};

// Window (T x D per sample) -> scale -> linear state recurrence
// H_t = act(H_{t-1} A + X_t B) -> last state -> ReLU layer -> dueling head.
// The recurrence matrix starts at 0.9 x orthogonal so powers neither explode
// nor vanish over the window lengths used here.
class SsmDuelingNet {
  public:
    // identity_state replaces the recurrence activation with the identity,
    // making the final state an exact linear filter of the inputs.
    SsmDuelingNet(const NetConfig& config, Rng& rng, bool identity_state = false);

    Eigen::MatrixXd forward(const std::vector<Eigen::MatrixXd>& windows);  // B x actions
    void backward(const Eigen::MatrixXd& dq);
    Eigen::VectorXd qvalues(const Eigen::MatrixXd& window);
    Eigen::MatrixXd value_stream(const std::vector<Eigen::MatrixXd>& windows);

    std::vector<Tensor*> params();
    void zero_grad();
    Eigen::Index input_dim() const { return config_.input_dim; }
    int action_count() const { return config_.action_count; }
    const Eigen::MatrixXd& state_matrix() const { return a_.value; }
    const Eigen::MatrixXd& input_matrix() const { return b_.value; }
    // B x hidden final recurrence state of the latest forward pass
    const Eigen::MatrixXd& last_state() const { return hs_.back(); }

  private:
    NetConfig config_;
    bool identity_state_;
    Tensor a_;  // hidden x hidden, right-multiplies the state row
    Tensor b_;  // input x hidden
    Linear dense_;
    DuelingHead head_;
    // caches for truncated-free full backprop through time
    std::vector<Eigen::MatrixXd> xs_, zs_, hs_;
    Eigen::MatrixXd dense_in_, dense_act_;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.7;  // global gradient norm bound, 0 disables
};

// Adam over a fixed parameter list. The global norm clip is applied to the
// raw gradients before the moment updates.
class Adam {
  public:
    explicit Adam(AdamConfig config) : config_(config) {}

    void step(const std::vector<Tensor*>& params);
    int steps_taken() const { return t_; }

  private:
    AdamConfig config_;
    int t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

// dst <- (1 - rate) * dst + rate * src, matched by position.
void soft_update(const std::vector<Tensor*>& dst, const std::vector<Tensor*>& src, double rate);

void copy_params(const std::vector<Tensor*>& dst, const std::vector<Tensor*>& src);

// Versioned JSON checkpoint of named tensors. Loading validates the format
// marker and requires an exact name and shape match.
void save_checkpoint(const std::string& path, const std::vector<Tensor*>& params);
void load_checkpoint(const std::string& path, const std::vector<Tensor*>& params);

}  // namespace v3lplab::nn
