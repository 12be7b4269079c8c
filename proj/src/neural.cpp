#include "v3lplab/neural.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace v3lplab::nn {
namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) {
    return (z.array() > 0.0).cast<double>().matrix();
}

Eigen::MatrixXd apply_scale(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale) {
    if (scale.size() == 0) return x;
    if (scale.size() != x.cols()) {
        throw std::invalid_argument("net: input scale length does not match input dim");
    }
    return x.array().rowwise() / scale.transpose().array();
}

NetConfig validated(NetConfig config);

void check_net_config(const NetConfig& config) {
    if (config.input_dim <= 0) throw std::invalid_argument("net: input_dim must be positive");
    if (config.action_count <= 0) {
        throw std::invalid_argument("net: action_count must be positive");
    }
    if (config.hidden <= 0) throw std::invalid_argument("net: hidden must be positive");
    if (config.input_scale.size() != 0 && config.input_scale.size() != config.input_dim) {
        throw std::invalid_argument("net: input scale length does not match input dim");
    }
    if (config.input_scale.size() != 0 && (config.input_scale.array() == 0.0).any()) {
        throw std::invalid_argument("net: input scale entries must be nonzero");
    }
}

NetConfig validated(NetConfig config) {
    check_net_config(config);
    return config;
}

}  // namespace

double gelu(double x) {
    const double u = kGeluScale * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluScale * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    weight_.name = name + ".w";
    weight_.value.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) weight_.value(r, c) = rng.uniform(-limit, limit);
    }
    weight_.grad = Eigen::MatrixXd::Zero(out, in);
    bias_.name = name + ".b";
    bias_.value = Eigen::MatrixXd::Zero(out, 1);
    bias_.grad = Eigen::MatrixXd::Zero(out, 1);
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) {
    last_input_ = x;
    Eigen::MatrixXd y = x * weight_.value.transpose();
    y.rowwise() += bias_.value.col(0).transpose();
    return y;
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& dy) {
    weight_.grad += dy.transpose() * last_input_;
    bias_.grad.col(0) += dy.colwise().sum().transpose();
    return dy * weight_.value;
}

DuelingHead::DuelingHead(const std::string& prefix, Eigen::Index in, Eigen::Index actions,
                         Rng& rng)
    : value_(prefix + ".value", in, 1, rng), advantage_(prefix + ".adv", in, actions, rng) {}

Eigen::MatrixXd DuelingHead::forward(const Eigen::MatrixXd& repr) {
    const Eigen::MatrixXd v = value_.forward(repr);
    const Eigen::MatrixXd a = advantage_.forward(repr);
    Eigen::MatrixXd q = a.colwise() - a.rowwise().mean();
    q.colwise() += v.col(0);
    return q;
}

Eigen::MatrixXd DuelingHead::backward(const Eigen::MatrixXd& dq) {
    const Eigen::MatrixXd da = dq.colwise() - dq.rowwise().mean();
    const Eigen::MatrixXd dv = dq.rowwise().sum();
    return value_.backward(dv) + advantage_.backward(da);
}

Eigen::MatrixXd DuelingHead::value_stream(const Eigen::MatrixXd& repr) {
    Eigen::MatrixXd v = repr * value_.weight().value.transpose();
    v.rowwise() += value_.bias().value.col(0).transpose();
    return v;
}

void DuelingHead::collect(std::vector<Tensor*>& out) {
    out.push_back(&value_.weight());
    out.push_back(&value_.bias());
    out.push_back(&advantage_.weight());
    out.push_back(&advantage_.bias());
}

MlpDuelingNet::MlpDuelingNet(const NetConfig& config, Rng& rng)
    : config_(validated(config)),
      l1_("l1", config.input_dim, config.hidden, rng),
      l2_("l2", config.hidden, config.hidden, rng),
      head_("head", config.hidden, config.action_count, rng) {}

Eigen::MatrixXd MlpDuelingNet::forward(const Eigen::MatrixXd& obs_batch) {
    if (obs_batch.cols() != config_.input_dim) {
        throw std::invalid_argument("mlp: observation width does not match input dim");
    }
    const Eigen::MatrixXd scaled = apply_scale(obs_batch, config_.input_scale);
    x1_ = l1_.forward(scaled);
    a1_ = relu(x1_);
    x2_ = l2_.forward(a1_);
    a2_ = relu(x2_);
    return head_.forward(a2_);
}

void MlpDuelingNet::backward(const Eigen::MatrixXd& dq) {
    const Eigen::MatrixXd drepr = head_.backward(dq);
    const Eigen::MatrixXd dx2 = drepr.cwiseProduct(relu_mask(x2_));
    const Eigen::MatrixXd da1 = l2_.backward(dx2);
    const Eigen::MatrixXd dx1 = da1.cwiseProduct(relu_mask(x1_));
    l1_.backward(dx1);
}

Eigen::VectorXd MlpDuelingNet::qvalues(const Eigen::VectorXd& obs) {
    return forward(obs.transpose()).row(0).transpose();
}

Eigen::MatrixXd MlpDuelingNet::value_stream(const Eigen::MatrixXd& obs_batch) {
    forward(obs_batch);
    return head_.value_stream(a2_);
}

std::vector<Tensor*> MlpDuelingNet::params() {
    std::vector<Tensor*> out{&l1_.weight(), &l1_.bias(), &l2_.weight(), &l2_.bias()};
    head_.collect(out);
    return out;
}

void MlpDuelingNet::zero_grad() {
    for (Tensor* t : params()) t->grad.setZero();
}

SsmDuelingNet::SsmDuelingNet(const NetConfig& config, Rng& rng, bool identity_state)
    : config_(validated(config)),
      identity_state_(identity_state),
      dense_("dense", config.hidden, config.hidden, rng),
      head_("head", config.hidden, config.action_count, rng) {
    const Eigen::Index h = config.hidden;
    // 0.9 x orthogonal: QR of a gaussian draw, with the R diagonal sign
    // folded into Q so the factorization is unique.
    Eigen::MatrixXd gauss(h, h);
    for (Eigen::Index r = 0; r < h; ++r) {
        for (Eigen::Index c = 0; c < h; ++c) gauss(r, c) = rng.normal();
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(h, h);
    const Eigen::MatrixXd r_mat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < h; ++j) {
        if (r_mat(j, j) < 0.0) q.col(j) *= -1.0;
    }
    a_.name = "ssm.a";
    a_.value = 0.9 * q;
    a_.grad = Eigen::MatrixXd::Zero(h, h);

    b_.name = "ssm.b";
    b_.value.resize(config.input_dim, h);
    for (Eigen::Index r = 0; r < config.input_dim; ++r) {
        for (Eigen::Index c = 0; c < h; ++c) b_.value(r, c) = rng.uniform(-0.1, 0.1);
    }
    b_.grad = Eigen::MatrixXd::Zero(config.input_dim, h);
}

Eigen::MatrixXd SsmDuelingNet::forward(const std::vector<Eigen::MatrixXd>& windows) {
    if (windows.empty()) throw std::invalid_argument("ssm: empty batch");
    const Eigen::Index batch = static_cast<Eigen::Index>(windows.size());
    const Eigen::Index steps = windows[0].rows();
    if (steps < 1) throw std::invalid_argument("ssm: window must have at least one row");
    for (const Eigen::MatrixXd& w : windows) {
        if (w.rows() != steps || w.cols() != config_.input_dim) {
            throw std::invalid_argument("ssm: ragged window batch");
        }
    }

    xs_.assign(steps, Eigen::MatrixXd(batch, config_.input_dim));
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index i = 0; i < batch; ++i) xs_[t].row(i) = windows[i].row(t);
        xs_[t] = apply_scale(xs_[t], config_.input_scale);
    }

    zs_.assign(steps, Eigen::MatrixXd());
    hs_.assign(steps, Eigen::MatrixXd());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(batch, config_.hidden);
    for (Eigen::Index t = 0; t < steps; ++t) {
        zs_[t] = h * a_.value + xs_[t] * b_.value;
        if (identity_state_) {
            hs_[t] = zs_[t];
        } else {
            hs_[t] = zs_[t].unaryExpr([](double v) { return gelu(v); });
        }
        h = hs_[t];
    }

    dense_in_ = dense_.forward(h);
    dense_act_ = relu(dense_in_);
    return head_.forward(dense_act_);
}

void SsmDuelingNet::backward(const Eigen::MatrixXd& dq) {
    const Eigen::Index steps = static_cast<Eigen::Index>(xs_.size());
    const Eigen::MatrixXd drepr = head_.backward(dq);
    const Eigen::MatrixXd ddense = drepr.cwiseProduct(relu_mask(dense_in_));
    Eigen::MatrixXd dh = dense_.backward(ddense);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        Eigen::MatrixXd dz;
        if (identity_state_) {
            dz = dh;
        } else {
            dz = dh.cwiseProduct(zs_[t].unaryExpr([](double v) { return gelu_grad(v); }));
        }
        if (t > 0) a_.grad += hs_[t - 1].transpose() * dz;
        b_.grad += xs_[t].transpose() * dz;
        dh = dz * a_.value.transpose();
    }
}

Eigen::VectorXd SsmDuelingNet::qvalues(const Eigen::MatrixXd& window) {
    return forward(std::vector<Eigen::MatrixXd>{window}).row(0).transpose();
}

Eigen::MatrixXd SsmDuelingNet::value_stream(const std::vector<Eigen::MatrixXd>& windows) {
    forward(windows);
    return head_.value_stream(dense_act_);
}

std::vector<Tensor*> SsmDuelingNet::params() {
    std::vector<Tensor*> out{&a_, &b_, &dense_.weight(), &dense_.bias()};
    head_.collect(out);
    return out;
}

void SsmDuelingNet::zero_grad() {
    for (Tensor* t : params()) t->grad.setZero();
}

void Adam::step(const std::vector<Tensor*>& params) {
    if (m_.empty()) {
        for (const Tensor* t : params) {
            m_.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
            v_.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
        }
    }
    if (m_.size() != params.size()) {
        throw std::invalid_argument("adam: parameter list changed between steps");
    }

    double sq_norm = 0.0;
    for (const Tensor* t : params) sq_norm += t->grad.squaredNorm();
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
        const double norm = std::sqrt(sq_norm);
        if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }

    t_ += 1;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Eigen::ArrayXXd g = p.grad.array() * scale;
        m_[i] = config_.beta1 * m_[i].array() + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i].array() + (1.0 - config_.beta2) * g.square();
        const Eigen::ArrayXXd m_hat = m_[i].array() / bc1;
        const Eigen::ArrayXXd v_hat = v_[i].array() / bc2;
        p.value.array() -= config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon);
    }
}

void soft_update(const std::vector<Tensor*>& dst, const std::vector<Tensor*>& src, double rate) {
    if (dst.size() != src.size()) throw std::invalid_argument("soft_update: size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i]->value = (1.0 - rate) * dst[i]->value + rate * src[i]->value;
    }
}

void copy_params(const std::vector<Tensor*>& dst, const std::vector<Tensor*>& src) {
    if (dst.size() != src.size()) throw std::invalid_argument("copy_params: size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

void save_checkpoint(const std::string& path, const std::vector<Tensor*>& params) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const Tensor* t : params) {
        nlohmann::json entry;
        entry["name"] = t->name;
        entry["rows"] = t->value.rows();
        entry["cols"] = t->value.cols();
        nlohmann::json data = nlohmann::json::array();
        for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t->value.cols(); ++c) data.push_back(t->value(r, c));
        }
        entry["data"] = std::move(data);
        tensors.push_back(std::move(entry));
    }
    const nlohmann::json doc{
        {"format", "v3lplab.checkpoint"}, {"version", 1}, {"tensors", std::move(tensors)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
    out << doc.dump();
    if (!out.flush()) throw std::runtime_error("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<Tensor*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("checkpoint: not json: " + std::string(e.what()));
    }
    if (doc.value("format", "") != "v3lplab.checkpoint") {
        throw std::runtime_error("checkpoint: unrecognized format marker");
    }
    if (doc.value("version", -1) != 1) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    std::unordered_map<std::string, const nlohmann::json*> by_name;
    for (const nlohmann::json& entry : doc.at("tensors")) {
        by_name[entry.at("name").get<std::string>()] = &entry;
    }
    if (by_name.size() != params.size()) {
        throw std::runtime_error("checkpoint: tensor count mismatch");
    }
    for (Tensor* t : params) {
        const auto it = by_name.find(t->name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint: missing tensor: " + t->name);
        }
        const nlohmann::json& entry = *it->second;
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        if (rows != t->value.rows() || cols != t->value.cols()) {
            throw std::runtime_error("checkpoint: shape mismatch for tensor: " + t->name);
        }
        const nlohmann::json& data = entry.at("data");
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
            throw std::runtime_error("checkpoint: data length mismatch for tensor: " + t->name);
        }
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) t->value(r, c) = data[k++].get<double>();
        }
    }
}

}  // namespace v3lplab::nn
