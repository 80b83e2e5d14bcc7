#include "cfglab/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace cfglab {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Mlp::Mlp(const MlpConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.hidden < 1 || cfg.hidden_layers < 1) {
    throw std::invalid_argument("Mlp: degenerate layer configuration");
  }
  if (cfg.time_embed % 2 != 0) {
    throw std::invalid_argument("Mlp: time embedding width must be even");
  }

  auto dense = [&rng](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    }
    return m;
  };

  int in = cfg.total_input();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    w_.push_back(dense(cfg.hidden, in));
    b_.push_back(Eigen::VectorXd::Zero(cfg.hidden));
    in = cfg.hidden;
  }
  w_.push_back(dense(1, cfg.hidden));
  b_.push_back(Eigen::VectorXd::Zero(1));

  if (cfg.num_classes > 0) {
    class_table_ = 0.3 * dense(cfg.num_classes, cfg.class_embed) *
                   std::sqrt(static_cast<double>(cfg.class_embed));
  } else {
    class_table_.resize(0, 0);
  }
}

Eigen::VectorXd Mlp::embed_input(const std::vector<double>& x, double t_frac, int cls) const {
  if (static_cast<int>(x.size()) != cfg_.input_dim) {
    throw std::invalid_argument("Mlp: input dimension mismatch");
  }
  Eigen::VectorXd in(cfg_.total_input());
  for (int i = 0; i < cfg_.input_dim; ++i) in[i] = x[static_cast<std::size_t>(i)];
  for (int j = 0; j < cfg_.time_embed / 2; ++j) {
    const double arg = kPi * std::ldexp(t_frac, j);  // pi * 2^j * t/T
    in[cfg_.input_dim + 2 * j] = std::sin(arg);
    in[cfg_.input_dim + 2 * j + 1] = std::cos(arg);
  }
  if (cfg_.num_classes > 0) {
    if (cls < 0 || cls >= cfg_.num_classes) {
      throw std::invalid_argument("Mlp: class index out of range");
    }
    in.tail(cfg_.class_embed) = class_table_.row(cls).transpose();
  }
  return in;
}

double Mlp::forward(const std::vector<double>& x, double t_frac, int cls) const {
  Eigen::VectorXd a = embed_input(x, t_frac, cls);
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    a = (w_[l] * a + b_[l]).array().tanh().matrix();
  }
  return (w_.back() * a + b_.back())[0];
}

double Mlp::forward_cached(const std::vector<double>& x, double t_frac, int cls,
                           Cache& cache) const {
  cache.input = embed_input(x, t_frac, cls);
  cache.cls = cfg_.num_classes > 0 ? cls : -1;
  cache.act.resize(w_.size() - 1);
  const Eigen::VectorXd* prev = &cache.input;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    cache.act[l] = (w_[l] * (*prev) + b_[l]).array().tanh().matrix();
    prev = &cache.act[l];
  }
  return (w_.back() * (*prev) + b_.back())[0];
}

void Mlp::backward(const Cache& cache, double dout, ParamSet& grads) const {
  const std::size_t last = w_.size() - 1;
  // head
  grads.w[last].row(0) += dout * cache.act[last - 1].transpose();
  grads.b[last][0] += dout;
  Eigen::VectorXd delta = dout * w_[last].row(0).transpose();

  for (std::size_t l = last; l-- > 0;) {
    // delta currently holds dL/d(act[l]); fold in the tanh derivative
    delta.array() *= (1.0 - cache.act[l].array().square());
    const Eigen::VectorXd& below = (l == 0) ? cache.input : cache.act[l - 1];
    grads.w[l] += delta * below.transpose();
    grads.b[l] += delta;
    if (l > 0) {
      delta = w_[l].transpose() * delta;
    } else if (cache.cls >= 0) {
      const Eigen::VectorXd dinput = w_[0].transpose() * delta;
      grads.class_table.row(cache.cls) += dinput.tail(cfg_.class_embed).transpose();
    }
  }
}

void Mlp::ParamSet::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
  class_table.setZero();
}

Mlp::ParamSet Mlp::zeros_like() const {
  ParamSet p;
  for (const auto& m : w_) p.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : b_) p.b.push_back(Eigen::VectorXd::Zero(v.size()));
  p.class_table = Eigen::MatrixXd::Zero(class_table_.rows(), class_table_.cols());
  return p;
}

void Mlp::sgd_step(const ParamSet& grads, ParamSet& velocity, double lr, double momentum) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    velocity.w[l] = momentum * velocity.w[l] - lr * grads.w[l];
    velocity.b[l] = momentum * velocity.b[l] - lr * grads.b[l];
    w_[l] += velocity.w[l];
    b_[l] += velocity.b[l];
  }
  if (class_table_.size() > 0) {
    velocity.class_table = momentum * velocity.class_table - lr * grads.class_table;
    class_table_ += velocity.class_table;
  }
}

long Mlp::forward_ops() const {
  long ops = 2L * cfg_.time_embed;
  for (const auto& m : w_) ops += m.rows() * m.cols() + m.rows();
  return ops;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& m : w_) n += static_cast<std::size_t>(m.size());
  for (const auto& v : b_) n += static_cast<std::size_t>(v.size());
  n += static_cast<std::size_t>(class_table_.size());
  return n;
}

std::vector<double> Mlp::pack() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (std::size_t l = 0; l < w_.size(); ++l) {
    for (Eigen::Index r = 0; r < w_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < w_[l].cols(); ++c) flat.push_back(w_[l](r, c));
    }
    for (Eigen::Index i = 0; i < b_[l].size(); ++i) flat.push_back(b_[l][i]);
  }
  for (Eigen::Index r = 0; r < class_table_.rows(); ++r) {
    for (Eigen::Index c = 0; c < class_table_.cols(); ++c) flat.push_back(class_table_(r, c));
  }
  return flat;
}

void Mlp::unpack(const std::vector<double>& flat) {
  if (flat.size() != param_count()) {
    throw std::invalid_argument("Mlp: serialized parameter count mismatch");
  }
  std::size_t i = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    for (Eigen::Index r = 0; r < w_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < w_[l].cols(); ++c) w_[l](r, c) = flat[i++];
    }
    for (Eigen::Index k = 0; k < b_[l].size(); ++k) b_[l][k] = flat[i++];
  }
  for (Eigen::Index r = 0; r < class_table_.rows(); ++r) {
    for (Eigen::Index c = 0; c < class_table_.cols(); ++c) class_table_(r, c) = flat[i++];
  }
}

}  // namespace cfglab
