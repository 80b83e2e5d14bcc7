#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cfglab/rng.hpp"

namespace cfglab {

struct MlpConfig {
  int input_dim = 2;     // latent dimension
  int num_classes = 0;   // 0 means no class conditioning
  int hidden = 64;
  int hidden_layers = 3;
  int time_embed = 16;   // even; sin/cos pairs of t/T
  int class_embed = 8;   // appended when num_classes > 0

  int total_input() const {
    return input_dim + time_embed + (num_classes > 0 ? class_embed : 0);
  }
};

// Scalar-output dense network scoring a latent at a noise level: input is
// x ++ sinusoidal(t/T) ++ class embedding row, tanh hidden layers, linear head.
class Mlp {
 public:
  Mlp(const MlpConfig& cfg, Rng& rng);

  const MlpConfig& config() const { return cfg_; }

  double forward(const std::vector<double>& x, double t_frac, int cls) const;

  // mirror of the parameter set, used for gradients and momentum buffers
  struct ParamSet {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    Eigen::MatrixXd class_table;
    void set_zero();
  };
  ParamSet zeros_like() const;

  struct Cache {
    Eigen::VectorXd input;
    std::vector<Eigen::VectorXd> act;  // post-tanh activations per hidden layer
    int cls = -1;
  };

  double forward_cached(const std::vector<double>& x, double t_frac, int cls,
                        Cache& cache) const;
  // accumulates dLoss/dParams into grads for dLoss/dOutput = dout
  void backward(const Cache& cache, double dout, ParamSet& grads) const;

  void sgd_step(const ParamSet& grads, ParamSet& velocity, double lr, double momentum);

  // documented multiply-add estimate of one forward pass (embedding costed at
  // 2 ops per dimension)
  long forward_ops() const;

  std::vector<double> pack() const;
  void unpack(const std::vector<double>& flat);
  std::size_t param_count() const;

 private:
  Eigen::VectorXd embed_input(const std::vector<double>& x, double t_frac, int cls) const;

  MlpConfig cfg_;
  std::vector<Eigen::MatrixXd> w_;  // hidden_layers + 1 entries, last is 1 x hidden
  std::vector<Eigen::VectorXd> b_;
  Eigen::MatrixXd class_table_;     // num_classes x class_embed
};

}  // namespace cfglab
