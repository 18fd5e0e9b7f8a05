#pragma once

// Small dense feedforward networks: forward/backward passes, batch
// normalization, dropout, Adam and target-network blending. Parameters
// live in one flat vector so optimizers and checkpoints can treat them
// uniformly.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "corrsched/rng.hpp"

namespace corrsched::nn {

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1, kIdentity = 2 };

// Layer = affine -> activation -> [batch norm] -> [dropout].
struct LayerSpec {
  int input_width = 1;
  int output_width = 1;
  Activation activation = Activation::kRelu;
  double dropout_rate = 0.0;
  bool batch_norm = false;

  bool operator==(const LayerSpec&) const = default;
};

struct InitOptions {
  // Hidden layers draw from +-1/sqrt(fan_in); the output layer from +-final_range.
  double final_range = 3e-3;
};

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-5;

struct Gradients {
  Eigen::VectorXd params;
  Eigen::MatrixXd input;  // dL/d(input batch)
};

class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> layers, Rng& init_rng, const InitOptions& init = {});

  // batch: rows are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch);
  // Backpropagates dL/d(output) through the most recent forward pass.
  Gradients backward(const Eigen::MatrixXd& upstream) const;
  // Same, with an extra gradient w.r.t. the output layer's pre-activation.
  Gradients backward(const Eigen::MatrixXd& upstream, const Eigen::MatrixXd& output_pre_gradient) const;

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_.reseed(seed); }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_width() const { return layers_.front().input_width; }
  int output_width() const { return layers_.back().output_width; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  // Running batch-norm means followed by variances, per normalized layer.
  Eigen::VectorXd& running_stats() { return running_; }
  const Eigen::VectorXd& running_stats() const { return running_; }

  // Pre-activation of a layer in the last forward pass (diagnostics, kink checks).
  const Eigen::MatrixXd& pre_activation(std::size_t layer) const;

  bool same_architecture(const Network& other) const { return layers_ == other.layers_; }

  void save(std::ostream& out) const;
  static Network load(std::istream& in);

 private:
  struct Offsets {
    Eigen::Index weight = 0, bias = 0, gamma = -1, beta = -1, run_mean = -1, run_var = -1;
  };
  struct Cache {
    Eigen::MatrixXd input, pre, act, xhat, out;
    Eigen::RowVectorXd inv_std;
    Eigen::MatrixXd mask;  // already scaled by 1/(1-p)
    bool batch_stats = false;
  };

  void layout();

  std::vector<LayerSpec> layers_;
  std::vector<Offsets> offsets_;
  Eigen::VectorXd params_;
  Eigen::VectorXd running_;
  bool training_ = false;
  Rng dropout_rng_{0x5eed};
  std::vector<Cache> cache_;
  bool has_cache_ = false;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n, double learning_rate);
  void save(std::ostream& out) const;
  static AdamState load(std::istream& in);
};

// One bias-corrected Adam update of params in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

// target <- tau * source + (1 - tau) * target, including running statistics.
void soft_update(Network& target, const Network& source, double tau);

}  // namespace corrsched::nn
