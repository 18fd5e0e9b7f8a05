#include "corrsched/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "corrsched/binary_io.hpp"
#include "corrsched/error.hpp"

namespace corrsched::nn {

namespace {

constexpr char kNetMagic[5] = "CSNN";
constexpr char kAdamMagic[5] = "CSAD";
constexpr std::uint32_t kFormatVersion = 1;

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kIdentity: return z;
  }
  return z;
}

// dL/dz given dL/da, pre-activation z and activation output a.
Eigen::MatrixXd activation_backward(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                                    Activation act) {
  switch (act) {
    case Activation::kRelu: return (z.array() > 0.0).select(grad.array(), 0.0).matrix();
    case Activation::kTanh: return (grad.array() * (1.0 - a.array().square())).matrix();
    case Activation::kIdentity: return grad;
  }
  return grad;
}

}  // namespace

Network::Network(std::vector<LayerSpec> layers, Rng& init_rng, const InitOptions& init) : layers_(std::move(layers)) {
  layout();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const auto& off = offsets_[l];
    const bool last = l + 1 == layers_.size();
    const double range = last ? init.final_range : 1.0 / std::sqrt(static_cast<double>(spec.input_width));
    const Eigen::Index nw = static_cast<Eigen::Index>(spec.input_width) * spec.output_width;
    for (Eigen::Index i = 0; i < nw; ++i) params_(off.weight + i) = init_rng.uniform(-range, range);
    for (Eigen::Index i = 0; i < spec.output_width; ++i) params_(off.bias + i) = init_rng.uniform(-range, range);
    if (spec.batch_norm) {
      params_.segment(off.gamma, spec.output_width).setOnes();
      params_.segment(off.beta, spec.output_width).setZero();
    }
  }
}

void Network::layout() {
  require(!layers_.empty(), ErrorKind::kInvalidInput, "network needs at least one layer");
  offsets_.clear();
  Eigen::Index p = 0, r = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    require(spec.input_width > 0 && spec.output_width > 0, ErrorKind::kInvalidInput, "layer widths must be positive");
    require(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0, ErrorKind::kInvalidInput,
            "dropout rate must lie in [0, 1)");
    if (l > 0)
      require(layers_[l - 1].output_width == spec.input_width, ErrorKind::kInvalidInput,
              "consecutive layer widths do not match at layer " + std::to_string(l));
    Offsets off;
    off.weight = p;
    p += static_cast<Eigen::Index>(spec.input_width) * spec.output_width;
    off.bias = p;
    p += spec.output_width;
    if (spec.batch_norm) {
      off.gamma = p;
      p += spec.output_width;
      off.beta = p;
      p += spec.output_width;
      off.run_mean = r;
      r += spec.output_width;
      off.run_var = r;
      r += spec.output_width;
    }
    offsets_.push_back(off);
  }
  params_ = Eigen::VectorXd::Zero(p);
  running_ = Eigen::VectorXd::Zero(r);
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (layers_[l].batch_norm) running_.segment(offsets_[l].run_var, layers_[l].output_width).setOnes();
  cache_.assign(layers_.size(), Cache{});
  has_cache_ = false;
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& batch) {
  require(batch.cols() == input_width(), ErrorKind::kInvalidInput,
          "batch width " + std::to_string(batch.cols()) + " does not match network input width " +
              std::to_string(input_width()));
  const Eigen::Index m = batch.rows();
  Eigen::MatrixXd x = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const auto& off = offsets_[l];
    auto& c = cache_[l];
    const Eigen::Map<const Eigen::MatrixXd> w(params_.data() + off.weight, spec.input_width, spec.output_width);
    const Eigen::Map<const Eigen::RowVectorXd> b(params_.data() + off.bias, spec.output_width);

    c.input = std::move(x);
    c.pre = c.input * w;
    c.pre.rowwise() += b;
    c.act = activate(c.pre, spec.activation);
    Eigen::MatrixXd y;
    if (spec.batch_norm) {
      const Eigen::Map<const Eigen::RowVectorXd> gamma(params_.data() + off.gamma, spec.output_width);
      const Eigen::Map<const Eigen::RowVectorXd> beta(params_.data() + off.beta, spec.output_width);
      Eigen::Map<Eigen::RowVectorXd> run_mean(running_.data() + off.run_mean, spec.output_width);
      Eigen::Map<Eigen::RowVectorXd> run_var(running_.data() + off.run_var, spec.output_width);
      Eigen::RowVectorXd mean, var;
      c.batch_stats = training_;
      if (training_) {
        mean = c.act.colwise().mean();
        var = (c.act.rowwise() - mean).array().square().colwise().mean().matrix();
        run_mean = kBatchNormMomentum * run_mean + (1.0 - kBatchNormMomentum) * mean;
        run_var = kBatchNormMomentum * run_var + (1.0 - kBatchNormMomentum) * var;
      } else {
        mean = run_mean;
        var = run_var;
      }
      c.inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
      c.xhat = ((c.act.rowwise() - mean).array().rowwise() * c.inv_std.array()).matrix();
      y = (c.xhat.array().rowwise() * gamma.array()).matrix();
      y.rowwise() += beta;
    } else {
      y = c.act;
    }
    if (training_ && spec.dropout_rate > 0.0) {
      const double keep = 1.0 - spec.dropout_rate;
      c.mask.resize(m, spec.output_width);
      for (Eigen::Index j = 0; j < c.mask.cols(); ++j)
        for (Eigen::Index i = 0; i < m; ++i) c.mask(i, j) = dropout_rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
      y.array() *= c.mask.array();
    } else {
      c.mask.resize(0, 0);
    }
    x = std::move(y);
  }
  has_cache_ = true;
  return x;
}

Gradients Network::backward(const Eigen::MatrixXd& upstream) const { return backward(upstream, Eigen::MatrixXd()); }

Gradients Network::backward(const Eigen::MatrixXd& upstream, const Eigen::MatrixXd& output_pre_gradient) const {
  require(has_cache_, ErrorKind::kInvalidState, "backward called without a cached forward pass");
  const Eigen::Index m = cache_.back().input.rows();
  require(upstream.rows() == m && upstream.cols() == output_width(), ErrorKind::kInvalidInput,
          "upstream gradient shape does not match the last forward pass");

  Gradients g;
  g.params = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd grad = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& spec = layers_[li];
    const auto& off = offsets_[li];
    const auto& c = cache_[li];
    if (c.mask.size() > 0) grad.array() *= c.mask.array();
    if (spec.batch_norm) {
      const Eigen::Map<const Eigen::RowVectorXd> gamma(params_.data() + off.gamma, spec.output_width);
      g.params.segment(off.gamma, spec.output_width) = (grad.array() * c.xhat.array()).colwise().sum().transpose();
      g.params.segment(off.beta, spec.output_width) = grad.colwise().sum().transpose();
      const Eigen::MatrixXd dxhat = (grad.array().rowwise() * gamma.array()).matrix();
      if (c.batch_stats) {
        const double md = static_cast<double>(m);
        const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum();
        Eigen::ArrayXXd t = md * dxhat.array();
        t.rowwise() -= sum_d.array();
        t -= c.xhat.array().rowwise() * sum_dx.array();
        grad = (t.rowwise() * (c.inv_std.array() / md)).matrix();
      } else {
        grad = (dxhat.array().rowwise() * c.inv_std.array()).matrix();
      }
    }
    Eigen::MatrixXd dz = activation_backward(grad, c.pre, c.act, spec.activation);
    if (li + 1 == layers_.size() && output_pre_gradient.size() > 0) {
      require(output_pre_gradient.rows() == dz.rows() && output_pre_gradient.cols() == dz.cols(),
              ErrorKind::kInvalidInput, "pre-activation gradient shape does not match the output layer");
      dz += output_pre_gradient;
    }
    Eigen::Map<Eigen::MatrixXd> dw(g.params.data() + off.weight, spec.input_width, spec.output_width);
    dw.noalias() = c.input.transpose() * dz;
    g.params.segment(off.bias, spec.output_width) = dz.colwise().sum().transpose();
    const Eigen::Map<const Eigen::MatrixXd> w(params_.data() + off.weight, spec.input_width, spec.output_width);
    grad.noalias() = dz * w.transpose();
  }
  g.input = std::move(grad);
  return g;
}

const Eigen::MatrixXd& Network::pre_activation(std::size_t layer) const {
  require(has_cache_, ErrorKind::kInvalidState, "no forward pass cached");
  return cache_.at(layer).pre;
}

void Network::save(std::ostream& out) const {
  binio::put_magic(out, kNetMagic);
  binio::put_uint<std::uint32_t>(out, kFormatVersion);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& spec : layers_) {
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(spec.input_width));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(spec.output_width));
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(spec.activation));
    binio::put_f64(out, spec.dropout_rate);
    binio::put_uint<std::uint8_t>(out, spec.batch_norm ? 1 : 0);
  }
  binio::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(params_.size()));
  for (Eigen::Index i = 0; i < params_.size(); ++i) binio::put_f64(out, params_(i));
  binio::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(running_.size()));
  for (Eigen::Index i = 0; i < running_.size(); ++i) binio::put_f64(out, running_(i));
}

Network Network::load(std::istream& in) {
  binio::expect_magic(in, kNetMagic, "network checkpoint");
  const auto version = binio::get_uint<std::uint32_t>(in);
  require(version == kFormatVersion, ErrorKind::kSchema, "unsupported network checkpoint version " + std::to_string(version));
  Network net;
  const auto count = binio::get_uint<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < count; ++l) {
    LayerSpec spec;
    spec.input_width = static_cast<int>(binio::get_uint<std::uint32_t>(in));
    spec.output_width = static_cast<int>(binio::get_uint<std::uint32_t>(in));
    const auto act = binio::get_uint<std::uint8_t>(in);
    require(act <= 2, ErrorKind::kSchema, "unknown activation code");
    spec.activation = static_cast<Activation>(act);
    spec.dropout_rate = binio::get_f64(in);
    spec.batch_norm = binio::get_uint<std::uint8_t>(in) != 0;
    net.layers_.push_back(spec);
  }
  net.layout();
  const auto np = binio::get_uint<std::uint64_t>(in);
  require(np == static_cast<std::uint64_t>(net.params_.size()), ErrorKind::kSchema, "parameter count mismatch");
  for (Eigen::Index i = 0; i < net.params_.size(); ++i) net.params_(i) = binio::get_f64(in);
  const auto nr = binio::get_uint<std::uint64_t>(in);
  require(nr == static_cast<std::uint64_t>(net.running_.size()), ErrorKind::kSchema, "running statistics count mismatch");
  for (Eigen::Index i = 0; i < net.running_.size(); ++i) net.running_(i) = binio::get_f64(in);
  return net;
}

AdamState AdamState::for_size(Eigen::Index n, double learning_rate) {
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(n);
  s.second_moment = Eigen::VectorXd::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

void AdamState::save(std::ostream& out) const {
  binio::put_magic(out, kAdamMagic);
  binio::put_uint<std::uint32_t>(out, kFormatVersion);
  binio::put_i64(out, step);
  binio::put_f64(out, learning_rate);
  binio::put_f64(out, beta1);
  binio::put_f64(out, beta2);
  binio::put_f64(out, epsilon);
  binio::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(first_moment.size()));
  for (Eigen::Index i = 0; i < first_moment.size(); ++i) binio::put_f64(out, first_moment(i));
  for (Eigen::Index i = 0; i < second_moment.size(); ++i) binio::put_f64(out, second_moment(i));
}

AdamState AdamState::load(std::istream& in) {
  binio::expect_magic(in, kAdamMagic, "optimizer state");
  const auto version = binio::get_uint<std::uint32_t>(in);
  require(version == kFormatVersion, ErrorKind::kSchema, "unsupported optimizer state version");
  AdamState s;
  s.step = binio::get_i64(in);
  s.learning_rate = binio::get_f64(in);
  s.beta1 = binio::get_f64(in);
  s.beta2 = binio::get_f64(in);
  s.epsilon = binio::get_f64(in);
  const auto n = static_cast<Eigen::Index>(binio::get_uint<std::uint64_t>(in));
  s.first_moment.resize(n);
  s.second_moment.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.first_moment(i) = binio::get_f64(in);
  for (Eigen::Index i = 0; i < n; ++i) s.second_moment(i) = binio::get_f64(in);
  return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size() &&
              params.size() == state.second_moment.size(),
          ErrorKind::kInvalidInput, "Adam parameter, gradient and moment shapes differ");
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void soft_update(Network& target, const Network& source, double tau) {
  require(target.same_architecture(source), ErrorKind::kInvalidInput, "soft update between different architectures");
  require(tau >= 0.0 && tau <= 1.0, ErrorKind::kInvalidInput, "soft update factor must lie in [0, 1]");
  if (tau == 1.0) {
    target.parameters() = source.parameters();
    target.running_stats() = source.running_stats();
    return;
  }
  target.parameters() = tau * source.parameters() + (1.0 - tau) * target.parameters();
  target.running_stats() = tau * source.running_stats() + (1.0 - tau) * target.running_stats();
}

}  // namespace corrsched::nn
