#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "corrsched/ddpg.hpp"
#include "corrsched/error.hpp"
#include "corrsched/nn.hpp"
#include "corrsched/rng.hpp"

using namespace corrsched;
using namespace corrsched::nn;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

std::vector<LayerSpec> small_layers(Activation out, bool batch_norm) {
  return {{6, 75, Activation::kRelu, 0.0, batch_norm},
          {75, 25, Activation::kRelu, 0.0, false},
          {25, 1, out, 0.0, false}};
}

double loss(Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
  return (net.forward(x).array() * r.array()).sum();
}

// Signs of every rectifier pre-activation in the last forward pass.
std::vector<bool> relu_signs(const Network& net) {
  std::vector<bool> out;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    if (net.layers()[l].activation != Activation::kRelu) continue;
    const auto& pre = net.pre_activation(l);
    for (Eigen::Index i = 0; i < pre.size(); ++i) out.push_back(pre(i) > 0.0);
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

struct GradientReport {
  int checked = 0;
  int skipped = 0;
  double worst = 0.0;
};

GradientReport check_param_gradients(Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) {
  net.forward(x);
  const auto g = net.backward(r);
  const double h = 1e-6;
  GradientReport rep;
  for (Eigen::Index p = 0; p < net.parameters().size(); ++p) {
    const double orig = net.parameters()(p);
    net.parameters()(p) = orig + h;
    const double up = loss(net, x, r);
    const auto up_signs = relu_signs(net);
    net.parameters()(p) = orig - h;
    const double down = loss(net, x, r);
    const auto down_signs = relu_signs(net);
    net.parameters()(p) = orig;
    if (up_signs != down_signs) {
      ++rep.skipped;
      continue;
    }
    ++rep.checked;
    rep.worst = std::max(rep.worst, rel_err((up - down) / (2 * h), g.params(p)));
  }
  return rep;
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  Rng rng(1);
  Network net({{3, 3, Activation::kIdentity, 0.0, false}}, rng);
  net.parameters().setZero();
  for (int i = 0; i < 3; ++i) net.parameters()(i * 3 + i) = 1.0;
  const Eigen::MatrixXd x = random_matrix(rng, 4, 3);
  CHECK(net.forward(x).isApprox(x));
  Eigen::MatrixXd wide(4, 5);
  CHECK_THROWS_AS(net.forward(wide), Error);
}

TEST_CASE("tanh output range") {
  Rng rng(2);
  Network net({{4, 1, Activation::kTanh, 0.0, false}}, rng);
  net.parameters().setZero();
  CHECK(net.forward(Eigen::MatrixXd::Ones(1, 4))(0, 0) == 0.0);
  net.parameters().setConstant(40.0);
  const auto y = net.forward(random_matrix(rng, 50, 4));
  CHECK(y.maxCoeff() <= 1.0);
  CHECK(y.minCoeff() >= -1.0);
}

TEST_CASE("dropout masks are reproducible under a seed") {
  Rng rng(3);
  Network net({{6, 75, Activation::kRelu, 0.5, false}, {75, 1, Activation::kIdentity, 0.0, false}}, rng);
  net.set_training(true);
  const Eigen::MatrixXd x = random_matrix(rng, 8, 6);
  net.seed_dropout(99);
  const auto a = net.forward(x);
  net.seed_dropout(99);
  const auto b = net.forward(x);
  CHECK(a == b);
  const auto c = net.forward(x);
  CHECK(a != c);
  net.set_training(false);
  CHECK(net.forward(x) == net.forward(x));
}

TEST_CASE("backward requires a forward pass") {
  Rng rng(4);
  Network net(small_layers(Activation::kIdentity, false), rng);
  CHECK_THROWS_AS(net.backward(Eigen::MatrixXd::Ones(1, 1)), Error);
}

TEST_CASE("zero upstream gives zero gradients") {
  Rng rng(5);
  Network net(small_layers(Activation::kTanh, true), rng);
  net.set_training(true);
  const Eigen::MatrixXd x = random_matrix(rng, 32, 6);
  net.forward(x);
  const auto g = net.backward(Eigen::MatrixXd::Zero(32, 1));
  CHECK(g.params.isZero());
  CHECK(g.input.isZero());
}

TEST_CASE("parameter gradients match finite differences") {
  for (const auto out : {Activation::kIdentity, Activation::kTanh}) {
    for (const bool bn : {false, true}) {
      Rng rng(6 + static_cast<int>(out) + (bn ? 10 : 0));
      Network net(small_layers(out, bn), rng, InitOptions{0.5});
      net.set_training(true);
      const Eigen::MatrixXd x = random_matrix(rng, 32, 6);
      const Eigen::MatrixXd r = random_matrix(rng, 32, 1);
      const auto rep = check_param_gradients(net, x, r);
      MESSAGE("checked " << rep.checked << " skipped " << rep.skipped << " worst " << rep.worst);
      CHECK(rep.worst < 1e-4);
      CHECK(rep.checked > 9 * (rep.checked + rep.skipped) / 10);
    }
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(31);
  Network net(small_layers(Activation::kIdentity, true), rng, InitOptions{0.5});
  net.set_training(false);
  net.set_training(true);
  Eigen::MatrixXd x = random_matrix(rng, 32, 6);
  const Eigen::MatrixXd r = random_matrix(rng, 32, 1);
  // Inference mode decouples samples, which is how the actor gradient is taken.
  net.set_training(false);
  net.forward(x);
  const auto g = net.backward(r);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = loss(net, x, r);
      const auto up_signs = relu_signs(net);
      x(i, j) = orig - h;
      const double down = loss(net, x, r);
      const auto down_signs = relu_signs(net);
      x(i, j) = orig;
      if (up_signs != down_signs) continue;
      worst = std::max(worst, rel_err((up - down) / (2 * h), g.input(i, j)));
    }
  }
  CHECK(worst < 1e-4);

  net.set_training(true);
  net.forward(x);
  const auto gb = net.backward(r);
  worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = loss(net, x, r);
      const auto up_signs = relu_signs(net);
      x(i, j) = orig - h;
      const double down = loss(net, x, r);
      const auto down_signs = relu_signs(net);
      x(i, j) = orig;
      if (up_signs != down_signs) continue;
      worst = std::max(worst, rel_err((up - down) / (2 * h), gb.input(i, j)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("output pre-activation gradient is added at the last layer") {
  Rng rng(41);
  Network net(small_layers(Activation::kTanh, true), rng, InitOptions{0.5});
  net.set_training(true);
  const Eigen::MatrixXd x = random_matrix(rng, 16, 6);
  const Eigen::MatrixXd r = random_matrix(rng, 16, 1);
  const Eigen::MatrixXd q = random_matrix(rng, 16, 1);
  const std::size_t last = net.layers().size() - 1;
  auto total = [&] {
    const double v = loss(net, x, r);
    return v + (net.pre_activation(last).array() * q.array()).sum();
  };
  net.forward(x);
  const auto g = net.backward(r, q);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index p = 0; p < net.parameters().size(); ++p) {
    const double orig = net.parameters()(p);
    net.parameters()(p) = orig + h;
    const double up = total();
    const auto up_signs = relu_signs(net);
    net.parameters()(p) = orig - h;
    const double down = total();
    const auto down_signs = relu_signs(net);
    net.parameters()(p) = orig;
    if (up_signs != down_signs) continue;
    worst = std::max(worst, rel_err((up - down) / (2 * h), g.params(p)));
  }
  CHECK(worst < 1e-4);

  net.forward(x);
  const auto plain = net.backward(r);
  const auto with_zero = net.backward(r, Eigen::MatrixXd::Zero(16, 1));
  CHECK(plain.params == with_zero.params);
  CHECK_THROWS_AS(net.backward(r, Eigen::MatrixXd::Zero(3, 1)), Error);
}

TEST_CASE("adam") {
  Eigen::VectorXd p(1);
  p << 3.0;
  auto st = AdamState::for_size(1, 0.1);
  Eigen::VectorXd g(1);
  g << 1.0;
  adam_step(p, g, st);
  CHECK(p(0) == doctest::Approx(2.9).epsilon(1e-6));
  CHECK(st.step == 1);

  Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  const Eigen::VectorXd before = q;
  auto st2 = AdamState::for_size(5, 0.01);
  adam_step(q, Eigen::VectorXd::Zero(5), st2);
  CHECK(q == before);
  CHECK(st2.step == 1);
  CHECK_THROWS_AS(adam_step(q, Eigen::VectorXd::Zero(3), st2), Error);
}

TEST_CASE("training is deterministic under equal seeds") {
  auto run = [] {
    Rng rng(77);
    Network net(small_layers(Activation::kIdentity, true), rng);
    net.set_training(true);
    net.seed_dropout(5);
    auto opt = AdamState::for_size(net.parameters().size(), 1e-3);
    const Eigen::MatrixXd x = random_matrix(rng, 16, 6);
    const Eigen::MatrixXd y = random_matrix(rng, 16, 1);
    for (int i = 0; i < 100; ++i) {
      const auto out = net.forward(x);
      adam_step(net.parameters(), net.backward(out - y).params, opt);
    }
    return net.parameters();
  };
  CHECK(run() == run());
}

TEST_CASE("actor architecture fits a regression batch") {
  Rng rng(8);
  DdpgConfig cfg;
  cfg.dropout = 0.0;
  Network net(ddpg_layers(6, cfg, Activation::kIdentity), rng, InitOptions{});
  net.set_training(true);
  const Eigen::MatrixXd x = random_matrix(rng, 128, 6);
  const Eigen::MatrixXd y = (x.col(0).array() * 0.5 + x.col(3).array().tanh()).matrix();
  auto opt = AdamState::for_size(net.parameters().size(), 1e-3);
  auto mse = [&] { return (net.forward(x) - y).squaredNorm() / 128.0; };
  const double initial = mse();
  for (int i = 0; i < 200; ++i) {
    const auto out = net.forward(x);
    adam_step(net.parameters(), net.backward((out - y) * (2.0 / 128.0)).params, opt);
  }
  const double final_loss = mse();
  MESSAGE("loss " << initial << " -> " << final_loss);
  CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("soft update") {
  Rng rng(9);
  const auto layers = small_layers(Activation::kTanh, true);
  Network source(layers, rng), target(layers, rng);
  const Eigen::VectorXd original = target.parameters();

  soft_update(target, source, 0.0);
  CHECK(target.parameters() == original);

  Network mid = target;
  soft_update(mid, source, 0.5);
  CHECK(mid.parameters().isApprox(0.5 * (source.parameters() + original)));

  double gap = (target.parameters() - source.parameters()).norm();
  for (int i = 0; i < 10; ++i) {
    soft_update(target, source, 0.2);
    const double next = (target.parameters() - source.parameters()).norm();
    CHECK(next == doctest::Approx(0.8 * gap).epsilon(1e-9));
    gap = next;
  }
  soft_update(target, source, 1.0);
  CHECK(target.parameters() == source.parameters());
  CHECK(target.running_stats() == source.running_stats());

  Network other({{6, 3, Activation::kRelu, 0.0, false}}, rng);
  CHECK_THROWS_AS(soft_update(other, source, 0.5), Error);
}

TEST_CASE("network save and load round trip") {
  Rng rng(10);
  Network net(small_layers(Activation::kTanh, true), rng);
  net.set_training(true);
  net.forward(random_matrix(rng, 8, 6));
  std::stringstream buf;
  net.save(buf);
  const auto back = Network::load(buf);
  CHECK(back.layers() == net.layers());
  CHECK(back.parameters() == net.parameters());
  CHECK(back.running_stats() == net.running_stats());
}
