#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastack/mlp.hpp"
#include "metastack/rng.hpp"
#include "metastack/tensor.hpp"

using namespace metastack;

TEST_CASE("forward: identity single layer with W=I, b=0") {
  Mlp m = Mlp::make({2, 2}, {Activation::identity});
  m.weights[0] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor y = m.forward(Tensor::vector({1, 2}));
  CHECK(y.data[0] == doctest::Approx(1.0));
  CHECK(y.data[1] == doctest::Approx(2.0));
}

TEST_CASE("forward: 1-layer tanh, W=[[2]], b=[1], x=[0]") {
  Mlp m = Mlp::make({1, 1}, {Activation::tanh});
  m.weights[0] = Tensor::matrix(1, 1, {2.0});
  m.biases[0] = Tensor::vector({1.0});
  Tensor y = m.forward(Tensor::vector({0.0}));
  CHECK(y.data[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK(y.data[0] == doctest::Approx(0.76159).epsilon(1e-4));
}

TEST_CASE("forward: softmax head on zero logits is uniform") {
  Mlp m = Mlp::make({3, 3}, {Activation::softmax});
  Tensor y = m.forward(Tensor::vector({0, 0, 0}));
  for (double v : y.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("forward: shape mismatch raises") {
  Mlp m = Mlp::make({2, 1}, {Activation::identity});
  CHECK_THROWS_AS((void)m.forward(Tensor::vector({1, 2, 3})), std::invalid_argument);
}

TEST_CASE("backward: x^2 at x=3 gives 6") {
  Tape t;
  VarId x = t.leaf(Tensor::scalar(3.0));
  VarId loss = t.square(x);
  auto g = t.gradients(loss, {x});
  CHECK(g[0].item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward: softplus at 0 gives 0.5") {
  Tape t;
  VarId x = t.leaf(Tensor::scalar(0.0));
  VarId loss = t.softplus_(x);
  auto g = t.gradients(loss, {x});
  CHECK(g[0].item() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("backward: non-scalar loss rejected") {
  Tape t;
  VarId x = t.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t.grad_graph(x), std::invalid_argument);
}

TEST_CASE("backward: untouched leaves get zero gradient") {
  Tape t;
  VarId x = t.leaf(Tensor::scalar(3.0));
  VarId unused = t.leaf(Tensor::vector({1, 2, 3}));
  VarId loss = t.square(x);
  auto g = t.gradients(loss, {x, unused});
  CHECK(g[1].shape == std::vector<std::size_t>{3});
  for (double v : g[1].data) CHECK(v == 0.0);
}

TEST_CASE("backward: random 2-layer MLP MSE matches finite differences") {
  RngStream rng(1234);
  Mlp m = Mlp::make_uniform({2, 8, 1}, Activation::tanh);
  m.init_random(rng);
  Tensor x = Tensor::matrix(4, 2, {0.1, -0.2, 0.5, 0.3, -0.7, 0.9, 0.0, 0.4});
  Tensor y = Tensor::matrix(4, 1, {0.3, -0.1, 0.8, 0.2});

  auto eval = [&](std::span<const double> p) {
    Mlp mm = m;
    mm.set_flat_params(p);
    Tape t;
    auto vars = mm.lift(t, false);
    VarId out = mm.forward_on(t, vars, t.constant(x));
    return t.value(t.mse(out, t.constant(y))).item();
  };

  Tape t;
  auto vars = m.lift(t);
  VarId out = m.forward_on(t, vars, t.constant(x));
  VarId loss = t.mse(out, t.constant(y));
  auto grads = t.gradients(loss, vars.all());
  std::vector<double> flat;
  for (const auto& g : grads) flat.insert(flat.end(), g.data.begin(), g.data.end());

  auto fd = fd_gradient(eval, m.flat_params(), 1e-5);
  CHECK(max_rel_error(flat, fd) < 1e-5);
}

TEST_CASE("second-order: d/dx of grad(x^3) equals 6x") {
  Tape t;
  VarId x = t.leaf(Tensor::scalar(2.0));
  VarId y = t.mul(t.square(x), x);
  auto g1 = t.grad_graph(y);
  VarId dy = g1.at(x);  // 3x^2 = 12
  CHECK(t.value(dy).item() == doctest::Approx(12.0).epsilon(1e-12));
  auto g2 = t.grad_graph(dy);
  CHECK(t.value(g2.at(x)).item() == doctest::Approx(12.0).epsilon(1e-12));  // 6x
}

TEST_CASE("softplus and sigmoid scalar values") {
  CHECK(stable_softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(stable_softplus(30.0) - 30.0 < 1e-12);
  CHECK(stable_softplus(30.0) - 30.0 > 0.0);
  CHECK(stable_sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stable_softplus(-745.0) >= 0.0);
  CHECK(std::isfinite(stable_softplus(745.0)));
}

TEST_CASE("softplus bound: 0 < softplus(x) - max(0,x) <= ln 2") {
  RngStream rng(7);
  // strict positivity holds wherever the gap exp(-|x|) is representable
  // next to |x| in doubles; beyond that it rounds to exactly zero
  for (int i = 0; i < 2000; ++i) {
    double x = rng.uniform(-30.0, 30.0);
    double gap = stable_softplus(x) - std::max(0.0, x);
    CHECK(gap > 0.0);
    CHECK(gap <= std::log(2.0) + 1e-15);
  }
  for (int i = 0; i < 200; ++i) {
    double x = rng.uniform(-500.0, 500.0);
    double gap = stable_softplus(x) - std::max(0.0, x);
    CHECK(gap >= 0.0);
    CHECK(gap <= std::log(2.0) + 1e-15);
  }
}

TEST_CASE("fd_gradient: quadratic, sine, constant") {
  auto sq = [](std::span<const double> p) { return p[0] * p[0]; };
  auto g = fd_gradient(sq, {3.0}, 1e-4);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

  auto sn = [](std::span<const double> p) { return std::sin(p[0]); };
  g = fd_gradient(sn, {0.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-8));

  auto cn = [](std::span<const double>) { return 4.2; };
  g = fd_gradient(cn, {1.0, 2.0, 3.0}, 1e-4);
  for (double v : g) CHECK(v == 0.0);

  CHECK_THROWS_AS(fd_gradient(sq, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("optimizer step: sgd definition and zero gradient") {
  auto opt = OptimizerState::sgd(0.1);
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  std::vector<Tensor> g{Tensor::scalar(2.0)};
  opt.step(p, g);
  CHECK(p[0].item() == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<Tensor> z{Tensor::scalar(0.0)};
  opt.step(p, z);
  CHECK(p[0].item() == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<Tensor> bad{Tensor::vector({1, 2})};
  CHECK_THROWS_AS(opt.step(p, bad), std::invalid_argument);
}

TEST_CASE("optimizer step: adam first step moves by about lr") {
  auto opt = OptimizerState::adam(0.001);
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  std::vector<Tensor> g{Tensor::scalar(1.0)};
  opt.step(p, g);
  // bias-corrected first step: p -= lr * g / (|g| + eps)
  CHECK(p[0].item() == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
}

TEST_CASE("forward/backward deterministic: bit-identical reruns") {
  auto run = [] {
    RngStream rng(99);
    Mlp m = Mlp::make_uniform({3, 16, 2}, Activation::tanh);
    m.init_random(rng);
    Tensor x = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
    Tape t;
    auto vars = m.lift(t);
    VarId loss = t.mean(t.square(m.forward_on(t, vars, t.constant(x))));
    auto grads = t.gradients(loss, vars.all());
    std::vector<double> out{t.value(loss).item()};
    for (const auto& g : grads) out.insert(out.end(), g.data.begin(), g.data.end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient fidelity over random tanh MLP shapes") {
  RngStream shapes(42);
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t in = 1 + shapes.index(3);
    std::size_t hid = 2 + shapes.index(10);
    std::size_t out_w = 1 + shapes.index(2);
    Mlp m = Mlp::make_uniform({in, hid, out_w}, Activation::tanh);
    m.init_random(shapes);
    std::size_t n = 3;
    Tensor x = Tensor::zeros({n, in});
    Tensor y = Tensor::zeros({n, out_w});
    for (double& v : x.data) v = shapes.uniform(-1, 1);
    for (double& v : y.data) v = shapes.uniform(-1, 1);

    Tape t;
    auto vars = m.lift(t);
    VarId loss = t.mse(m.forward_on(t, vars, t.constant(x)), t.constant(y));
    auto grads = t.gradients(loss, vars.all());
    std::vector<double> flat;
    for (const auto& g : grads) flat.insert(flat.end(), g.data.begin(), g.data.end());

    auto eval = [&](std::span<const double> p) {
      Mlp mm = m;
      mm.set_flat_params(p);
      Tape tt;
      auto vv = mm.lift(tt, false);
      return tt.value(tt.mse(mm.forward_on(tt, vv, tt.constant(x)), tt.constant(y))).item();
    };
    CHECK(max_rel_error(flat, fd_gradient(eval, m.flat_params(), 1e-5)) < 1e-5);
  }
}

TEST_CASE("tape ops: slice/pad round trip and clamp straight-through") {
  Tape t;
  VarId x = t.leaf(Tensor::vector({1, 2, 3, 4}));
  VarId s = t.slice(x, 1, 2);
  CHECK(t.value(s).data == std::vector<double>{2, 3});
  VarId loss = t.sum(t.square(s));
  auto g = t.gradients(loss, {x});
  CHECK(g[0].data == std::vector<double>{0, 4, 6, 0});

  Tape t2;
  VarId y = t2.leaf(Tensor::vector({-2, 0.5, 7}));
  VarId c = t2.clamp_st(y, -1, 1);
  CHECK(t2.value(c).data == std::vector<double>{-1, 0.5, 1});
  auto gc = t2.gradients(t2.sum(c), {y});
  CHECK(gc[0].data == std::vector<double>{1, 1, 1});
}

TEST_CASE("rng: labeled substreams independent and reproducible") {
  RootRng root(123);
  auto a1 = root.stream("tasks");
  auto a2 = root.stream("tasks");
  auto b = root.stream("latents");
  CHECK(a1.uniform() == a2.uniform());
  RootRng root2(123);
  auto c = root2.stream("latents");
  CHECK(b.uniform() == c.uniform());
  auto s = root.stream("x");
  s.uniform();
  auto restored = RngStream::deserialize(s.serialize());
  CHECK(restored.uniform() == s.uniform());
}
