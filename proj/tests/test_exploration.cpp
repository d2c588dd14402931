#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastack/exploration.hpp"

using namespace metastack;

namespace {

Task embedded(std::int64_t id, std::vector<double> e) {
  Task t;
  t.id = id;
  t.embedding = std::move(e);
  return t;
}

TaskHistory small_history() {
  TaskHistory h;
  h.record(embedded(0, {0.5, 0.0, 0.0}), 0.4, 0);
  h.record(embedded(1, {-0.3, 0.2, 0.1}), 0.9, 1);
  h.record(embedded(2, {0.1, -0.6, 0.4}), 0.2, 2);
  return h;
}

}  // namespace

TEST_CASE("delta_loss basics") {
  CHECK(delta_loss(0.7, 0.7) == 0.0);
  CHECK(delta_loss(1.2, 0.2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(delta_loss(0.2, 1.2) == -delta_loss(1.2, 0.2));
}

TEST_CASE("score_hard: hand-evaluated mixtures and floors") {
  ExplorationParams ep;
  ep.delta = 0.1;
  ep.eps1 = ep.eps2 = 0.5;
  ep.alpha1 = ep.alpha2 = -0.1;

  ep.lambda_mix = 1.0;
  CHECK(score_hard(ep, 1.2, 0.5).total == doctest::Approx(1.5).epsilon(1e-15));

  ep.lambda_mix = 0.0;
  CHECK(score_hard(ep, 0.0, 2.0).total == doctest::Approx(1.5).epsilon(1e-15));

  ep.lambda_mix = 0.5;
  auto sb = score_hard(ep, 0.0, 0.0);
  CHECK(sb.term1 == -0.1);
  CHECK(sb.term2 == -0.1);
  CHECK(sb.total == doctest::Approx(-0.1).epsilon(1e-15));

  CHECK_THROWS_AS(score_hard(ep, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("score_hard: monotone in delta_l at lambda 1") {
  ExplorationParams ep;
  ep.lambda_mix = 1.0;
  double prev = score_hard(ep, -3.0, 0.7).total;
  for (double dl = -2.9; dl < 3.0; dl += 0.1) {
    double cur = score_hard(ep, dl, 0.7).total;
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("score_smooth: softplus substitution values and tail") {
  ExplorationParams ep;
  ep.lambda_mix = 1.0;
  ep.delta = 0.1;
  ep.eps1 = 0.5;
  ep.alpha1 = -0.6;
  // pick dl so the first ratio hits eps1 + alpha1 exactly: t - e - a = 0
  double dl = (ep.eps1 + ep.alpha1) * (0.0 + ep.delta);
  CHECK(score_smooth(ep, dl, 0.0).term1 ==
        doctest::Approx(ep.alpha1 + std::log(2.0)).epsilon(1e-12));

  // far above threshold the smooth term collapses onto the hard one
  double dl_far = (30.0 + ep.eps1 + ep.alpha1) * ep.delta;
  CHECK(std::abs(score_smooth(ep, dl_far, 0.0).term1 -
                 score_hard(ep, dl_far, 0.0).term1) < 1e-12);
}

TEST_CASE("smooth minus hard lies in (0, ln 2] over 1000 draws") {
  RngStream rng(21);
  for (int i = 0; i < 1000; ++i) {
    ExplorationParams ep;
    ep.lambda_mix = rng.uniform(0.0, 1.0);
    ep.delta = rng.uniform(0.05, 1.0);
    ep.eps1 = rng.uniform(0.0, 1.0);
    ep.eps2 = rng.uniform(0.0, 1.0);
    ep.alpha1 = rng.uniform(-1.5, -0.01);
    ep.alpha2 = rng.uniform(-1.5, -0.01);
    double dl = rng.uniform(-5.0, 5.0);
    double d = rng.uniform(0.0, 5.0);
    double gap = score_smooth(ep, dl, d).total - score_hard(ep, dl, d).total;
    CHECK(gap > 0.0);
    CHECK(gap <= std::log(2.0) + 1e-12);
  }
}

TEST_CASE("score_smooth_on gradient matches finite differences") {
  ExplorationParams ep;
  RngStream rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    double dl = rng.uniform(-2, 2), d = rng.uniform(0.1, 2.0);
    Tape t;
    VarId vdl = t.leaf(Tensor::scalar(dl));
    VarId vd = t.leaf(Tensor::scalar(d));
    auto grads = t.gradients(score_smooth_on(t, ep, vdl, vd), {vdl, vd});
    auto eval = [&](std::span<const double> p) {
      return score_smooth(ep, p[0], p[1]).total;
    };
    auto fd = fd_gradient(eval, {dl, d}, 1e-6);
    std::vector<double> got{grads[0].item(), grads[1].item()};
    CHECK(max_rel_error(got, fd) < 1e-4);
  }
}

TEST_CASE("kernel_refs: weights normalised, limits behave") {
  auto h = small_history();
  Task q = embedded(10, {0.4, 0.0, 0.1});

  auto kr = kernel_refs(h, q, 1.0);
  double wsum = 0.0;
  for (double w : kr.weights) {
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    wsum += w;
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));

  // single entry: the means are that entry's loss and distance
  TaskHistory one;
  one.record(embedded(0, {1, 0, 0}), 0.7, 0);
  auto kr1 = kernel_refs(one, q, 2.0);
  CHECK(kr1.loss_mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(kr1.dist_mean ==
        doctest::Approx(task_distance(one.entries()[0].task, q)).epsilon(1e-15));

  // vanishing bandwidth: unweighted means
  auto kr0 = kernel_refs(h, q, 1e-12);
  double lm = (0.4 + 0.9 + 0.2) / 3.0;
  CHECK(kr0.loss_mean == doctest::Approx(lm).epsilon(1e-9));

  // huge bandwidth concentrates on the nearest entry
  TaskHistory two;
  two.record(embedded(0, {0.4, 0.0, 0.1}), 0.5, 0);  // distance 0
  two.record(embedded(1, {9, 9, 9}), 3.0, 1);
  auto krh = kernel_refs(two, q, 50.0);
  CHECK(krh.loss_mean == doctest::Approx(0.5).epsilon(1e-9));

  TaskHistory empty;
  CHECK_THROWS_AS(kernel_refs(empty, q, 1.0), std::invalid_argument);
}

TEST_CASE("score_kernel: single-entry reduction and gradient check") {
  ExplorationParams ep;
  TaskHistory one;
  one.record(embedded(0, {0.5, -0.2, 0.3}), 0.6, 0);
  Task q = embedded(5, {0.1, 0.4, -0.3});
  double L = 1.1;

  double d = task_distance(one.entries()[0].task, q);
  double expect =
      ep.lambda_mix *
          (stable_softplus((L - 0.6) / (d + ep.delta) - ep.eps1 - ep.alpha1) + ep.alpha1) +
      (1 - ep.lambda_mix) *
          (stable_softplus(d / (1 + std::abs(L - 0.6)) - ep.eps2 - ep.alpha2) + ep.alpha2);
  CHECK(score_kernel(ep, one, q, L) == doctest::Approx(expect).epsilon(1e-12));

  auto h = small_history();
  Tape t;
  VarId emb = t.leaf(Tensor::vector({0.1, 0.4, -0.3}));
  VarId lv = t.leaf(Tensor::scalar(L));
  VarId s = score_kernel_on(t, ep, h, emb, lv);
  CHECK(t.value(s).item() == doctest::Approx(score_kernel(ep, h, q, L)).epsilon(1e-12));
  auto grads = t.gradients(s, {emb, lv});
  std::vector<double> flat(grads[0].data);
  flat.push_back(grads[1].item());
  auto eval = [&](std::span<const double> p) {
    Task qq = embedded(5, {p[0], p[1], p[2]});
    return score_kernel(ep, h, qq, p[3]);
  };
  auto fd = fd_gradient(eval, {0.1, 0.4, -0.3, L}, 1e-6);
  CHECK(max_rel_error(flat, fd) < 1e-4);
}

TEST_CASE("entropy and gradient-norm signals") {
  Mlp m = Mlp::make({3, 2}, {Activation::softmax});
  Tensor x = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.1, 0.0, 0.4});
  CHECK(entropy_signal(m, x) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  m.biases[0] = Tensor::vector({100, 0});  // one-hot predictive
  CHECK(entropy_signal(m, x) < 1e-30);

  Mlp plain = Mlp::make({3, 2}, {Activation::identity});
  CHECK_THROWS_AS(entropy_signal(plain, x), std::invalid_argument);

  // gradient norm vanishes at a perfect fit
  Mlp fit = Mlp::make({1, 1}, {Activation::identity});
  fit.weights[0].at(0, 0) = 1.0;
  Dataset d;
  d.inputs = Tensor::matrix(3, 1, {1, 2, 3});
  d.targets = d.inputs;
  CHECK(grad_norm_signal(fit, d) == doctest::Approx(0.0).epsilon(1e-24));
  d.targets = Tensor::matrix(3, 1, {0, 0, 0});
  CHECK(grad_norm_signal(fit, d) > 0.1);
}

TEST_CASE("generator_loss: reductions, gamma term, sign, validation") {
  ExplorationParams ep;
  std::vector<double> scores{1.0, 2.0, 3.0};
  CHECK(generator_loss(ep, scores, {}, {}) == doctest::Approx(-2.0).epsilon(1e-15));

  ep.gamma = 0.7;
  std::vector<double> dout{0.5, 0.5};
  CHECK(generator_loss(ep, scores, {}, dout) ==
        doctest::Approx(-2.0 + 0.7 * std::log(2.0)).epsilon(1e-12));

  ep.beta = 2.0;
  std::vector<double> pen{0.25, 0.75};
  CHECK(generator_loss(ep, scores, pen, dout) ==
        doctest::Approx(-2.0 + 2.0 * 0.5 + 0.7 * std::log(2.0)).epsilon(1e-12));

  // higher scores, lower loss
  std::vector<double> hi{2.0, 3.0, 4.0};
  CHECK(generator_loss(ep, hi, pen, dout) < generator_loss(ep, scores, pen, dout));

  CHECK_THROWS_AS(generator_loss(ep, scores, pen, std::vector<double>{1.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(generator_loss(ep, std::vector<double>{}, {}, {}), std::invalid_argument);

  // gamma = 0: discriminator outputs are irrelevant
  ep = ExplorationParams{};
  CHECK(generator_loss(ep, scores, {}, std::vector<double>{0.01}) ==
        generator_loss(ep, scores, {}, std::vector<double>{0.99}));
}

TEST_CASE("discriminator: descent on fakes, symmetry limit") {
  RngStream rng(23);
  Discriminator disc = make_discriminator(3, rng, 16);
  std::vector<Task> real, fake;
  for (int i = 0; i < 16; ++i) {
    real.push_back(embedded(i, {rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), 0.0}));
    fake.push_back(embedded(100 + i, {rng.uniform(-1.0, -0.5), rng.uniform(-1.0, -0.5), 0.0}));
  }
  auto mean_fake = [&] {
    double s = 0.0;
    for (const auto& t : fake) s += discriminator_prob(disc, t);
    return s / double(fake.size());
  };
  double before = mean_fake();
  discriminator_update(disc, real, fake, 0.05);
  CHECK(mean_fake() < before);

  // identical distributions: training drives outputs toward 0.5
  Discriminator sym = make_discriminator(3, rng, 16);
  for (int step = 0; step < 300; ++step) discriminator_update(sym, real, real, 0.1);
  double s = 0.0;
  for (const auto& t : real) s += discriminator_prob(sym, t);
  CHECK(s / double(real.size()) == doctest::Approx(0.5).epsilon(0.05));

  CHECK_THROWS_AS(discriminator_update(disc, {}, fake, 0.1), std::invalid_argument);
}

TEST_CASE("explore_round: decoding, clamping, determinism") {
  PolynomialPrior prior;
  RngStream init(24);
  Mlp learner = Mlp::make_uniform({1, 8, 1}, Activation::tanh);
  learner.init_random(init);
  auto h = small_history();

  // zero-weight generator decodes every latent to the same coefficients
  Generator zgen;
  zgen.net = Mlp::make_uniform({2, 8, 8, 3}, Activation::tanh);
  RngStream r1(25);
  ExplorationParams ep;
  auto round = explore_round(zgen, ep, learner, h, prior, r1, 6, 1000);
  REQUIRE(round.tasks.size() == 6);
  for (const auto& t : round.tasks) {
    CHECK(t.embedding == round.tasks[0].embedding);
    CHECK(t.id >= 1000);
  }

  // clamping keeps coefficients inside the prior box
  RngStream ginit(26);
  Generator gen = make_generator(2, 3, ginit, 8);
  for (auto& w : gen.net.weights)
    for (double& v : w.data) v *= 20.0;  // force saturating outputs
  RngStream r2(27);
  auto wide = explore_round(gen, ep, learner, h, prior, r2, 8, 0);
  for (const auto& t : wide.tasks) {
    CHECK(t.poly->a >= prior.a_range[0]);
    CHECK(t.poly->a <= prior.a_range[1]);
    CHECK(t.poly->b >= prior.b_range[0]);
    CHECK(t.poly->b <= prior.b_range[1]);
    CHECK(t.poly->c >= prior.c_range[0]);
    CHECK(t.poly->c <= prior.c_range[1]);
  }
  CHECK(wide.clamp_hit_rate > 0.0);

  // fixed seed, identical batch
  auto run = [&] {
    RngStream r(28);
    Generator g2 = gen;
    auto rr = explore_round(g2, ep, learner, h, prior, r, 4, 0);
    std::vector<double> out{rr.mean_score, rr.gen_loss};
    for (const auto& t : rr.tasks)
      out.insert(out.end(), t.embedding.begin(), t.embedding.end());
    return out;
  };
  CHECK(run() == run());

  TaskHistory empty;
  RngStream r3(29);
  CHECK_THROWS_AS(explore_round(gen, ep, learner, empty, prior, r3, 4, 0),
                  std::invalid_argument);
}

TEST_CASE("explore_round: generator ascends the mean score when trained") {
  PolynomialPrior prior;
  RngStream init(30);
  Mlp learner = Mlp::make_uniform({1, 8, 1}, Activation::tanh);
  learner.init_random(init);
  auto h = small_history();
  Generator gen = make_generator(3, 3, init, 16);
  auto opt = OptimizerState::adam(0.01);
  RngStream r(31);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 100; ++step) {
    auto round = explore_round(gen, ExplorationParams{}, learner, h, prior, r, 8,
                               step * 8, &opt);
    if (step == 0) first = round.mean_score;
    last = round.mean_score;
  }
  CHECK(last > first);
}

TEST_CASE("params validation") {
  ExplorationParams ep;
  ep.lambda_mix = 1.5;
  CHECK_THROWS_AS(ep.validate(), std::invalid_argument);
  ep = ExplorationParams{};
  ep.delta = 0.0;
  CHECK_THROWS_AS(ep.validate(), std::invalid_argument);
  ep = ExplorationParams{};
  ep.alpha1 = 0.1;
  CHECK_THROWS_AS(ep.validate(), std::invalid_argument);
  ep = ExplorationParams{};
  ep.gamma_ref = 0.0;
  CHECK_THROWS_AS(ep.validate(), std::invalid_argument);
}
