#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastack/games.hpp"
#include "metastack/rng.hpp"

using namespace metastack;

namespace {

NormalFormGame prisoners_dilemma() {
  NormalFormGame g;
  g.action_counts = {2, 2};
  g.payoffs[0] = Tensor::matrix(2, 2, {3, 0, 5, 1});
  g.payoffs[1] = Tensor::matrix(2, 2, {3, 5, 0, 1});
  return g;
}

NormalFormGame matching_pennies() {
  NormalFormGame g;
  g.action_counts = {2, 2};
  g.payoffs[0] = Tensor::matrix(2, 2, {1, -1, -1, 1});
  g.payoffs[1] = Tensor::matrix(2, 2, {-1, 1, 1, -1});
  return g;
}

NormalFormGame coordination_shared_identity() {
  NormalFormGame g;
  g.action_counts = {2, 2};
  g.payoffs[0] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  g.payoffs[1] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  return g;
}

}  // namespace

TEST_CASE("prisoner's dilemma: unique pure Nash at (D,D)") {
  auto g = prisoners_dilemma();
  auto nash = pure_nash(g);
  REQUIRE(nash.size() == 1);
  CHECK(nash[0].pure_actions() == std::array<std::size_t, 2>{1, 1});
  CHECK(is_nash(g, nash[0]));
  CHECK_FALSE(is_nash(g, StrategyProfile::pure(g, 0, 0)));
}

TEST_CASE("prisoner's dilemma: exact-potential four-cycle sums to zero") {
  auto g = prisoners_dilemma();
  CHECK(is_potential_game(g));
  CHECK_FALSE(is_team_game(g));
  CHECK(classify(g) == GameClass::potential);
}

TEST_CASE("prisoner's dilemma: BRD converges to (D,D) from every start") {
  auto g = prisoners_dilemma();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      auto res = best_response_dynamics(g, {i, j});
      CHECK(res.converged);
      CHECK(res.trajectory.back() == std::array<std::size_t, 2>{1, 1});
    }
}

TEST_CASE("matching pennies: no pure Nash, mixed (0.5,0.5)x(0.5,0.5)") {
  auto g = matching_pennies();
  CHECK(pure_nash(g).empty());
  auto res = mixed_nash_2x2(g);
  CHECK_FALSE(res.degenerate);
  REQUIRE(res.profiles.size() == 1);
  for (std::size_t p = 0; p < 2; ++p)
    for (double v : res.profiles[p / 2].probs[p % 2])
      CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(is_nash(g, res.profiles[0], 1e-9));
}

TEST_CASE("matching pennies: BRD cycles and reports non-convergence") {
  auto g = matching_pennies();
  auto res = best_response_dynamics(g, {0, 0}, 100);
  CHECK_FALSE(res.converged);
  CHECK(res.trajectory.size() > 100);
  CHECK_FALSE(is_potential_game(g));
  CHECK(classify(g) == GameClass::general);
}

TEST_CASE("coordination game: two pure equilibria plus interior mixed point") {
  auto g = coordination_shared_identity();
  auto res = mixed_nash_2x2(g);
  REQUIRE(res.profiles.size() == 3);
  CHECK(res.profiles[0].pure_actions() == std::array<std::size_t, 2>{0, 0});
  CHECK(res.profiles[1].pure_actions() == std::array<std::size_t, 2>{1, 1});
  CHECK_FALSE(res.profiles[2].is_pure());
  for (std::size_t p = 0; p < 2; ++p)
    CHECK(res.profiles[2].probs[p][0] == doctest::Approx(0.5).epsilon(1e-12));
  for (const auto& sp : res.profiles) CHECK(is_nash(g, sp, 1e-9));
  CHECK(classify(g) == GameClass::team);
}

TEST_CASE("degenerate indifference system is flagged, not dropped") {
  NormalFormGame g;
  g.action_counts = {2, 2};
  g.payoffs[0] = Tensor::matrix(2, 2, {0, 0, 0, 0});  // row player always indifferent
  g.payoffs[1] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto res = mixed_nash_2x2(g);
  CHECK(res.degenerate);
  CHECK_FALSE(res.profiles.empty());  // pure equilibria still reported
}

TEST_CASE("team games: argmax joint action is a pure Nash, classifiers nest") {
  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = make_team_game(rng, {2 + rng.index(3), 2 + rng.index(3)});
    CHECK(is_team_game(g));
    CHECK(is_coordination_game(g));
    CHECK(is_potential_game(g));
    CHECK(classify(g) == GameClass::team);

    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < g.action_counts[0]; ++i)
      for (std::size_t j = 0; j < g.action_counts[1]; ++j)
        if (g.payoff(0, i, j) > g.payoff(0, bi, bj)) { bi = i; bj = j; }
    CHECK(is_nash(g, StrategyProfile::pure(g, bi, bj)));
  }
}

TEST_CASE("coordination generator: coordination and potential but not team") {
  RngStream rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = make_coordination_game(rng, 2 + rng.index(3));
    CHECK_FALSE(is_team_game(g));
    CHECK(is_coordination_game(g));
    CHECK(is_potential_game(g));
    CHECK(classify(g) == GameClass::coordination);
    // diagonal joint actions are the pure equilibria
    for (std::size_t a = 0; a < g.action_counts[0]; ++a)
      CHECK(is_nash(g, StrategyProfile::pure(g, a, a)));
  }
}

TEST_CASE("interpolation: potential for every lambda, team only at zero") {
  RngStream rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t a1 = 2 + rng.index(3), a2 = 2 + rng.index(3);
    Tensor phi = Tensor::zeros({a1, a2});
    for (double& v : phi.data) v = rng.uniform(-1, 1);
    std::vector<Tensor> resid{Tensor::zeros({a2}), Tensor::zeros({a1})};
    for (auto& r : resid)
      for (double& v : r.data) v = rng.uniform(-1, 1);

    auto at0 = interpolate_game(phi, resid, 0.0);
    CHECK(is_team_game(at0));
    for (double lg : {0.3, 1.0, 2.5}) {
      auto g = interpolate_game(phi, resid, lg);
      CHECK(is_potential_game(g));
      // the shared part is recovered by path integration up to a constant
      Tensor rec = potential_function(g);
      double shift = rec.at(0, 0) - phi.at(0, 0);
      for (std::size_t i = 0; i < a1; ++i)
        for (std::size_t j = 0; j < a2; ++j)
          CHECK(rec.at(i, j) - phi.at(i, j) == doctest::Approx(shift).epsilon(1e-9));
    }
  }
  std::vector<Tensor> bad{Tensor::zeros({3}), Tensor::zeros({2})};
  CHECK_THROWS_AS(interpolate_game(Tensor::matrix(2, 2, {0, 0, 0, 0}), bad, 1.0),
                  std::invalid_argument);
}

TEST_CASE("general games: mostly fail the potential test") {
  RngStream rng(14);
  int fails = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto g = make_general_game(rng, {2 + rng.index(3), 2 + rng.index(3)});
    if (!is_potential_game(g)) ++fails;
  }
  CHECK(fails >= 90);
}

TEST_CASE("BRD on potential games: converges with monotone potential") {
  RngStream rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor phi = Tensor::zeros({2 + rng.index(3), 2 + rng.index(3)});
    for (double& v : phi.data) v = rng.uniform(-1, 1);
    std::vector<Tensor> resid{Tensor::zeros({phi.cols()}), Tensor::zeros({phi.rows()})};
    for (auto& r : resid)
      for (double& v : r.data) v = rng.uniform(-1, 1);
    auto g = interpolate_game(phi, resid, rng.uniform(0.0, 2.0));

    auto res = best_response_dynamics(g, {rng.index(g.action_counts[0]),
                                          rng.index(g.action_counts[1])});
    CHECK(res.converged);
    CHECK(is_nash(g, StrategyProfile::pure(g, res.trajectory.back()[0],
                                           res.trajectory.back()[1])));
    Tensor pot = potential_function(g);
    for (std::size_t s = 1; s < res.trajectory.size(); ++s)
      CHECK(pot.at(res.trajectory[s][0], res.trajectory[s][1]) >
            pot.at(res.trajectory[s - 1][0], res.trajectory[s - 1][1]) - 1e-12);
  }
}

TEST_CASE("json round trip preserves payoffs exactly") {
  auto g = prisoners_dilemma();
  auto back = game_from_json(game_to_json(g));
  CHECK(back.action_counts == g.action_counts);
  CHECK(back.payoffs[0].data == g.payoffs[0].data);
  CHECK(back.payoffs[1].data == g.payoffs[1].data);
  CHECK_THROWS(game_from_json("{\"actions\":[2,2],\"payoffs\":[[1,2,3,4]]}"));
  CHECK_THROWS(game_from_json("{\"actions\":[0,2],\"payoffs\":[[],[]]}"));
  CHECK_THROWS(game_from_json("not json"));
}

TEST_CASE("flatten layout: player 0 row-major, then player 1") {
  auto g = prisoners_dilemma();
  CHECK(g.flatten() == std::vector<double>{3, 0, 5, 1, 3, 5, 0, 1});
}
