#include "metastack/games.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

namespace {

void require_2x2(const NormalFormGame& g, const char* op) {
  if (g.action_counts[0] != 2 || g.action_counts[1] != 2)
    throw std::invalid_argument(std::string(op) + ": requires a 2x2 game");
}

// Exact-potential four-cycle sum around the sub-square {i,k} x {j,l}:
// zero for every such cycle iff the game admits an exact potential.
double four_cycle(const NormalFormGame& g, std::size_t i, std::size_t k,
                  std::size_t j, std::size_t l) {
  return (g.payoff(0, k, j) - g.payoff(0, i, j)) +
         (g.payoff(1, k, l) - g.payoff(1, k, j)) +
         (g.payoff(0, i, l) - g.payoff(0, k, l)) +
         (g.payoff(1, i, j) - g.payoff(1, i, l));
}

}  // namespace

std::vector<double> NormalFormGame::flatten() const {
  std::vector<double> out;
  for (const Tensor& p : payoffs) out.insert(out.end(), p.data.begin(), p.data.end());
  return out;
}

StrategyProfile StrategyProfile::pure(const NormalFormGame& g, std::size_t a1, std::size_t a2) {
  StrategyProfile sp;
  sp.probs[0].assign(g.action_counts[0], 0.0);
  sp.probs[1].assign(g.action_counts[1], 0.0);
  sp.probs[0][a1] = 1.0;
  sp.probs[1][a2] = 1.0;
  return sp;
}

bool StrategyProfile::is_pure() const {
  for (const auto& p : probs)
    for (double v : p)
      if (v != 0.0 && v != 1.0) return false;
  return true;
}

std::array<std::size_t, 2> StrategyProfile::pure_actions() const {
  std::array<std::size_t, 2> a{0, 0};
  for (std::size_t i = 0; i < 2; ++i) {
    auto it = std::find(probs[i].begin(), probs[i].end(), 1.0);
    if (it == probs[i].end()) throw std::logic_error("pure_actions on mixed profile");
    a[i] = std::size_t(it - probs[i].begin());
  }
  return a;
}

NormalFormGame make_team_game(RngStream& rng, std::array<std::size_t, 2> sizes) {
  if (sizes[0] == 0 || sizes[1] == 0) throw std::invalid_argument("make_team_game: empty action set");
  Tensor shared = Tensor::zeros({sizes[0], sizes[1]});
  for (double& v : shared.data) v = rng.uniform(-1.0, 1.0);
  NormalFormGame g;
  g.action_counts = sizes;
  g.payoffs = {shared, shared};
  return g;
}

NormalFormGame make_coordination_game(RngStream& rng, std::size_t actions) {
  if (actions == 0) throw std::invalid_argument("make_coordination_game: empty action set");
  // shared structure with a dominant diagonal keeps every unilateral
  // deviation aligned across players; the per-player constant offset makes
  // the game coordination-but-not-team
  Tensor shared = Tensor::zeros({actions, actions});
  for (std::size_t i = 0; i < actions; ++i)
    for (std::size_t j = 0; j < actions; ++j)
      shared.at(i, j) = i == j ? rng.uniform(1.5, 2.5) : rng.uniform(0.0, 1.0);
  double offset = rng.uniform(0.25, 0.75);
  NormalFormGame g;
  g.action_counts = {actions, actions};
  g.payoffs[0] = shared;
  g.payoffs[1] = shared;
  for (double& v : g.payoffs[1].data) v += offset;
  return g;
}

NormalFormGame make_general_game(RngStream& rng, std::array<std::size_t, 2> sizes) {
  NormalFormGame g;
  g.action_counts = sizes;
  for (std::size_t p = 0; p < 2; ++p) {
    Tensor t = Tensor::zeros({sizes[0], sizes[1]});
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    g.payoffs[p] = std::move(t);
  }
  return g;
}

NormalFormGame interpolate_game(const Tensor& phi, const std::vector<Tensor>& residuals,
                                double lambda_g) {
  if (phi.shape.size() != 2) throw std::invalid_argument("interpolate_game: phi must be a matrix");
  std::size_t a1 = phi.rows(), a2 = phi.cols();
  if (residuals.size() != 2) throw std::invalid_argument("interpolate_game: need one residual per player");
  if (residuals[0].shape != std::vector<std::size_t>{a2} ||
      residuals[1].shape != std::vector<std::size_t>{a1})
    throw std::invalid_argument("interpolate_game: residual may depend only on opponent actions");
  NormalFormGame g;
  g.action_counts = {a1, a2};
  g.payoffs[0] = phi;
  g.payoffs[1] = phi;
  for (std::size_t i = 0; i < a1; ++i)
    for (std::size_t j = 0; j < a2; ++j) {
      g.payoffs[0].at(i, j) += lambda_g * residuals[0].at(j);
      g.payoffs[1].at(i, j) += lambda_g * residuals[1].at(i);
    }
  return g;
}

bool is_team_game(const NormalFormGame& g, double tol) {
  for (std::size_t i = 0; i < g.payoffs[0].size(); ++i)
    if (std::abs(g.payoffs[0].data[i] - g.payoffs[1].data[i]) > tol) return false;
  return true;
}

bool is_coordination_game(const NormalFormGame& g, double tol) {
  std::size_t a1 = g.action_counts[0], a2 = g.action_counts[1];
  // deviations by player 0
  for (std::size_t j = 0; j < a2; ++j)
    for (std::size_t i = 0; i < a1; ++i)
      for (std::size_t k = i + 1; k < a1; ++k) {
        double d0 = g.payoff(0, k, j) - g.payoff(0, i, j);
        double d1 = g.payoff(1, k, j) - g.payoff(1, i, j);
        if (d0 * d1 < -tol) return false;
      }
  // deviations by player 1
  for (std::size_t i = 0; i < a1; ++i)
    for (std::size_t j = 0; j < a2; ++j)
      for (std::size_t k = j + 1; k < a2; ++k) {
        double d0 = g.payoff(0, i, k) - g.payoff(0, i, j);
        double d1 = g.payoff(1, i, k) - g.payoff(1, i, j);
        if (d0 * d1 < -tol) return false;
      }
  return true;
}

bool is_potential_game(const NormalFormGame& g, double tol) {
  std::size_t a1 = g.action_counts[0], a2 = g.action_counts[1];
  for (std::size_t i = 0; i < a1; ++i)
    for (std::size_t k = i + 1; k < a1; ++k)
      for (std::size_t j = 0; j < a2; ++j)
        for (std::size_t l = j + 1; l < a2; ++l)
          if (std::abs(four_cycle(g, i, k, j, l)) > tol) return false;
  return true;
}

GameClass classify(const NormalFormGame& g, double tol) {
  if (is_team_game(g, tol)) return GameClass::team;
  if (is_coordination_game(g, tol)) return GameClass::coordination;
  if (is_potential_game(g, tol)) return GameClass::potential;
  return GameClass::general;
}

Tensor potential_function(const NormalFormGame& g) {
  std::size_t a1 = g.action_counts[0], a2 = g.action_counts[1];
  Tensor phi = Tensor::zeros({a1, a2});
  for (std::size_t i = 0; i < a1; ++i)
    for (std::size_t j = 0; j < a2; ++j)
      phi.at(i, j) = (g.payoff(0, i, j) - g.payoff(0, 0, j)) +
                     (g.payoff(1, 0, j) - g.payoff(1, 0, 0));
  return phi;
}

double expected_payoff(const NormalFormGame& g, std::size_t player, const StrategyProfile& sp) {
  double total = 0.0;
  for (std::size_t i = 0; i < g.action_counts[0]; ++i)
    for (std::size_t j = 0; j < g.action_counts[1]; ++j)
      total += sp.probs[0][i] * sp.probs[1][j] * g.payoff(player, i, j);
  return total;
}

bool is_nash(const NormalFormGame& g, const StrategyProfile& sp, double tol) {
  for (std::size_t player = 0; player < 2; ++player) {
    double current = expected_payoff(g, player, sp);
    // best pure deviation bounds best mixed deviation
    for (std::size_t a = 0; a < g.action_counts[player]; ++a) {
      StrategyProfile dev = sp;
      dev.probs[player].assign(g.action_counts[player], 0.0);
      dev.probs[player][a] = 1.0;
      if (expected_payoff(g, player, dev) > current + tol) return false;
    }
  }
  return true;
}

std::vector<StrategyProfile> pure_nash(const NormalFormGame& g) {
  std::vector<StrategyProfile> out;
  for (std::size_t i = 0; i < g.action_counts[0]; ++i)
    for (std::size_t j = 0; j < g.action_counts[1]; ++j) {
      bool ok = true;
      for (std::size_t k = 0; k < g.action_counts[0] && ok; ++k)
        if (g.payoff(0, k, j) > g.payoff(0, i, j)) ok = false;
      for (std::size_t k = 0; k < g.action_counts[1] && ok; ++k)
        if (g.payoff(1, i, k) > g.payoff(1, i, j)) ok = false;
      if (ok) out.push_back(StrategyProfile::pure(g, i, j));
    }
  return out;
}

MixedNashResult mixed_nash_2x2(const NormalFormGame& g) {
  require_2x2(g, "mixed_nash_2x2");
  MixedNashResult res;
  res.profiles = pure_nash(g);

  const Tensor& A = g.payoffs[0];
  const Tensor& B = g.payoffs[1];
  // q makes the row player indifferent, p the column player
  double dq = A.at(0, 0) - A.at(0, 1) - A.at(1, 0) + A.at(1, 1);
  double dp = B.at(0, 0) - B.at(1, 0) - B.at(0, 1) + B.at(1, 1);
  if (std::abs(dq) < 1e-12 || std::abs(dp) < 1e-12) {
    res.degenerate = true;
    return res;
  }
  double q = (A.at(1, 1) - A.at(0, 1)) / dq;
  double p = (B.at(1, 1) - B.at(1, 0)) / dp;
  if (p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
    StrategyProfile sp;
    sp.probs[0] = {p, 1.0 - p};
    sp.probs[1] = {q, 1.0 - q};
    res.profiles.push_back(std::move(sp));
  }
  return res;
}

BrdResult best_response_dynamics(const NormalFormGame& g, std::array<std::size_t, 2> start,
                                 std::size_t max_iters) {
  BrdResult res;
  std::array<std::size_t, 2> cur = start;
  res.trajectory.push_back(cur);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t player = 0; player < 2; ++player) {
      std::size_t best = 0;
      double best_u = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < g.action_counts[player]; ++a) {
        double u = player == 0 ? g.payoff(0, a, cur[1]) : g.payoff(1, cur[0], a);
        if (u > best_u) {  // strict: lowest index wins ties
          best_u = u;
          best = a;
        }
      }
      if (best != cur[player] && best_u > (player == 0 ? g.payoff(0, cur[0], cur[1])
                                                       : g.payoff(1, cur[0], cur[1]))) {
        cur[player] = best;
        changed = true;
        res.trajectory.push_back(cur);
      }
    }
    if (!changed) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

std::string game_to_json(const NormalFormGame& g) {
  nlohmann::json j;
  j["actions"] = g.action_counts;
  j["payoffs"] = {g.payoffs[0].data, g.payoffs[1].data};
  return j.dump();
}

NormalFormGame game_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NormalFormGame g;
  auto actions = j.at("actions").get<std::vector<std::size_t>>();
  if (actions.size() != 2 || actions[0] == 0 || actions[1] == 0)
    throw std::invalid_argument("game file: need two positive action counts");
  g.action_counts = {actions[0], actions[1]};
  auto payoffs = j.at("payoffs").get<std::vector<std::vector<double>>>();
  if (payoffs.size() != 2) throw std::invalid_argument("game file: need one payoff matrix per player");
  for (std::size_t p = 0; p < 2; ++p) {
    if (payoffs[p].size() != actions[0] * actions[1])
      throw std::invalid_argument("game file: payoff matrix size mismatch");
    g.payoffs[p] = Tensor({actions[0], actions[1]}, payoffs[p]);
  }
  if (!g.payoffs[0].all_finite() || !g.payoffs[1].all_finite())
    throw std::invalid_argument("game file: payoffs must be finite");
  return g;
}

}  // namespace metastack
