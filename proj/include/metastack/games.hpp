#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "metastack/rng.hpp"
#include "metastack/tensor.hpp"

namespace metastack {

/// Two-player normal-form game. Payoffs are [A1,A2] matrices, one per
/// player, indexed by the joint action.
struct NormalFormGame {
  std::array<std::size_t, 2> action_counts{2, 2};
  std::array<Tensor, 2> payoffs;

  double payoff(std::size_t player, std::size_t a1, std::size_t a2) const {
    return payoffs[player].at(a1, a2);
  }
  std::vector<double> flatten() const;  // row-major per player, player 0 first
};

enum class GameClass { team, coordination, potential, general };

struct StrategyProfile {
  std::array<std::vector<double>, 2> probs;

  static StrategyProfile pure(const NormalFormGame& g, std::size_t a1, std::size_t a2);
  bool is_pure() const;
  /// Pure action indices; only valid for pure profiles.
  std::array<std::size_t, 2> pure_actions() const;
};

// --- generators --------------------------------------------------------------

/// Both players share one payoff tensor.
NormalFormGame make_team_game(RngStream& rng, std::array<std::size_t, 2> sizes);

/// Square game whose diagonal joint actions Pareto-dominate the
/// off-diagonal ones for both players.
NormalFormGame make_coordination_game(RngStream& rng, std::size_t actions);

/// Independent uniform payoffs per player.
NormalFormGame make_general_game(RngStream& rng, std::array<std::size_t, 2> sizes);

/// u_i = phi + lambda_g * F_i, where F_i depends only on the opponent's
/// action (F[0] has length A2, F[1] has length A1).
NormalFormGame interpolate_game(const Tensor& phi, const std::vector<Tensor>& residuals,
                                double lambda_g);

// --- classifiers --------------------------------------------------------------

bool is_team_game(const NormalFormGame& g, double tol = 1e-9);
/// Ordinal alignment: every unilateral deviation moves both players'
/// payoffs in the same (weak) direction.
bool is_coordination_game(const NormalFormGame& g, double tol = 1e-9);
/// Exact-potential four-cycle condition over every 2x2 sub-square.
bool is_potential_game(const NormalFormGame& g, double tol = 1e-9);
GameClass classify(const NormalFormGame& g, double tol = 1e-9);

/// Reconstructs a potential function by path integration from (0,0).
/// Only meaningful when is_potential_game holds.
Tensor potential_function(const NormalFormGame& g);

// --- equilibrium oracles -------------------------------------------------------

double expected_payoff(const NormalFormGame& g, std::size_t player,
                       const StrategyProfile& sp);

/// Appendix-style deviation check: no player can gain more than tol by a
/// unilateral (pure, hence also mixed) deviation.
bool is_nash(const NormalFormGame& g, const StrategyProfile& sp, double tol = 1e-9);

/// Exhaustive enumeration of pure equilibria (weak inequalities).
std::vector<StrategyProfile> pure_nash(const NormalFormGame& g);

struct MixedNashResult {
  std::vector<StrategyProfile> profiles;
  bool degenerate = false;  // indifference system was singular
};

/// Support enumeration for 2x2 games: all pure equilibria plus the
/// interior indifference point when it lies in (0,1)^2.
MixedNashResult mixed_nash_2x2(const NormalFormGame& g);

struct BrdResult {
  std::vector<std::array<std::size_t, 2>> trajectory;
  bool converged = false;
};

/// Sequential best responses, player 0 first, lowest-index tie-break.
BrdResult best_response_dynamics(const NormalFormGame& g,
                                 std::array<std::size_t, 2> start,
                                 std::size_t max_iters = 100);

// --- serialisation -------------------------------------------------------------

std::string game_to_json(const NormalFormGame& g);
NormalFormGame game_from_json(const std::string& text);

}  // namespace metastack
