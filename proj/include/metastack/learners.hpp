#pragma once

#include <cstdint>
#include <string>

#include "metastack/mlp.hpp"
#include "metastack/tasks.hpp"

namespace metastack {

enum class LearnerMode { init_based, hypernetwork };

LearnerMode learner_mode_from_string(const std::string& s);
std::string to_string(LearnerMode m);

/// Level-1 learner: either a shared initialisation (default) or a
/// hypernetwork mapping the task embedding to the model's flat weights.
struct LearnerParams {
  LearnerMode mode = LearnerMode::init_based;
  Mlp init;            // theta_0; also the target architecture in hypernetwork mode
  Mlp hyper;           // embedding -> flat parameter vector (hypernetwork mode)
  double alpha = 0.05; // inner learning rate
  std::size_t inner_steps = 5;

  void validate() const;
};

struct AdaptedModel {
  Mlp model;
  std::int64_t task_id = 0;
  double final_loss = 0.0;
};

/// Fresh per-task model: copy of theta_0, or hypernetwork output on phi(tau).
Mlp instantiate(const LearnerParams& lp, const Task& task);

/// Mean squared error over the dataset.
double task_loss(const Mlp& model, const Dataset& data);

/// Gradient of task_loss with respect to model parameters (weights and
/// biases interleaved per layer, matching Mlp::Vars::all()).
std::vector<Tensor> task_loss_grad(const Mlp& model, const Dataset& data);

/// `inner_steps` full-batch gradient steps on task_loss.
AdaptedModel inner_adapt(const LearnerParams& lp, Mlp model, const Dataset& data,
                         std::int64_t task_id = 0);

/// ||f(x) - y||^2 + lambda_s * ||grad_theta sum(f(x))||^2.
double surrogate_loss(const Mlp& model, const Dataset& data, double lambda_s);

/// Gradient of surrogate_loss with respect to model parameters; exact,
/// differentiating through the gradient-norm term.
std::vector<Tensor> surrogate_grad(const Mlp& model, const Dataset& data, double lambda_s);

/// Tape-level surrogate loss so callers can differentiate it further.
VarId surrogate_loss_on(Tape& t, const Mlp& model, const Mlp::Vars& vars,
                        const Dataset& data, double lambda_s);

/// Regression dataset for a game task: input is the payoff embedding,
/// target the concatenated oracle equilibrium profile.
Dataset equilibrium_dataset(const Task& task);

/// Domain dispatch: polynomial tasks synthesise data, game tasks regress
/// their equilibrium profile.
Dataset learner_dataset(const Task& task, RngStream& rng);

}  // namespace metastack
