#pragma once

#include <optional>
#include <span>
#include <string>

#include "metastack/constraints.hpp"
#include "metastack/learners.hpp"
#include "metastack/tasks.hpp"

namespace metastack {

struct ExplorationParams {
  double lambda_mix = 0.5;  // balance between the two score terms
  double delta = 0.1;       // ratio stabiliser, > 0
  double eps1 = 0.1, eps2 = 0.1;      // contribution thresholds, >= 0
  double alpha1 = -0.2, alpha2 = -0.2;  // penalty floors, < 0 and < -eps
  double beta = 0.0;        // manifold weight
  double gamma = 0.0;       // adversarial weight
  double gamma_ref = 1.0;   // kernel bandwidth, > 0

  void validate() const;
};

enum class ExploreSignal { contextual_smooth, contextual_hard, kernel, entropy, grad_norm };

ExploreSignal explore_signal_from_string(const std::string& s);
std::string to_string(ExploreSignal s);

struct ScoreBreakdown {
  double term1 = 0.0;  // sharp-transition term
  double term2 = 0.0;  // stable-generalisation term
  double total = 0.0;
  double delta_l = 0.0;
  double d = 0.0;
};

double delta_loss(double loss_tau, double loss_ref);

ScoreBreakdown score_hard(const ExplorationParams& ep, double delta_l, double d);
ScoreBreakdown score_smooth(const ExplorationParams& ep, double delta_l, double d);
/// Tape variant over scalar vars so scores differentiate through task
/// parameters.
VarId score_smooth_on(Tape& t, const ExplorationParams& ep, VarId delta_l, VarId d);

struct KernelRefs {
  std::vector<double> weights;  // normalised, sum to 1
  double loss_mean = 0.0;       // L-bar
  double dist_mean = 0.0;       // d-bar
};

KernelRefs kernel_refs(const TaskHistory& history, const Task& task, double gamma_ref);

/// Kernel-smoothed score of the current task at its current loss;
/// second term uses dist_mean / (1 + |L - loss_mean|).
double score_kernel(const ExplorationParams& ep, const TaskHistory& history,
                    const Task& task, double current_loss);
VarId score_kernel_on(Tape& t, const ExplorationParams& ep, const TaskHistory& history,
                      VarId embedding, VarId current_loss);

/// Mean Shannon entropy of the predictive distribution (softmax head only).
double entropy_signal(const Mlp& model, const Tensor& x);
/// Euclidean norm of the task-loss parameter gradient.
double grad_norm_signal(const Mlp& model, const Dataset& data);

/// Eq.-style generator objective over a scored batch:
/// -mean(S) + beta * mean(manifold) - gamma * mean(log D).
double generator_loss(const ExplorationParams& ep, std::span<const double> scores,
                      std::span<const double> manifold_penalties,
                      std::span<const double> disc_outputs);

struct Generator {
  Mlp net;  // latent z -> virtual-task parameters
  std::size_t z_dim() const { return net.input_width(); }
  std::size_t out_dim() const { return net.output_width(); }
};

Generator make_generator(std::size_t z_dim, std::size_t out_dim, RngStream& rng,
                         std::size_t hidden = 32);

struct Discriminator {
  Mlp net;  // task parameters -> probability (sigmoid head)
};

Discriminator make_discriminator(std::size_t in_dim, RngStream& rng,
                                 std::size_t hidden = 32);

double discriminator_prob(const Discriminator& disc, const Task& task);

/// One gradient step on -log D(real) - log(1 - D(fake)); returns the
/// pre-step loss.
double discriminator_update(Discriminator& disc, const std::vector<Task>& real,
                            const std::vector<Task>& fake, double lr);

struct ExploreRound {
  std::vector<Task> tasks;
  std::vector<ScoreBreakdown> scores;
  double mean_score = 0.0;
  double max_score = 0.0;
  double clamp_hit_rate = 0.0;
  double gen_loss = 0.0;
  double d_fake_mean = 0.0;  // mean D(fake), 0 when no discriminator
};

/// One Algorithm-2-style generator pass over the polynomial domain:
/// sample latents, decode coefficients, clamp to the prior box
/// (straight-through), score against the visitation history, and — when an
/// optimiser is supplied — take one gradient step on the generator
/// objective. Discriminator and constraint terms are optional (gamma/beta).
ExploreRound explore_round(Generator& gen, const ExplorationParams& ep,
                           const Mlp& learner_model, const TaskHistory& history,
                           const PolynomialPrior& prior, RngStream& rng,
                           std::size_t batch, std::int64_t first_id,
                           OptimizerState* gen_opt = nullptr,
                           const Discriminator* disc = nullptr,
                           const SoftConstraint* sc = nullptr,
                           const Mlp* constrained_model = nullptr);

}  // namespace metastack
