#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "metastack/exploration.hpp"
#include "metastack/metrics.hpp"

namespace metastack {

enum class AlgorithmVariant { basic, explore, efficient };

AlgorithmVariant algorithm_from_string(const std::string& s);
std::string to_string(AlgorithmVariant v);

/// One level of the recursive stack; index k counts upward from the
/// task-facing learner (k = 1).
struct MetaLevel {
  std::size_t index = 1;
  LearnerParams learner;  // Phi_k
  std::optional<SoftConstraint> constraint;
  std::optional<Generator> generator;
  std::optional<Discriminator> discriminator;
  double lambda_virtual = 0.0;  // lambda_k
  double beta_reg = 0.0;
  double outer_lr = 0.1;  // eta_k
  OptimizerState gen_opt = OptimizerState::adam(0.01);
};

struct ReplayEntry {
  Task task;
  double performance = 0.0;  // R = negated validation loss
  double weight = 1.0;       // w(tau)
};

struct ReplayBuffer {
  explicit ReplayBuffer(std::size_t cap = 256) : cap_(cap) {}

  void push(ReplayEntry e);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return cap_; }
  const std::vector<ReplayEntry>& entries() const { return entries_; }

 private:
  std::size_t cap_;
  std::vector<ReplayEntry> entries_;  // FIFO
};

/// Linear widening of the task-prior box from start_scale to 1 over the
/// first half of training, then flat.
struct CurriculumController {
  std::size_t total_steps = 100;
  double start_scale = 0.25;

  double scale_at(std::size_t step) const;
};

/// Scales every coefficient range of the prior about its centre.
PolynomialPrior scale_prior(const PolynomialPrior& prior, double scale);

/// Levels stored K..1, matching the descending training order.
struct Hierarchy {
  std::vector<MetaLevel> levels;
  Mlp model_template;  // level-0 architecture

  std::size_t depth() const { return levels.size(); }
  MetaLevel& level(std::size_t k);
  const MetaLevel& level(std::size_t k) const;
};

Hierarchy make_hierarchy(std::size_t K, Mlp model_template, RngStream& rng);

struct RunConfig {
  AlgorithmVariant variant = AlgorithmVariant::basic;
  std::size_t steps = 100;       // outer steps per level
  std::size_t meta_batch = 4;
  std::size_t sub_steps = 10;    // inner meta-run length for k >= 2
  double family_width = 0.25;    // sub-box half-width fraction for k >= 2
  PolynomialPrior prior;
  ExplorationParams explore;
  std::size_t virtual_batch = 4;
  double disc_lr = 0.05;
  double selector_lr = 0.1;
  std::size_t collocation = 32;
  double buffer_fraction = 0.0;  // efficient path: share of batch from replay
  bool use_surrogate = false;
  double lambda_s = 0.1;
  bool curriculum = false;
  std::size_t log_every = 10;
};

/// All mutable run state outside the hierarchy itself; everything here is
/// checkpointed so training resumes bit-identically.
struct TrainState {
  std::uint64_t seed = 0;
  std::size_t step = 0;
  RngStream task_rng{0}, data_rng{0}, virt_rng{0}, eval_rng{0};
  TaskHistory history{4096};
  ReplayBuffer buffer{256};
  std::int64_t next_task_id = 0;
  std::size_t fresh_samples = 0;  // sampler-call audit (buffer-reuse contract)
};

TrainState make_train_state(std::uint64_t seed, std::size_t history_cap = 4096,
                            std::size_t buffer_cap = 256);

/// Sum of (L_task + lambda_k * L_virtual) pairs plus beta_reg * ||Phi_k||^2.
double composite_meta_loss(const MetaLevel& level, std::span<const double> task_losses,
                           std::span<const double> virtual_losses);

void train_level_basic(Hierarchy& h, std::size_t k, const RunConfig& cfg, TrainState& st,
                       std::vector<MetricsRecord>& metrics);
void train_level_explore(Hierarchy& h, std::size_t k, const RunConfig& cfg, TrainState& st,
                         std::vector<MetricsRecord>& metrics);
void train_level_efficient(Hierarchy& h, std::size_t k, const RunConfig& cfg,
                           TrainState& st, std::vector<MetricsRecord>& metrics);

/// Descending pass k = K .. 1, dispatching on cfg.variant.
void train_hierarchy(Hierarchy& h, const RunConfig& cfg, TrainState& st,
                     std::vector<MetricsRecord>& metrics);

/// Plain first-order meta-learning over the same streams: the degenerate
/// reference trajectory (no virtual path, no constraints).
void train_plain_reference(Mlp& init, const RunConfig& cfg, TrainState& st,
                           std::vector<MetricsRecord>& metrics);

/// Copies level k's trained parameters into level k+1's learner slot.
void promote(Hierarchy& h, std::size_t k);

}  // namespace metastack
