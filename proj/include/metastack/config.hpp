#pragma once

#include <string>

#include "metastack/checkpoint.hpp"
#include "metastack/meta.hpp"

namespace metastack {

/// Per-level knobs addressable from a config file; anything unset falls
/// back to the MetaLevel defaults.
struct LevelConfig {
  std::size_t index = 1;
  double lambda_virtual = 0.0;
  double beta_reg = 0.0;
  double outer_lr = 0.1;
  double gen_lr = 0.01;
  bool use_generator = false;
  bool use_discriminator = false;
  std::vector<std::string> modules;  // structural module kinds, may be empty
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string domain = "polynomial";
  std::size_t K = 1;
  std::string out_dir = ".";
  std::size_t history_cap = 4096;
  std::size_t buffer_cap = 256;

  std::vector<std::size_t> model_widths{1, 16, 16, 1};
  std::string hidden_act = "tanh";

  LearnerMode learner_mode = LearnerMode::init_based;
  double alpha = 0.05;
  std::size_t inner_steps = 5;
  std::size_t hyper_hidden = 32;

  std::vector<LevelConfig> levels;  // defaults applied when empty
  RunConfig run;

  /// The score floors must sit below the negated thresholds (alpha < -eps)
  /// unless explicitly overridden.
  bool allow_alpha_above_eps = false;

  void validate() const;
};

/// Parses and validates config text; unknown keys are rejected by name and
/// every referenced type's constraints are revalidated.
ExperimentConfig config_from_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Materialises the hierarchy and train state a config describes; all
/// randomness derives from labelled substreams of the seed.
Checkpoint build_run(const ExperimentConfig& cfg);

}  // namespace metastack
