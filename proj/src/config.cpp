#include "metastack/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw std::invalid_argument("unknown config key: " + where + key);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, std::array<double, 2>& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2 || !(v[0] <= v[1]))
    throw std::invalid_argument("config field " + where + key +
                                " must be an ordered [lo, hi] pair");
  out = {v[0], v[1]};
}

void parse_prior(const json& j, PolynomialPrior& p) {
  reject_unknown(j, {"a_range", "b_range", "c_range", "lo", "hi", "noise", "n"}, "prior.");
  read_range(j, "a_range", p.a_range, "prior.");
  read_range(j, "b_range", p.b_range, "prior.");
  read_range(j, "c_range", p.c_range, "prior.");
  read(j, "lo", p.lo);
  read(j, "hi", p.hi);
  read(j, "noise", p.noise);
  read(j, "n", p.n);
}

void parse_explore(const json& j, ExplorationParams& e) {
  reject_unknown(j, {"lambda_mix", "delta", "eps1", "eps2", "alpha1", "alpha2", "beta",
                     "gamma", "gamma_ref"},
                 "explore.");
  read(j, "lambda_mix", e.lambda_mix);
  read(j, "delta", e.delta);
  read(j, "eps1", e.eps1);
  read(j, "eps2", e.eps2);
  read(j, "alpha1", e.alpha1);
  read(j, "alpha2", e.alpha2);
  read(j, "beta", e.beta);
  read(j, "gamma", e.gamma);
  read(j, "gamma_ref", e.gamma_ref);
}

LevelConfig parse_level(const json& j) {
  reject_unknown(j,
                 {"index", "lambda_virtual", "beta_reg", "outer_lr", "gen_lr",
                  "use_generator", "use_discriminator", "modules"},
                 "levels.");
  LevelConfig lc;
  read(j, "index", lc.index);
  read(j, "lambda_virtual", lc.lambda_virtual);
  read(j, "beta_reg", lc.beta_reg);
  read(j, "outer_lr", lc.outer_lr);
  read(j, "gen_lr", lc.gen_lr);
  read(j, "use_generator", lc.use_generator);
  read(j, "use_discriminator", lc.use_discriminator);
  read(j, "modules", lc.modules);
  return lc;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (K == 0) throw std::invalid_argument("config field K must be >= 1");
  if (domain != "polynomial")
    throw std::invalid_argument("config field domain: only 'polynomial' runs end to end");
  if (model_widths.size() < 2)
    throw std::invalid_argument("config field model.widths needs input and output");
  activation_from_string(hidden_act);  // throws on bad name
  if (alpha <= 0.0) throw std::invalid_argument("config field learner.alpha must be > 0");
  run.prior.validate();
  run.explore.validate();
  if (!allow_alpha_above_eps) {
    if (run.explore.alpha1 >= -run.explore.eps1 || run.explore.alpha2 >= -run.explore.eps2)
      throw std::invalid_argument(
          "config field explore.alpha must satisfy alpha < -eps "
          "(set allow_alpha_above_eps to override)");
  }
  if (run.buffer_fraction < 0.0 || run.buffer_fraction > 1.0)
    throw std::invalid_argument("config field buffer_fraction must lie in [0, 1]");
  if (run.meta_batch == 0) throw std::invalid_argument("config field meta_batch must be >= 1");
  if (run.steps == 0) throw std::invalid_argument("config field steps must be >= 1");
  std::set<std::size_t> seen;
  for (const auto& lc : levels) {
    if (lc.index == 0 || lc.index > K)
      throw std::invalid_argument("config field levels.index out of range 1..K");
    if (!seen.insert(lc.index).second)
      throw std::invalid_argument("config field levels.index duplicated");
    if (lc.lambda_virtual < 0.0)
      throw std::invalid_argument("config field levels.lambda_virtual must be >= 0");
    if (lc.lambda_virtual > 0.0 && !lc.use_generator && lc.modules.empty())
      throw std::invalid_argument(
          "config field levels: lambda_virtual > 0 needs modules or use_generator");
    for (const auto& m : lc.modules) module_kind_from_string(m);  // throws on bad name
  }
}

ExperimentConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
  }
  reject_unknown(j, {"seed",        "domain",     "K",           "variant",
                     "steps",       "meta_batch", "sub_steps",   "family_width",
                     "out_dir",     "log_every",  "model",       "learner",
                     "levels",      "prior",      "explore",     "virtual_batch",
                     "disc_lr",     "selector_lr", "collocation", "buffer_fraction",
                     "use_surrogate", "lambda_s", "curriculum",  "history_cap",
                     "buffer_cap",  "allow_alpha_above_eps"},
                 "");
  ExperimentConfig cfg;
  try {
    read(j, "seed", cfg.seed);
    read(j, "domain", cfg.domain);
    read(j, "K", cfg.K);
    if (j.contains("variant")) cfg.run.variant = algorithm_from_string(j.at("variant"));
    read(j, "steps", cfg.run.steps);
    read(j, "meta_batch", cfg.run.meta_batch);
    read(j, "sub_steps", cfg.run.sub_steps);
    read(j, "family_width", cfg.run.family_width);
    read(j, "out_dir", cfg.out_dir);
    read(j, "log_every", cfg.run.log_every);
    read(j, "virtual_batch", cfg.run.virtual_batch);
    read(j, "disc_lr", cfg.run.disc_lr);
    read(j, "selector_lr", cfg.run.selector_lr);
    read(j, "collocation", cfg.run.collocation);
    read(j, "buffer_fraction", cfg.run.buffer_fraction);
    read(j, "use_surrogate", cfg.run.use_surrogate);
    read(j, "lambda_s", cfg.run.lambda_s);
    read(j, "curriculum", cfg.run.curriculum);
    read(j, "history_cap", cfg.history_cap);
    read(j, "buffer_cap", cfg.buffer_cap);
    read(j, "allow_alpha_above_eps", cfg.allow_alpha_above_eps);
    if (j.contains("model")) {
      const auto& mj = j.at("model");
      reject_unknown(mj, {"widths", "hidden_act"}, "model.");
      read(mj, "widths", cfg.model_widths);
      read(mj, "hidden_act", cfg.hidden_act);
    }
    if (j.contains("learner")) {
      const auto& lj = j.at("learner");
      reject_unknown(lj, {"mode", "alpha", "inner_steps", "hyper_hidden"}, "learner.");
      if (lj.contains("mode")) cfg.learner_mode = learner_mode_from_string(lj.at("mode"));
      read(lj, "alpha", cfg.alpha);
      read(lj, "inner_steps", cfg.inner_steps);
      read(lj, "hyper_hidden", cfg.hyper_hidden);
    }
    if (j.contains("prior")) parse_prior(j.at("prior"), cfg.run.prior);
    if (j.contains("explore")) parse_explore(j.at("explore"), cfg.run.explore);
    if (j.contains("levels"))
      for (const auto& lj : j.at("levels")) cfg.levels.push_back(parse_level(lj));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config field has the wrong type: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_text(text);
}

Checkpoint build_run(const ExperimentConfig& cfg) {
  cfg.validate();
  RootRng root(cfg.seed);

  Mlp tmpl = Mlp::make_uniform(cfg.model_widths, activation_from_string(cfg.hidden_act));
  RngStream init_rng = root.stream("level-init");
  Checkpoint cp;
  cp.hierarchy = make_hierarchy(cfg.K, tmpl, init_rng);

  constexpr std::size_t kEmbedDim = 3;  // polynomial coefficient embedding
  RngStream gan_rng = root.stream("gan-init");
  for (auto& lv : cp.hierarchy.levels) {
    lv.learner.mode = cfg.learner_mode;
    lv.learner.alpha = cfg.alpha;
    lv.learner.inner_steps = cfg.inner_steps;
    if (cfg.learner_mode == LearnerMode::hypernetwork) {
      lv.learner.hyper = Mlp::make_uniform(
          {kEmbedDim, cfg.hyper_hidden, lv.learner.init.param_count()}, Activation::tanh);
      lv.learner.hyper.init_random(init_rng, 0.1);
    }
    for (const auto& lc : cfg.levels) {
      if (lc.index != lv.index) continue;
      lv.lambda_virtual = lc.lambda_virtual;
      lv.beta_reg = lc.beta_reg;
      lv.outer_lr = lc.outer_lr;
      lv.gen_opt = OptimizerState::adam(lc.gen_lr);
      if (lc.use_generator) lv.generator = make_generator(2, kEmbedDim, gan_rng);
      if (lc.use_discriminator) lv.discriminator = make_discriminator(kEmbedDim, gan_rng);
      if (!lc.modules.empty()) {
        std::vector<StructuralModule> mods;
        for (const auto& name : lc.modules) {
          switch (module_kind_from_string(name)) {
            case ModuleKind::rotation_SO2: mods.push_back(make_rotation_module()); break;
            case ModuleKind::translation_R2: mods.push_back(make_translation_module()); break;
            case ModuleKind::scaling: mods.push_back(make_scaling_module()); break;
          }
        }
        lv.constraint = make_soft_constraint(std::move(mods), kEmbedDim);
      }
    }
    lv.learner.validate();
  }

  cp.state = make_train_state(cfg.seed, cfg.history_cap, cfg.buffer_cap);
  return cp;
}

}  // namespace metastack
