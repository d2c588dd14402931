#include "metastack/meta.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metastack {

AlgorithmVariant algorithm_from_string(const std::string& s) {
  if (s == "basic") return AlgorithmVariant::basic;
  if (s == "explore") return AlgorithmVariant::explore;
  if (s == "efficient") return AlgorithmVariant::efficient;
  throw std::invalid_argument("unknown algorithm variant: " + s);
}

std::string to_string(AlgorithmVariant v) {
  switch (v) {
    case AlgorithmVariant::basic: return "basic";
    case AlgorithmVariant::explore: return "explore";
    case AlgorithmVariant::efficient: return "efficient";
  }
  return "?";
}

void ReplayBuffer::push(ReplayEntry e) {
  if (cap_ == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  entries_.push_back(std::move(e));
  if (entries_.size() > cap_) entries_.erase(entries_.begin());
}

double CurriculumController::scale_at(std::size_t step) const {
  if (total_steps == 0) return 1.0;
  double half = double(total_steps) / 2.0;
  double ramp = half > 0.0 ? std::min(1.0, double(step) / half) : 1.0;
  return start_scale + (1.0 - start_scale) * ramp;
}

PolynomialPrior scale_prior(const PolynomialPrior& prior, double scale) {
  if (scale <= 0.0 || scale > 1.0) throw std::invalid_argument("scale_prior: scale in (0,1]");
  PolynomialPrior p = prior;
  for (auto* r : {&p.a_range, &p.b_range, &p.c_range}) {
    double mid = ((*r)[0] + (*r)[1]) / 2.0;
    double half = ((*r)[1] - (*r)[0]) / 2.0 * scale;
    (*r)[0] = mid - half;
    (*r)[1] = mid + half;
  }
  return p;
}

MetaLevel& Hierarchy::level(std::size_t k) {
  for (auto& lv : levels)
    if (lv.index == k) return lv;
  throw std::invalid_argument("hierarchy: no level " + std::to_string(k));
}

const MetaLevel& Hierarchy::level(std::size_t k) const {
  for (const auto& lv : levels)
    if (lv.index == k) return lv;
  throw std::invalid_argument("hierarchy: no level " + std::to_string(k));
}

Hierarchy make_hierarchy(std::size_t K, Mlp model_template, RngStream& rng) {
  if (K == 0) throw std::invalid_argument("hierarchy: depth must be >= 1");
  Hierarchy h;
  h.model_template = model_template;
  for (std::size_t k = K; k >= 1; --k) {
    MetaLevel lv;
    lv.index = k;
    lv.learner.init = model_template;
    lv.learner.init.init_random(rng);
    h.levels.push_back(std::move(lv));
  }
  return h;
}

TrainState make_train_state(std::uint64_t seed, std::size_t history_cap,
                            std::size_t buffer_cap) {
  TrainState st;
  st.seed = seed;
  RootRng root(seed);
  st.task_rng = root.stream("tasks");
  st.data_rng = root.stream("data");
  st.virt_rng = root.stream("virtual");
  st.eval_rng = root.stream("eval");
  st.history = TaskHistory(history_cap);
  st.buffer = ReplayBuffer(buffer_cap);
  return st;
}

double composite_meta_loss(const MetaLevel& level, std::span<const double> task_losses,
                           std::span<const double> virtual_losses) {
  if (task_losses.empty()) throw std::invalid_argument("composite_meta_loss: no task losses");
  double total = 0.0;
  for (double v : task_losses) total += v;
  for (double v : virtual_losses) total += level.lambda_virtual * v;
  if (level.beta_reg > 0.0) {
    double reg = 0.0;
    const Mlp& phi = level.learner.mode == LearnerMode::hypernetwork ? level.learner.hyper
                                                                     : level.learner.init;
    for (double v : phi.flat_params()) reg += v * v;
    total += level.beta_reg * reg;
  }
  return total;
}

namespace {

struct StepOutcome {
  std::vector<double> task_losses;
  std::vector<double> virtual_losses;
  double score_mean = 0.0;
  double d_fake = 0.0;
  std::vector<double> gate_means;
};

Mlp adapt_surrogate_steps(const LearnerParams& lp, Mlp m, const Dataset& d, double lambda_s) {
  for (std::size_t s = 0; s < lp.inner_steps; ++s) {
    auto grads = surrogate_grad(m, d, lambda_s);
    std::size_t gi = 0;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      for (std::size_t j = 0; j < m.weights[l].size(); ++j)
        m.weights[l].data[j] -= lp.alpha * grads[gi].data[j];
      ++gi;
      for (std::size_t j = 0; j < m.biases[l].size(); ++j)
        m.biases[l].data[j] -= lp.alpha * grads[gi].data[j];
      ++gi;
    }
  }
  return m;
}

/// Adapts one task and accumulates weight * (theta* - xi) into delta.
double adapt_and_delta(const LearnerParams& lp, const Task& task, const Dataset& data,
                       bool surrogate, double lambda_s, double weight,
                       std::vector<double>& delta) {
  Mlp model = instantiate(lp, task);
  double loss;
  if (surrogate) {
    model = adapt_surrogate_steps(lp, std::move(model), data, lambda_s);
    loss = task_loss(model, data);
  } else {
    auto am = inner_adapt(lp, std::move(model), data, task.id);
    loss = am.final_loss;
    model = std::move(am.model);
  }
  auto base = lp.init.flat_params();
  auto adapted = model.flat_params();
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] += weight * (adapted[i] - base[i]);
  return loss;
}

void apply_outer(Mlp& init, const std::vector<double>& delta, double denom, double eta,
                 double beta_reg) {
  auto flat = init.flat_params();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += eta * delta[i] / denom;
  if (beta_reg > 0.0)
    for (double& v : flat) v -= eta * 2.0 * beta_reg * v;
  init.set_flat_params(flat);
}

/// Hypernetwork path: first-order gradient of the mean task loss through
/// the hypernetwork itself (no inner loop).
double hyper_outer_step(MetaLevel& lv, const std::vector<Task>& tasks,
                        const std::vector<Dataset>& data, double eta) {
  Tape t;
  auto hvars = lv.learner.hyper.lift(t);
  VarId total = t.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    VarId emb = t.constant(Tensor({tasks[i].embedding.size()},
                                  std::vector<double>(tasks[i].embedding)));
    VarId flat = lv.learner.hyper.forward_on(t, hvars,
                                             t.reshape(emb, {1, t.value(emb).size()}));
    VarId loss = t.mse(lv.learner.init.forward_flat(t, t.reshape(flat, {t.value(flat).size()}),
                                                    t.constant(data[i].inputs)),
                       t.constant(data[i].targets));
    total = t.add(total, loss);
  }
  double value = t.value(total).item();
  auto grads = t.gradients(total, hvars.all());
  std::size_t gi = 0;
  for (std::size_t l = 0; l < lv.learner.hyper.weights.size(); ++l) {
    for (std::size_t j = 0; j < lv.learner.hyper.weights[l].size(); ++j)
      lv.learner.hyper.weights[l].data[j] -= eta * grads[gi].data[j] / double(tasks.size());
    ++gi;
    for (std::size_t j = 0; j < lv.learner.hyper.biases[l].size(); ++j)
      lv.learner.hyper.biases[l].data[j] -= eta * grads[gi].data[j] / double(tasks.size());
    ++gi;
  }
  return value / double(tasks.size());
}

void check_finite(double meta_loss, std::size_t step) {
  if (!std::isfinite(meta_loss))
    throw std::runtime_error("training diverged: non-finite meta-loss at step " +
                             std::to_string(step));
}

void log_metrics(std::vector<MetricsRecord>& metrics, const RunConfig& cfg,
                 const TrainState& st, std::size_t level, const MetaLevel& lv,
                 const StepOutcome& out, std::size_t local_step) {
  if (cfg.log_every == 0 || local_step % cfg.log_every != 0) return;
  MetricsRecord r;
  r.step = st.step;
  r.level = level;
  for (double v : out.task_losses) r.loss_task += v;
  r.loss_task /= double(std::max<std::size_t>(1, out.task_losses.size()));
  for (double v : out.virtual_losses) r.loss_virtual += v;
  if (!out.virtual_losses.empty()) r.loss_virtual /= double(out.virtual_losses.size());
  r.loss_meta = composite_meta_loss(lv, out.task_losses, out.virtual_losses);
  r.score_explore_mean = out.score_mean;
  r.gate_means = out.gate_means;
  r.d_fake_mean = out.d_fake;
  metrics.push_back(std::move(r));
}

/// One level-1 outer step shared by every variant and by the plain
/// reference path; lv == nullptr disables the virtual/constraint machinery.
void level1_outer_step(Mlp& init, const LearnerParams& lp_proto, double outer_lr,
                       const PolynomialPrior& prior, const RunConfig& cfg, TrainState& st,
                       MetaLevel* lv, StepOutcome& out, bool surrogate, bool use_buffer) {
  LearnerParams lp = lp_proto;
  lp.init = init;
  std::vector<double> delta(init.param_count(), 0.0);

  std::size_t n_buf = 0;
  if (use_buffer && !st.buffer.empty())
    n_buf = std::min<std::size_t>(std::size_t(cfg.buffer_fraction * double(cfg.meta_batch)),
                                  st.buffer.size());
  std::size_t n_fresh = cfg.meta_batch - n_buf;

  std::vector<Task> real_tasks;
  for (std::size_t i = 0; i < n_buf; ++i) {
    const auto& e = st.buffer.entries()[st.task_rng.index(st.buffer.size())];
    Task task = e.task;
    Dataset d = generate_dataset(task, st.data_rng);
    double loss = adapt_and_delta(lp, task, d, surrogate, cfg.lambda_s, e.weight, delta);
    out.task_losses.push_back(loss);
    st.history.record(task, loss, st.step);
    real_tasks.push_back(std::move(task));
  }
  for (std::size_t i = 0; i < n_fresh; ++i) {
    Task task = sample_polynomial_task(st.task_rng, prior, st.next_task_id++);
    ++st.fresh_samples;
    Dataset d = generate_dataset(task, st.data_rng);
    double loss = adapt_and_delta(lp, task, d, surrogate, cfg.lambda_s, 1.0, delta);
    out.task_losses.push_back(loss);
    st.history.record(task, loss, st.step);
    if (use_buffer) st.buffer.push({task, -loss, 1.0});
    real_tasks.push_back(std::move(task));
  }

  double denom = double(cfg.meta_batch);
  double lambda = lv ? lv->lambda_virtual : 0.0;

  if (lv && lambda > 0.0) {
    std::vector<Task> virtual_tasks;
    std::vector<Dataset> virtual_data;
    if (lv->constraint) {
      // tractable constraint: direct sampling off each real task
      for (const auto& task : real_tasks) {
        Task vt = task;
        vt.id = st.next_task_id++;
        virtual_tasks.push_back(vt);
        virtual_data.push_back(
            sample_virtual_direct(*lv->constraint, task, st.virt_rng, prior.n));
      }
    } else if (lv->generator) {
      auto round = explore_round(*lv->generator, cfg.explore, init, st.history, prior,
                                 st.virt_rng, cfg.virtual_batch, st.next_task_id,
                                 lv->index == 1 ? &lv->gen_opt : nullptr,
                                 lv->discriminator ? &*lv->discriminator : nullptr,
                                 lv->constraint ? &*lv->constraint : nullptr, &init);
      st.next_task_id += std::int64_t(round.tasks.size());
      out.score_mean = round.mean_score;
      for (auto& vt : round.tasks) {
        virtual_data.push_back(generate_dataset(vt, st.virt_rng));
        virtual_tasks.push_back(std::move(vt));
      }
      if (lv->discriminator)
        discriminator_update(*lv->discriminator, real_tasks, virtual_tasks, cfg.disc_lr);
      if (lv->discriminator && !virtual_tasks.empty()) {
        for (const auto& vt : virtual_tasks)
          out.d_fake += discriminator_prob(*lv->discriminator, vt);
        out.d_fake /= double(virtual_tasks.size());
      }
    } else {
      throw std::invalid_argument(
          "train: lambda_virtual > 0 needs a constraint or a generator");
    }
    for (std::size_t i = 0; i < virtual_tasks.size(); ++i) {
      double loss = adapt_and_delta(lp, virtual_tasks[i], virtual_data[i], surrogate,
                                    cfg.lambda_s, lambda, delta);
      out.virtual_losses.push_back(loss);
    }
    denom += lambda * double(virtual_tasks.size());
  }

  apply_outer(init, delta, denom, outer_lr, lv ? lv->beta_reg : 0.0);
}

/// Runs `steps` outer steps of level-k training on a working copy of
/// `init` inside `prior`; used both as the main loop body for k >= 2 and
/// as the inner adaptation of a task family.
void run_level_k(Hierarchy& h, std::size_t k, Mlp& init, const PolynomialPrior& prior,
                 std::size_t steps, const RunConfig& cfg, TrainState& st,
                 StepOutcome* collect);

PolynomialPrior narrow_prior(const PolynomialPrior& prior, RngStream& rng, double width) {
  PolynomialPrior p = prior;
  for (auto* r : {&p.a_range, &p.b_range, &p.c_range}) {
    double c = rng.uniform((*r)[0], (*r)[1]);
    double hw = width * ((*r)[1] - (*r)[0]) / 2.0;
    (*r)[0] = std::max((*r)[0], c - hw);
    (*r)[1] = std::min((*r)[1], c + hw);
  }
  return p;
}

void family_outer_step(Hierarchy& h, std::size_t k, Mlp& init, const PolynomialPrior& prior,
                       const RunConfig& cfg, TrainState& st, double outer_lr,
                       StepOutcome& out) {
  // level k >= 2: a meta-task is a narrowed task family; inner adaptation
  // is a short level-(k-1) run seeded from this level's parameters
  std::vector<double> delta(init.param_count(), 0.0);
  auto base = init.flat_params();
  for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
    PolynomialPrior family = narrow_prior(prior, st.task_rng, cfg.family_width);
    Mlp sub = init;
    StepOutcome sub_out;
    run_level_k(h, k - 1, sub, family, cfg.sub_steps, cfg, st, &sub_out);
    if (!sub_out.task_losses.empty())
      out.task_losses.push_back(sub_out.task_losses.back());
    auto adapted = sub.flat_params();
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] += adapted[j] - base[j];
  }
  apply_outer(init, delta, double(cfg.meta_batch), outer_lr, 0.0);
}

void run_level_k(Hierarchy& h, std::size_t k, Mlp& init, const PolynomialPrior& prior,
                 std::size_t steps, const RunConfig& cfg, TrainState& st,
                 StepOutcome* collect) {
  const MetaLevel& lv = h.level(k);
  LearnerParams lp = lv.learner;
  for (std::size_t s = 0; s < steps; ++s) {
    StepOutcome out;
    if (k == 1) {
      // sub-runs keep the virtual machinery off: they are adaptation, not
      // training of the level itself
      level1_outer_step(init, lp, lv.outer_lr, prior, cfg, st, nullptr, out, false, false);
    } else {
      family_outer_step(h, k, init, prior, cfg, st, lv.outer_lr, out);
    }
    if (collect && !out.task_losses.empty())
      collect->task_losses.push_back(out.task_losses.back());
  }
}

void train_level_common(Hierarchy& h, std::size_t k, const RunConfig& cfg, TrainState& st,
                        std::vector<MetricsRecord>& metrics, bool surrogate,
                        bool use_buffer, bool curriculum) {
  MetaLevel& lv = h.level(k);
  CurriculumController ctrl{cfg.steps, 0.25};
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    PolynomialPrior prior = curriculum ? scale_prior(cfg.prior, ctrl.scale_at(s)) : cfg.prior;
    StepOutcome out;
    if (k == 1) {
      if (lv.learner.mode == LearnerMode::hypernetwork) {
        std::vector<Task> tasks;
        std::vector<Dataset> data;
        for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
          tasks.push_back(sample_polynomial_task(st.task_rng, prior, st.next_task_id++));
          ++st.fresh_samples;
          data.push_back(generate_dataset(tasks.back(), st.data_rng));
        }
        out.task_losses.push_back(hyper_outer_step(lv, tasks, data, lv.outer_lr));
        for (std::size_t i = 0; i < tasks.size(); ++i)
          st.history.record(tasks[i], out.task_losses[0], st.step);
      } else {
        level1_outer_step(lv.learner.init, lv.learner, lv.outer_lr, prior, cfg, st, &lv,
                          out, surrogate, use_buffer);
      }
      if (lv.constraint && !st.history.empty()) {
        // joint selector update on the gated manifold loss at the most
        // recently visited task
        const Task& gate_task = st.history.entries().back().task;
        Tensor pts = collocation_points(gate_task, st.virt_rng, cfg.collocation,
                                        lv.learner.init.input_width());
        auto mb = manifold_breakdown(*lv.constraint, gate_task, lv.learner.init, pts,
                                     st.virt_rng);
        auto grads = gate_gradient(*lv.constraint, gate_task, mb.penalties);
        for (std::size_t m = 0; m < grads.size(); ++m)
          for (std::size_t j = 0; j < grads[m].size(); ++j)
            lv.constraint->selector.w[m][j] -= cfg.selector_lr * grads[m][j];
        out.gate_means = mb.gates;
      }
    } else {
      family_outer_step(h, k, lv.learner.init, prior, cfg, st, lv.outer_lr, out);
    }
    if (!out.task_losses.empty())
      check_finite(composite_meta_loss(lv, out.task_losses, out.virtual_losses), st.step);
    log_metrics(metrics, cfg, st, k, lv, out, s);
    ++st.step;
  }
}

}  // namespace

void train_level_basic(Hierarchy& h, std::size_t k, const RunConfig& cfg, TrainState& st,
                       std::vector<MetricsRecord>& metrics) {
  train_level_common(h, k, cfg, st, metrics, false, false, false);
}

void train_level_explore(Hierarchy& h, std::size_t k, const RunConfig& cfg, TrainState& st,
                         std::vector<MetricsRecord>& metrics) {
  MetaLevel& lv = h.level(k);
  if (k == 1 && lv.lambda_virtual > 0.0 && !lv.generator)
    throw std::invalid_argument("train_level_explore: generator not initialised");
  train_level_common(h, k, cfg, st, metrics, false, false, false);
}

void train_level_efficient(Hierarchy& h, std::size_t k, const RunConfig& cfg,
                           TrainState& st, std::vector<MetricsRecord>& metrics) {
  if (st.buffer.capacity() == 0)
    throw std::invalid_argument("train_level_efficient: buffer capacity must be positive");
  train_level_common(h, k, cfg, st, metrics, cfg.use_surrogate, cfg.buffer_fraction > 0.0,
                     cfg.curriculum);
}

void train_hierarchy(Hierarchy& h, const RunConfig& cfg, TrainState& st,
                     std::vector<MetricsRecord>& metrics) {
  for (std::size_t i = 0; i < h.levels.size(); ++i) {
    std::size_t k = h.levels[i].index;  // stored K..1 descending
    switch (cfg.variant) {
      case AlgorithmVariant::basic: train_level_basic(h, k, cfg, st, metrics); break;
      case AlgorithmVariant::explore: train_level_explore(h, k, cfg, st, metrics); break;
      case AlgorithmVariant::efficient: train_level_efficient(h, k, cfg, st, metrics); break;
    }
  }
}

void train_plain_reference(Mlp& init, const RunConfig& cfg, TrainState& st,
                           std::vector<MetricsRecord>& metrics) {
  LearnerParams lp;
  lp.init = init;
  MetaLevel shim;  // carries nothing but the logging interface
  shim.index = 1;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    StepOutcome out;
    level1_outer_step(init, lp, shim.outer_lr, cfg.prior, cfg, st, nullptr, out, false,
                      false);
    shim.learner.init = init;
    check_finite(composite_meta_loss(shim, out.task_losses, out.virtual_losses), st.step);
    log_metrics(metrics, cfg, st, 1, shim, out, s);
    ++st.step;
  }
}

void promote(Hierarchy& h, std::size_t k) {
  std::size_t K = 0;
  for (const auto& lv : h.levels) K = std::max(K, lv.index);
  if (k >= K) throw std::invalid_argument("promote: no level above " + std::to_string(k));
  h.level(k + 1).learner = h.level(k).learner;  // value copy, no aliasing
}

}  // namespace metastack
