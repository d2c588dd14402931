#include "metastack/learners.hpp"

#include <cmath>
#include <stdexcept>

namespace metastack {

LearnerMode learner_mode_from_string(const std::string& s) {
  if (s == "init_based") return LearnerMode::init_based;
  if (s == "hypernetwork") return LearnerMode::hypernetwork;
  throw std::invalid_argument("unknown learner mode: " + s);
}

std::string to_string(LearnerMode m) {
  return m == LearnerMode::init_based ? "init_based" : "hypernetwork";
}

void LearnerParams::validate() const {
  if (alpha <= 0.0) throw std::invalid_argument("learner: alpha must be positive");
  if (init.widths.empty()) throw std::invalid_argument("learner: missing model template");
  if (mode == LearnerMode::hypernetwork) {
    if (hyper.widths.empty()) throw std::invalid_argument("learner: missing hypernetwork");
    if (hyper.output_width() != init.param_count())
      throw std::invalid_argument("learner: hypernetwork output must match model parameter count");
  }
}

Mlp instantiate(const LearnerParams& lp, const Task& task) {
  lp.validate();
  if (lp.mode == LearnerMode::init_based) return lp.init;
  if (task.embedding.size() != lp.hyper.input_width())
    throw std::invalid_argument("instantiate: embedding dimension mismatch with hypernetwork");
  Tensor flat = lp.hyper.forward(Tensor({task.embedding.size()}, task.embedding));
  Mlp model = lp.init;
  model.set_flat_params(flat.data);
  return model;
}

double task_loss(const Mlp& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("task_loss: empty dataset");
  Tape t;
  auto vars = model.lift(t, false);
  VarId out = model.forward_on(t, vars, t.constant(data.inputs));
  double loss = t.value(t.mse(out, t.constant(data.targets))).item();
  if (!std::isfinite(loss)) throw std::runtime_error("task_loss: non-finite loss");
  return loss;
}

std::vector<Tensor> task_loss_grad(const Mlp& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("task_loss_grad: empty dataset");
  Tape t;
  auto vars = model.lift(t);
  VarId loss = t.mse(model.forward_on(t, vars, t.constant(data.inputs)),
                     t.constant(data.targets));
  return t.gradients(loss, vars.all());
}

AdaptedModel inner_adapt(const LearnerParams& lp, Mlp model, const Dataset& data,
                         std::int64_t task_id) {
  lp.validate();
  for (std::size_t s = 0; s < lp.inner_steps; ++s) {
    Tape t;
    auto vars = model.lift(t);
    VarId loss = t.mse(model.forward_on(t, vars, t.constant(data.inputs)),
                       t.constant(data.targets));
    if (!std::isfinite(t.value(loss).item()))
      throw std::runtime_error("inner_adapt: non-finite loss at step " + std::to_string(s));
    auto grads = t.gradients(loss, vars.all());
    std::size_t gi = 0;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      for (std::size_t j = 0; j < model.weights[l].size(); ++j)
        model.weights[l].data[j] -= lp.alpha * grads[gi].data[j];
      ++gi;
      for (std::size_t j = 0; j < model.biases[l].size(); ++j)
        model.biases[l].data[j] -= lp.alpha * grads[gi].data[j];
      ++gi;
    }
  }
  AdaptedModel am;
  am.final_loss = task_loss(model, data);
  am.model = std::move(model);
  am.task_id = task_id;
  return am;
}

VarId surrogate_loss_on(Tape& t, const Mlp& model, const Mlp::Vars& vars,
                        const Dataset& data, double lambda_s) {
  if (lambda_s < 0.0) throw std::invalid_argument("surrogate_loss: lambda_s must be >= 0");
  if (data.size() == 0) throw std::invalid_argument("surrogate_loss: empty dataset");
  VarId out = model.forward_on(t, vars, t.constant(data.inputs));
  VarId sq = t.sum(t.square(t.sub(out, t.constant(data.targets))));
  if (lambda_s == 0.0) return sq;
  // grad-graph of the summed output w.r.t. parameters, squared and summed;
  // the graph stays differentiable so callers can take further gradients
  auto g = t.grad_graph(t.sum(out));
  VarId norm = t.constant(Tensor::scalar(0.0));
  for (VarId p : vars.all()) {
    auto it = g.find(p);
    if (it != g.end()) norm = t.add(norm, t.sum(t.square(it->second)));
  }
  return t.add(sq, t.mul_scalar(norm, lambda_s));
}

double surrogate_loss(const Mlp& model, const Dataset& data, double lambda_s) {
  Tape t;
  // params must be leaves: the penalty differentiates through them
  auto vars = model.lift(t);
  return t.value(surrogate_loss_on(t, model, vars, data, lambda_s)).item();
}

std::vector<Tensor> surrogate_grad(const Mlp& model, const Dataset& data, double lambda_s) {
  Tape t;
  auto vars = model.lift(t);
  VarId loss = surrogate_loss_on(t, model, vars, data, lambda_s);
  return t.gradients(loss, vars.all());
}

Dataset equilibrium_dataset(const Task& task) {
  if (task.domain != TaskDomain::game || !task.game)
    throw std::invalid_argument("equilibrium_dataset: not a game task");
  const NormalFormGame& g = *task.game;
  StrategyProfile target;
  if (g.action_counts[0] == 2 && g.action_counts[1] == 2) {
    auto res = mixed_nash_2x2(g);
    if (res.profiles.empty())
      throw std::runtime_error("equilibrium_dataset: no equilibrium found");
    target = res.profiles.front();
  } else {
    auto pure = pure_nash(g);
    if (pure.empty()) throw std::runtime_error("equilibrium_dataset: no pure equilibrium");
    target = pure.front();
  }
  Dataset d;
  d.inputs = Tensor::zeros({1, task.embedding.size()});
  for (std::size_t i = 0; i < task.embedding.size(); ++i)
    d.inputs.at(0, i) = task.embedding[i];
  std::vector<double> y = target.probs[0];
  y.insert(y.end(), target.probs[1].begin(), target.probs[1].end());
  d.targets = Tensor::zeros({1, y.size()});
  for (std::size_t i = 0; i < y.size(); ++i) d.targets.at(0, i) = y[i];
  return d;
}

Dataset learner_dataset(const Task& task, RngStream& rng) {
  if (task.domain == TaskDomain::polynomial) return generate_dataset(task, rng);
  return equilibrium_dataset(task);
}

}  // namespace metastack
