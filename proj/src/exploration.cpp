#include "metastack/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metastack {

void ExplorationParams::validate() const {
  if (lambda_mix < 0.0 || lambda_mix > 1.0)
    throw std::invalid_argument("exploration: lambda_mix must lie in [0,1]");
  if (delta <= 0.0) throw std::invalid_argument("exploration: delta must be positive");
  if (eps1 < 0.0 || eps2 < 0.0) throw std::invalid_argument("exploration: thresholds must be >= 0");
  if (alpha1 >= 0.0 || alpha2 >= 0.0)
    throw std::invalid_argument("exploration: floors alpha must be negative");
  if (beta < 0.0 || gamma < 0.0)
    throw std::invalid_argument("exploration: beta and gamma must be >= 0");
  if (gamma_ref <= 0.0) throw std::invalid_argument("exploration: gamma_ref must be positive");
}

ExploreSignal explore_signal_from_string(const std::string& s) {
  if (s == "contextual_smooth") return ExploreSignal::contextual_smooth;
  if (s == "contextual_hard") return ExploreSignal::contextual_hard;
  if (s == "kernel") return ExploreSignal::kernel;
  if (s == "entropy") return ExploreSignal::entropy;
  if (s == "grad_norm") return ExploreSignal::grad_norm;
  throw std::invalid_argument("unknown exploration signal: " + s);
}

std::string to_string(ExploreSignal s) {
  switch (s) {
    case ExploreSignal::contextual_smooth: return "contextual_smooth";
    case ExploreSignal::contextual_hard: return "contextual_hard";
    case ExploreSignal::kernel: return "kernel";
    case ExploreSignal::entropy: return "entropy";
    case ExploreSignal::grad_norm: return "grad_norm";
  }
  return "?";
}

double delta_loss(double loss_tau, double loss_ref) { return loss_tau - loss_ref; }

ScoreBreakdown score_hard(const ExplorationParams& ep, double delta_l, double d) {
  ep.validate();
  if (d < 0.0) throw std::invalid_argument("score: distance must be >= 0");
  ScoreBreakdown sb;
  sb.delta_l = delta_l;
  sb.d = d;
  sb.term1 = std::max(ep.alpha1, delta_l / (d + ep.delta) - ep.eps1);
  sb.term2 = std::max(ep.alpha2, d / (1.0 + std::abs(delta_l)) - ep.eps2);
  sb.total = ep.lambda_mix * sb.term1 + (1.0 - ep.lambda_mix) * sb.term2;
  return sb;
}

ScoreBreakdown score_smooth(const ExplorationParams& ep, double delta_l, double d) {
  ep.validate();
  if (d < 0.0) throw std::invalid_argument("score: distance must be >= 0");
  ScoreBreakdown sb;
  sb.delta_l = delta_l;
  sb.d = d;
  sb.term1 = stable_softplus(delta_l / (d + ep.delta) - ep.eps1 - ep.alpha1) + ep.alpha1;
  sb.term2 = stable_softplus(d / (1.0 + std::abs(delta_l)) - ep.eps2 - ep.alpha2) + ep.alpha2;
  sb.total = ep.lambda_mix * sb.term1 + (1.0 - ep.lambda_mix) * sb.term2;
  return sb;
}

VarId score_smooth_on(Tape& t, const ExplorationParams& ep, VarId delta_l, VarId d) {
  ep.validate();
  VarId r1 = t.div(delta_l, t.add_scalar(d, ep.delta));
  VarId t1 = t.add_scalar(t.softplus_(t.add_scalar(r1, -ep.eps1 - ep.alpha1)), ep.alpha1);
  VarId r2 = t.div(d, t.add_scalar(t.abs_(delta_l), 1.0));
  VarId t2 = t.add_scalar(t.softplus_(t.add_scalar(r2, -ep.eps2 - ep.alpha2)), ep.alpha2);
  return t.add(t.mul_scalar(t1, ep.lambda_mix), t.mul_scalar(t2, 1.0 - ep.lambda_mix));
}

KernelRefs kernel_refs(const TaskHistory& history, const Task& task, double gamma_ref) {
  if (history.empty()) throw std::invalid_argument("kernel_refs: empty history");
  if (gamma_ref <= 0.0) throw std::invalid_argument("kernel_refs: gamma_ref must be positive");
  std::vector<double> dists;
  dists.reserve(history.size());
  for (const auto& e : history.entries()) dists.push_back(task_distance(e.task, task));
  double min_sq = dists[0] * dists[0];
  for (double d : dists) min_sq = std::min(min_sq, d * d);

  KernelRefs kr;
  double total = 0.0;
  for (double d : dists) {
    // shifted by min d^2 so the largest weight is exactly 1 before
    // normalisation; avoids all-zero underflow for distant histories
    double w = std::exp(-gamma_ref * (d * d - min_sq));
    kr.weights.push_back(w);
    total += w;
  }
  for (std::size_t i = 0; i < kr.weights.size(); ++i) {
    kr.weights[i] /= total;
    kr.loss_mean += kr.weights[i] * history.entries()[i].loss;
    kr.dist_mean += kr.weights[i] * dists[i];
  }
  return kr;
}

double score_kernel(const ExplorationParams& ep, const TaskHistory& history,
                    const Task& task, double current_loss) {
  ep.validate();
  KernelRefs kr = kernel_refs(history, task, ep.gamma_ref);
  double r1 = (current_loss - kr.loss_mean) / (kr.dist_mean + ep.delta);
  double dd = kr.dist_mean / (1.0 + std::abs(current_loss - kr.loss_mean));
  return ep.lambda_mix * (stable_softplus(r1 - ep.eps1 - ep.alpha1) + ep.alpha1) +
         (1.0 - ep.lambda_mix) * (stable_softplus(dd - ep.eps2 - ep.alpha2) + ep.alpha2);
}

VarId score_kernel_on(Tape& t, const ExplorationParams& ep, const TaskHistory& history,
                      VarId embedding, VarId current_loss) {
  ep.validate();
  if (history.empty()) throw std::invalid_argument("score_kernel_on: empty history");
  // numeric min d^2 shift (constant w.r.t. differentiation)
  double min_sq = 0.0;
  {
    bool first = true;
    const Tensor& emb = t.value(embedding);
    for (const auto& e : history.entries()) {
      double s = 0.0;
      for (std::size_t j = 0; j < emb.size(); ++j) {
        double d = emb.data[j] - e.task.embedding[j];
        s += d * d;
      }
      if (first || s < min_sq) min_sq = s;
      first = false;
    }
  }
  VarId wsum = t.constant(Tensor::scalar(0.0));
  VarId lsum = wsum, dsum = wsum;
  for (const auto& e : history.entries()) {
    VarId diff = t.sub(embedding, t.constant(Tensor::vector(
                                      std::vector<double>(e.task.embedding))));
    VarId dsq = t.norm_sq(diff);
    VarId dj = t.sqrt_(t.add_scalar(dsq, 1e-18));
    VarId w = t.exp_(t.mul_scalar(t.add_scalar(dsq, -min_sq), -ep.gamma_ref));
    wsum = t.add(wsum, w);
    lsum = t.add(lsum, t.mul_scalar(w, e.loss));
    dsum = t.add(dsum, t.mul(w, dj));
  }
  VarId lbar = t.div(lsum, wsum);
  VarId dbar = t.div(dsum, wsum);
  VarId gap = t.sub(current_loss, lbar);
  VarId r1 = t.div(gap, t.add_scalar(dbar, ep.delta));
  VarId t1 = t.add_scalar(t.softplus_(t.add_scalar(r1, -ep.eps1 - ep.alpha1)), ep.alpha1);
  VarId dd = t.div(dbar, t.add_scalar(t.abs_(gap), 1.0));
  VarId t2 = t.add_scalar(t.softplus_(t.add_scalar(dd, -ep.eps2 - ep.alpha2)), ep.alpha2);
  return t.add(t.mul_scalar(t1, ep.lambda_mix), t.mul_scalar(t2, 1.0 - ep.lambda_mix));
}

double entropy_signal(const Mlp& model, const Tensor& x) {
  if (model.acts.back() != Activation::softmax)
    throw std::invalid_argument("entropy_signal: model lacks a probabilistic head");
  Tensor p = model.forward(x);
  std::size_t n = p.shape.size() == 2 ? p.rows() : 1;
  std::size_t k = p.shape.size() == 2 ? p.cols() : p.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double v = p.data[i * k + j];
      if (v > 0.0) total -= v * std::log(v);
    }
  return total / double(n);
}

double grad_norm_signal(const Mlp& model, const Dataset& data) {
  auto grads = task_loss_grad(model, data);
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

double generator_loss(const ExplorationParams& ep, std::span<const double> scores,
                      std::span<const double> manifold_penalties,
                      std::span<const double> disc_outputs) {
  ep.validate();
  if (scores.empty()) throw std::invalid_argument("generator_loss: empty batch");
  double s = 0.0;
  for (double v : scores) s += v;
  double loss = -s / double(scores.size());
  if (!manifold_penalties.empty()) {
    double m = 0.0;
    for (double v : manifold_penalties) m += v;
    loss += ep.beta * m / double(manifold_penalties.size());
  }
  if (!disc_outputs.empty()) {
    double g = 0.0;
    for (double v : disc_outputs) {
      if (v <= 0.0 || v >= 1.0)
        throw std::invalid_argument("generator_loss: discriminator output outside (0,1)");
      g += std::log(v);
    }
    loss -= ep.gamma * g / double(disc_outputs.size());
  }
  return loss;
}

Generator make_generator(std::size_t z_dim, std::size_t out_dim, RngStream& rng,
                         std::size_t hidden) {
  Generator g;
  g.net = Mlp::make_uniform({z_dim, hidden, hidden, out_dim}, Activation::tanh);
  g.net.init_random(rng);
  return g;
}

Discriminator make_discriminator(std::size_t in_dim, RngStream& rng, std::size_t hidden) {
  Discriminator d;
  d.net = Mlp::make_uniform({in_dim, hidden, hidden, 1}, Activation::tanh,
                            Activation::sigmoid);
  d.net.init_random(rng);
  return d;
}

double discriminator_prob(const Discriminator& disc, const Task& task) {
  Tensor out = disc.net.forward(Tensor({task.embedding.size()}, task.embedding));
  return out.item();
}

namespace {

Tensor embedding_matrix(const std::vector<Task>& tasks, std::size_t dim) {
  Tensor m = Tensor::zeros({tasks.size(), dim});
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].embedding.size() != dim)
      throw std::invalid_argument("discriminator: embedding dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = tasks[i].embedding[j];
  }
  return m;
}

void apply_sgd(Mlp& net, const std::vector<Tensor>& grads, double lr) {
  std::size_t gi = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (std::size_t j = 0; j < net.weights[l].size(); ++j)
      net.weights[l].data[j] -= lr * grads[gi].data[j];
    ++gi;
    for (std::size_t j = 0; j < net.biases[l].size(); ++j)
      net.biases[l].data[j] -= lr * grads[gi].data[j];
    ++gi;
  }
}

}  // namespace

double discriminator_update(Discriminator& disc, const std::vector<Task>& real,
                            const std::vector<Task>& fake, double lr) {
  if (real.empty() || fake.empty())
    throw std::invalid_argument("discriminator_update: both batches must be nonempty");
  std::size_t dim = disc.net.input_width();
  Tape t;
  auto vars = disc.net.lift(t);
  VarId d_real = disc.net.forward_on(t, vars, t.constant(embedding_matrix(real, dim)));
  VarId d_fake = disc.net.forward_on(t, vars, t.constant(embedding_matrix(fake, dim)));
  VarId one_const = t.constant([&] {
    Tensor o = Tensor::zeros({fake.size(), 1});
    for (double& v : o.data) v = 1.0;
    return o;
  }());
  VarId loss = t.add(t.neg(t.mean(t.log_(d_real))),
                     t.neg(t.mean(t.log_(t.sub(one_const, d_fake)))));
  double value = t.value(loss).item();
  auto grads = t.gradients(loss, vars.all());
  apply_sgd(disc.net, grads, lr);
  return value;
}

ExploreRound explore_round(Generator& gen, const ExplorationParams& ep,
                           const Mlp& learner_model, const TaskHistory& history,
                           const PolynomialPrior& prior, RngStream& rng,
                           std::size_t batch, std::int64_t first_id,
                           OptimizerState* gen_opt, const Discriminator* disc,
                           const SoftConstraint* sc, const Mlp* constrained_model) {
  ep.validate();
  prior.validate();
  if (batch == 0) throw std::invalid_argument("explore_round: empty batch");
  if (history.empty()) throw std::invalid_argument("explore_round: empty history");
  if (gen.out_dim() != 3)
    throw std::invalid_argument("explore_round: generator must decode 3 coefficients");

  // latents
  Tensor z = Tensor::zeros({batch, gen.z_dim()});
  for (double& v : z.data) v = rng.normal();

  Tape t;
  auto gvars = gen.net.lift(t, gen_opt != nullptr);
  VarId raw = gen.net.forward_on(t, gvars, t.constant(z));  // [batch, 3]

  // clamp to the prior box, straight-through
  const std::array<std::array<double, 2>, 3> box{prior.a_range, prior.b_range, prior.c_range};
  const Tensor& raw_v = t.value(raw);
  Tensor shift = Tensor::zeros(raw_v.shape);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double v = raw_v.at(i, j);
      double c = std::clamp(v, box[j][0], box[j][1]);
      if (c != v) ++hits;
      shift.at(i, j) = c - v;
    }
  VarId coeffs = t.add(raw, t.constant(shift));

  // constant per-module equivariance penalties (independent of the task)
  std::vector<double> module_penalties;
  if (sc && constrained_model && ep.beta > 0.0) {
    Task probe;
    probe.poly = PolynomialSpec{0, 0, 0, prior.lo, prior.hi, 0, prior.n};
    Tensor pts = collocation_points(probe, rng);
    for (const auto& mod : sc->modules)
      module_penalties.push_back(equivariance_penalty(mod, *constrained_model, pts, rng));
  }

  ExploreRound round;
  VarId score_sum = t.constant(Tensor::scalar(0.0));
  VarId logd_sum = score_sum;
  VarId manifold_sum = score_sum;
  std::vector<double> disc_probs;

  for (std::size_t i = 0; i < batch; ++i) {
    VarId ci = t.slice(coeffs, i * 3, 3);
    const Tensor& cv = t.value(ci);

    Task task;
    task.id = first_id + std::int64_t(i);
    task.domain = TaskDomain::polynomial;
    task.poly = PolynomialSpec{cv.at(0), cv.at(1), cv.at(2), prior.lo, prior.hi,
                               prior.noise, prior.n};
    task.embedding = {cv.at(0), cv.at(1), cv.at(2)};

    const auto& ref = select_reference(history, task);

    // virtual dataset: fresh inputs, targets built from the coefficient
    // vars so the loss differentiates through the generator
    std::vector<double> xs(prior.n), x2(prior.n), ones(prior.n, 1.0);
    for (std::size_t k = 0; k < prior.n; ++k) {
      xs[k] = rng.uniform(prior.lo, prior.hi);
      x2[k] = xs[k] * xs[k];
    }
    Tensor xin = Tensor::zeros({prior.n, 1});
    for (std::size_t k = 0; k < prior.n; ++k) xin.at(k, 0) = xs[k];
    Tensor pred = learner_model.forward(xin);
    VarId y = t.add(t.add(t.scale_by(t.constant(Tensor::vector(x2)), t.slice(ci, 0, 1)),
                          t.scale_by(t.constant(Tensor::vector(xs)), t.slice(ci, 1, 1))),
                    t.scale_by(t.constant(Tensor::vector(ones)), t.slice(ci, 2, 1)));
    VarId loss_v = t.mean(t.square(t.sub(t.constant(Tensor::vector(pred.data)), y)));

    VarId dl = t.add_scalar(loss_v, -ref.loss);
    VarId dist = t.sqrt_(t.add_scalar(
        t.norm_sq(t.sub(ci, t.constant(Tensor::vector(
                                std::vector<double>(ref.task.embedding))))),
        1e-18));
    VarId s = score_smooth_on(t, ep, dl, dist);
    score_sum = t.add(score_sum, s);
    round.scores.push_back(score_smooth(ep, t.value(dl).item(), t.value(dist).item()));
    round.tasks.push_back(std::move(task));

    if (disc && ep.gamma > 0.0) {
      auto dvars = disc->net.lift(t, false);
      VarId prob = disc->net.forward_on(t, dvars, t.reshape(ci, {1, 3}));
      disc_probs.push_back(t.value(prob).item());
      logd_sum = t.add(logd_sum, t.log_(t.reshape(prob, {1})));
    }
    if (!module_penalties.empty()) {
      for (std::size_t m = 0; m < sc->modules.size(); ++m) {
        VarId gate = t.sigmoid_(t.dot(ci, t.constant(Tensor::vector(
                                              std::vector<double>(sc->selector.w[m])))));
        manifold_sum = t.add(manifold_sum,
                             t.mul_scalar(gate, sc->penalty_weights[m] * module_penalties[m]));
      }
    }
  }

  VarId gen_loss = t.mul_scalar(score_sum, -1.0 / double(batch));
  if (!module_penalties.empty())
    gen_loss = t.add(gen_loss, t.mul_scalar(manifold_sum, ep.beta / double(batch)));
  if (disc && ep.gamma > 0.0)
    gen_loss = t.sub(gen_loss, t.mul_scalar(logd_sum, ep.gamma / double(batch)));

  round.gen_loss = t.value(gen_loss).item();
  if (!std::isfinite(round.gen_loss))
    throw std::runtime_error("explore_round: non-finite generator loss");
  for (const auto& sb : round.scores) {
    round.mean_score += sb.total;
    round.max_score = std::max(round.max_score, sb.total);
  }
  round.mean_score /= double(batch);
  round.clamp_hit_rate = double(hits) / double(batch * 3);
  if (!disc_probs.empty()) {
    for (double p : disc_probs) round.d_fake_mean += p;
    round.d_fake_mean /= double(disc_probs.size());
  }

  if (gen_opt) {
    auto grads = t.gradients(gen_loss, gvars.all());
    std::vector<Tensor> params;
    for (std::size_t l = 0; l < gen.net.weights.size(); ++l) {
      params.push_back(gen.net.weights[l]);
      params.push_back(gen.net.biases[l]);
    }
    gen_opt->step(params, grads);
    for (std::size_t l = 0; l < gen.net.weights.size(); ++l) {
      gen.net.weights[l] = params[2 * l];
      gen.net.biases[l] = params[2 * l + 1];
    }
  }
  return round;
}

}  // namespace metastack
