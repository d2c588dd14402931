#include "metastack/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace metastack {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Mlp Mlp::make(std::vector<std::size_t> widths, std::vector<Activation> acts) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1)
    throw std::invalid_argument("Mlp: widths/activations mismatch");
  Mlp m;
  m.widths = std::move(widths);
  m.acts = std::move(acts);
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.weights.push_back(Tensor::zeros({m.widths[l + 1], m.widths[l]}));
    m.biases.push_back(Tensor::zeros({m.widths[l + 1]}));
  }
  return m;
}

Mlp Mlp::make_uniform(std::vector<std::size_t> widths, Activation hidden, Activation output) {
  std::vector<Activation> acts(widths.size() - 1, hidden);
  acts.back() = output;
  return make(std::move(widths), std::move(acts));
}

void Mlp::init_random(RngStream& rng, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    double s = scale / std::sqrt(double(widths[l]));
    for (double& v : weights[l].data) v = rng.normal(0.0, s);
    for (double& v : biases[l].data) v = 0.0;
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double> Mlp::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.insert(out.end(), weights[l].data.begin(), weights[l].data.end());
    out.insert(out.end(), biases[l].data.begin(), biases[l].data.end());
  }
  return out;
}

void Mlp::set_flat_params(std::span<const double> p) {
  if (p.size() != param_count()) throw std::invalid_argument("set_flat_params: size mismatch");
  std::size_t off = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double& v : weights[l].data) v = p[off++];
    for (double& v : biases[l].data) v = p[off++];
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tape t;
  Vars vars = lift(t, false);
  bool single = x.shape.size() == 1;
  Tensor in = single ? Tensor::matrix(1, x.size(), x.data) : x;
  VarId out = forward_on(t, vars, t.constant(in));
  Tensor result = t.value(out);
  if (single) return Tensor({result.cols()}, result.data);
  return result;
}

Mlp::Vars Mlp::lift(Tape& t, bool trainable) const {
  Vars v;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    v.w.push_back(trainable ? t.leaf(weights[l]) : t.constant(weights[l]));
    v.b.push_back(trainable ? t.leaf(biases[l]) : t.constant(biases[l]));
  }
  return v;
}

std::vector<VarId> Mlp::Vars::all() const {
  std::vector<VarId> out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.push_back(w[l]);
    out.push_back(b[l]);
  }
  return out;
}

namespace {

VarId apply_activation(Tape& t, Activation a, VarId z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return t.tanh_(z);
    case Activation::relu: return t.relu_(z);
    case Activation::sigmoid: return t.sigmoid_(z);
    case Activation::softmax: return t.softmax(z);
  }
  throw std::logic_error("unreachable activation");
}

}  // namespace

VarId Mlp::forward_on(Tape& t, const Vars& vars, VarId x) const {
  if (t.value(x).shape.size() != 2 || t.value(x).cols() != input_width())
    throw std::invalid_argument("Mlp forward: input width mismatch");
  VarId h = x;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    VarId z = t.add_rowvec(t.matmul(h, t.transpose(vars.w[l])), vars.b[l]);
    h = apply_activation(t, acts[l], z);
  }
  return h;
}

VarId Mlp::forward_flat(Tape& t, VarId flat, VarId x) const {
  if (t.value(flat).size() != param_count())
    throw std::invalid_argument("forward_flat: parameter count mismatch");
  Vars vars;
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    std::size_t wn = widths[l + 1] * widths[l];
    vars.w.push_back(t.reshape(t.slice(flat, off, wn), {widths[l + 1], widths[l]}));
    off += wn;
    vars.b.push_back(t.slice(flat, off, widths[l + 1]));
    off += widths[l + 1];
  }
  return forward_on(t, vars, x);
}

void Mlp::read_back(const Tape& t, const Vars& vars) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] = t.value(vars.w[l]);
    biases[l] = t.value(vars.b[l]);
  }
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState o;
  o.kind = Kind::sgd;
  o.lr = lr;
  return o;
}

OptimizerState OptimizerState::adam(double lr) {
  OptimizerState o;
  o.kind = Kind::adam;
  o.lr = lr;
  return o;
}

void OptimizerState::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("step: param/grad count mismatch");
  if (lr <= 0.0) throw std::invalid_argument("step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].same_shape(grads[i]))
      throw std::invalid_argument("step: param/grad shape mismatch");

  if (kind == Kind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].size(); ++j)
        params[i].data[j] -= lr * grads[i].data[j];
    ++step_count;
    return;
  }

  if (m.empty()) {
    for (const Tensor& p : params) {
      m.push_back(Tensor::zeros(p.shape));
      v.push_back(Tensor::zeros(p.shape));
    }
  }
  ++step_count;
  double bc1 = 1.0 - std::pow(beta1, double(step_count));
  double bc2 = 1.0 - std::pow(beta2, double(step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      double g = grads[i].data[j];
      m[i].data[j] = beta1 * m[i].data[j] + (1.0 - beta1) * g;
      v[i].data[j] = beta2 * v[i].data[j] + (1.0 - beta2) * g * g;
      double mh = m[i].data[j] / bc1;
      double vh = v[i].data[j] / bc2;
      params[i].data[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::vector<double> params, double step) {
  if (step <= 0.0) throw std::invalid_argument("fd_gradient: step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double orig = params[i];
    params[i] = orig + step;
    double fp = f(params);
    params[i] = orig - step;
    double fm = f(params);
    params[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double max_rel_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("max_rel_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace metastack
