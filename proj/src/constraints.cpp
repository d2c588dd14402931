#include "metastack/constraints.hpp"

#include <cmath>
#include <stdexcept>

namespace metastack {

ModuleKind module_kind_from_string(const std::string& s) {
  if (s == "rotation_SO2") return ModuleKind::rotation_SO2;
  if (s == "translation_R2") return ModuleKind::translation_R2;
  if (s == "scaling") return ModuleKind::scaling;
  throw std::invalid_argument("unknown structural module kind: " + s);
}

std::string to_string(ModuleKind k) {
  switch (k) {
    case ModuleKind::rotation_SO2: return "rotation_SO2";
    case ModuleKind::translation_R2: return "translation_R2";
    case ModuleKind::scaling: return "scaling";
  }
  return "?";
}

void StructuralModule::validate() const {
  if (!(param_lo <= param_hi)) throw std::invalid_argument("module: empty parameter range");
  if (group_samples == 0) throw std::invalid_argument("module: need at least one group sample");
  constexpr double two_pi = 6.283185307179587;
  if (kind == ModuleKind::rotation_SO2 && (param_lo < 0.0 || param_hi >= two_pi + 1e-12))
    throw std::invalid_argument("module: rotation angles must lie in [0, 2pi)");
  if (kind == ModuleKind::scaling && param_lo <= 0.0)
    throw std::invalid_argument("module: scaling factors must be positive");
}

StructuralModule make_rotation_module(double angle_lo, double angle_hi) {
  StructuralModule m;
  m.kind = ModuleKind::rotation_SO2;
  m.param_lo = angle_lo;
  m.param_hi = angle_hi;
  m.validate();
  return m;
}

StructuralModule make_translation_module(double offset_lo, double offset_hi) {
  StructuralModule m;
  m.kind = ModuleKind::translation_R2;
  m.param_lo = offset_lo;
  m.param_hi = offset_hi;
  m.validate();
  return m;
}

StructuralModule make_scaling_module(double factor_lo, double factor_hi) {
  StructuralModule m;
  m.kind = ModuleKind::scaling;
  m.param_lo = factor_lo;
  m.param_hi = factor_hi;
  m.validate();
  return m;
}

void SoftConstraint::validate() const {
  if (modules.empty()) throw std::invalid_argument("constraint: need at least one module");
  if (selector.w.size() != modules.size() || penalty_weights.size() != modules.size())
    throw std::invalid_argument("constraint: selector/weight count must match module count");
  for (const auto& m : modules) m.validate();
  for (const auto& wi : selector.w)
    for (double v : wi)
      if (!std::isfinite(v)) throw std::invalid_argument("constraint: selector weights must be finite");
}

SoftConstraint make_soft_constraint(std::vector<StructuralModule> modules,
                                    std::size_t embed_dim) {
  SoftConstraint sc;
  sc.selector.w.assign(modules.size(), std::vector<double>(embed_dim, 0.0));
  sc.penalty_weights.assign(modules.size(), 1.0);
  sc.modules = std::move(modules);
  sc.validate();
  return sc;
}

std::vector<double> selector_gate(const SelectorWeights& sw, const Task& task) {
  std::vector<double> gates;
  gates.reserve(sw.w.size());
  for (const auto& wi : sw.w) {
    if (wi.size() != task.embedding.size())
      throw std::invalid_argument("selector_gate: embedding dimension mismatch");
    double z = 0.0;
    for (std::size_t j = 0; j < wi.size(); ++j) z += wi[j] * task.embedding[j];
    gates.push_back(stable_sigmoid(z));
  }
  return gates;
}

namespace {

// g.x for a single group element; u is the module's sampled parameter
// (angle, offset, or factor; translation uses a second draw for dim 1)
Tensor apply_action(const StructuralModule& m, const Tensor& points, double u, double u2) {
  Tensor out = points;
  std::size_t n = points.rows();
  switch (m.kind) {
    case ModuleKind::rotation_SO2: {
      double c = std::cos(u), s = std::sin(u);
      for (std::size_t i = 0; i < n; ++i) {
        double x = points.at(i, 0), y = points.at(i, 1);
        out.at(i, 0) = c * x - s * y;
        out.at(i, 1) = s * x + c * y;
      }
      return out;
    }
    case ModuleKind::translation_R2:
      for (std::size_t i = 0; i < n; ++i) {
        out.at(i, 0) += u;
        out.at(i, 1) += u2;
      }
      return out;
    case ModuleKind::scaling:
      for (double& v : out.data) v *= u;
      return out;
  }
  throw std::logic_error("unreachable module kind");
}

}  // namespace

double equivariance_penalty(const StructuralModule& module, const Mlp& model,
                            const Tensor& points, RngStream& rng) {
  module.validate();
  if (points.shape.size() != 2 || points.rows() == 0)
    throw std::invalid_argument("equivariance_penalty: need a nonempty point matrix");
  bool planar = module.kind != ModuleKind::scaling;
  if (planar && (model.input_width() != 2 || model.output_width() != 2))
    throw std::invalid_argument("equivariance_penalty: planar actions need 2-D model I/O");
  if (model.input_width() != points.cols() || model.output_width() != model.input_width())
    throw std::invalid_argument("equivariance_penalty: model I/O mismatch with group action");

  Tensor fx = model.forward(points);
  double total = 0.0;
  for (std::size_t s = 0; s < module.group_samples; ++s) {
    double u = rng.uniform(module.param_lo, module.param_hi);
    double u2 = module.kind == ModuleKind::translation_R2
                    ? rng.uniform(module.param_lo, module.param_hi)
                    : 0.0;
    Tensor f_gx = model.forward(apply_action(module, points, u, u2));
    Tensor g_fx = apply_action(module, fx, u, u2);
    for (std::size_t i = 0; i < f_gx.size(); ++i) {
      double d = f_gx.data[i] - g_fx.data[i];
      total += d * d;
    }
  }
  return total / double(module.group_samples * points.rows());
}

ManifoldBreakdown manifold_breakdown(const SoftConstraint& sc, const Task& task,
                                     const Mlp& model, const Tensor& points,
                                     RngStream& rng) {
  sc.validate();
  ManifoldBreakdown mb;
  mb.gates = selector_gate(sc.selector, task);
  for (std::size_t i = 0; i < sc.modules.size(); ++i) {
    double p = equivariance_penalty(sc.modules[i], model, points, rng);
    mb.penalties.push_back(p);
    mb.total += mb.gates[i] * sc.penalty_weights[i] * p;
  }
  return mb;
}

double manifold_loss(const SoftConstraint& sc, const Task& task, const Mlp& model,
                     const Tensor& points, RngStream& rng) {
  return manifold_breakdown(sc, task, model, points, rng).total;
}

std::vector<std::vector<double>> gate_gradient(const SoftConstraint& sc, const Task& task,
                                               const std::vector<double>& penalties) {
  if (penalties.size() != sc.modules.size())
    throw std::invalid_argument("gate_gradient: penalty count mismatch");
  auto gates = selector_gate(sc.selector, task);
  std::vector<std::vector<double>> grads;
  for (std::size_t i = 0; i < sc.modules.size(); ++i) {
    double coef = gates[i] * (1.0 - gates[i]) * sc.penalty_weights[i] * penalties[i];
    std::vector<double> gi(task.embedding.size());
    for (std::size_t j = 0; j < gi.size(); ++j) gi[j] = coef * task.embedding[j];
    grads.push_back(std::move(gi));
  }
  return grads;
}

Tensor collocation_points(const Task& task, RngStream& rng, std::size_t count,
                          std::size_t dim) {
  if (count == 0 || dim == 0)
    throw std::invalid_argument("collocation_points: count and dim must be positive");
  double lo = -1.0, hi = 1.0;
  if (task.poly) {
    lo = task.poly->lo;
    hi = task.poly->hi;
  }
  Tensor pts = Tensor::zeros({count, dim});
  for (double& v : pts.data) v = rng.uniform(lo, hi);
  return pts;
}

Dataset sample_virtual_direct(const SoftConstraint& sc, const Task& base, RngStream& rng,
                              std::size_t count) {
  sc.validate();
  if (base.domain != TaskDomain::polynomial)
    throw std::invalid_argument(
        "sample_virtual_direct: constraint intractable for this domain; use the adversarial path");
  Dataset src = generate_dataset(base, rng);
  Dataset out;
  out.inputs = Tensor::zeros({count, 1});
  out.targets = Tensor::zeros({count, 1});
  Tensor pt = Tensor::zeros({1, 2});
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = rng.index(src.size());
    const StructuralModule& m = sc.modules[rng.index(sc.modules.size())];
    double u = rng.uniform(m.param_lo, m.param_hi);
    double u2 = m.kind == ModuleKind::translation_R2 ? rng.uniform(m.param_lo, m.param_hi) : 0.0;
    pt.at(0, 0) = src.inputs.at(j, 0);
    pt.at(0, 1) = src.targets.at(j, 0);
    Tensor moved = apply_action(m, pt, u, u2);
    out.inputs.at(i, 0) = moved.at(0, 0);
    out.targets.at(i, 0) = moved.at(0, 1);
  }
  return out;
}

std::vector<bool> pruned_modules(const std::vector<double>& mean_gates, double threshold) {
  std::vector<bool> pruned;
  pruned.reserve(mean_gates.size());
  for (double g : mean_gates) pruned.push_back(g < threshold);
  return pruned;
}

}  // namespace metastack
