#pragma once

#include <string>
#include <vector>

#include "metastack/learners.hpp"
#include "metastack/mlp.hpp"
#include "metastack/tasks.hpp"

namespace metastack {

enum class ModuleKind { rotation_SO2, translation_R2, scaling };

ModuleKind module_kind_from_string(const std::string& s);
std::string to_string(ModuleKind k);

/// One symmetry family with the parameter range its group elements are
/// drawn from.
struct StructuralModule {
  ModuleKind kind = ModuleKind::rotation_SO2;
  double param_lo = 0.0;   // angle / offset / factor lower bound
  double param_hi = 6.283185307179586;
  std::size_t group_samples = 4;  // elements drawn per penalty evaluation

  void validate() const;
};

StructuralModule make_rotation_module(double angle_lo = 0.0, double angle_hi = 6.283185307179586);
StructuralModule make_translation_module(double offset_lo = -1.0, double offset_hi = 1.0);
StructuralModule make_scaling_module(double factor_lo = 0.5, double factor_hi = 2.0);

/// One selector vector w_i per module, each of embedding dimension m.
struct SelectorWeights {
  std::vector<std::vector<double>> w;
};

struct SoftConstraint {
  std::vector<StructuralModule> modules;
  SelectorWeights selector;
  std::vector<double> penalty_weights;  // per module, default 1

  void validate() const;
};

SoftConstraint make_soft_constraint(std::vector<StructuralModule> modules,
                                    std::size_t embed_dim);

/// s_i = sigmoid(w_i . phi(tau)) per module; each strictly in (0,1).
std::vector<double> selector_gate(const SelectorWeights& sw, const Task& task);

/// Mean over points and sampled group elements of ||f(g.x) - g.f(x)||^2.
/// Model I/O must be 2-D for rotation/translation actions.
double equivariance_penalty(const StructuralModule& module, const Mlp& model,
                            const Tensor& points, RngStream& rng);

struct ManifoldBreakdown {
  std::vector<double> gates;
  std::vector<double> penalties;
  double total = 0.0;  // sum_i gate_i * weight_i * penalty_i
};

ManifoldBreakdown manifold_breakdown(const SoftConstraint& sc, const Task& task,
                                     const Mlp& model, const Tensor& points,
                                     RngStream& rng);

double manifold_loss(const SoftConstraint& sc, const Task& task, const Mlp& model,
                     const Tensor& points, RngStream& rng);

/// d manifold_loss / d w_i given the per-module penalties; the penalties
/// themselves do not depend on the selector.
std::vector<std::vector<double>> gate_gradient(const SoftConstraint& sc, const Task& task,
                                               const std::vector<double>& penalties);

/// Uniform collocation points on the task's input box (2-D by default).
Tensor collocation_points(const Task& task, RngStream& rng, std::size_t count = 32,
                          std::size_t dim = 2);

/// Constraint-consistent virtual points: random group actions applied to
/// base-task data, treating each (x, y) sample pair as an R^2 point.
Dataset sample_virtual_direct(const SoftConstraint& sc, const Task& base, RngStream& rng,
                              std::size_t count);

/// Modules whose mean gate fell below the pruning threshold.
std::vector<bool> pruned_modules(const std::vector<double>& mean_gates,
                                 double threshold = 0.05);

}  // namespace metastack
