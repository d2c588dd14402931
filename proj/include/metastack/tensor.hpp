#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace metastack {

/// Dense row-major tensor of doubles. Shapes are explicit; every op
/// validates them and throws std::invalid_argument on mismatch.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return size() == 1; }
  double item() const;

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::size_t rows() const;
  std::size_t cols() const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

/// Numerically stable scalar softplus: ln(1 + e^x) without overflow.
double stable_softplus(double x);
double stable_sigmoid(double x);

using VarId = std::size_t;

/// Reverse-mode tape. Ops record their inputs and a VJP builder that
/// expresses the backward rule with tape ops, so gradients are themselves
/// differentiable (needed for the gradient-norm surrogate penalty).
class Tape {
 public:
  VarId leaf(Tensor v);
  VarId constant(Tensor v);

  const Tensor& value(VarId id) const;
  bool requires_grad(VarId id) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  /// Builds the gradient graph of a scalar loss with respect to every
  /// reachable differentiable node. Returns node id -> gradient var id.
  std::unordered_map<VarId, VarId> grad_graph(VarId loss);

  /// Convenience: gradient values for the requested vars; untouched
  /// leaves get zeros of their own shape.
  std::vector<Tensor> gradients(VarId loss, const std::vector<VarId>& wrt);

  // --- ops -------------------------------------------------------------
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);  // elementwise
  VarId div(VarId a, VarId b);  // elementwise
  VarId neg(VarId a);
  VarId add_scalar(VarId a, double c);
  VarId mul_scalar(VarId a, double c);
  /// Elementwise scale of a tensor by a scalar var.
  VarId scale_by(VarId a, VarId s);
  VarId matmul(VarId a, VarId b);
  VarId transpose(VarId a);
  VarId add_rowvec(VarId a, VarId v);  // [m,n] + [n] broadcast over rows
  VarId col_sum(VarId a);              // [m,n] -> [n]
  VarId broadcast_rows(VarId v, std::size_t m);  // [n] -> [m,n]
  VarId broadcast_to(VarId s, std::vector<std::size_t> shape);  // scalar fill

  VarId tanh_(VarId a);
  VarId relu_(VarId a);
  VarId sigmoid_(VarId a);
  VarId softplus_(VarId a);
  VarId exp_(VarId a);
  VarId log_(VarId a);
  VarId sqrt_(VarId a);
  VarId abs_(VarId a);
  VarId square(VarId a);
  VarId softmax(VarId a);  // vector or per-row for matrices

  VarId sum(VarId a);
  VarId mean(VarId a);
  VarId slice(VarId a, std::size_t offset, std::size_t len);  // flat view
  /// Embeds a flat tensor at `offset` inside zeros of the given shape.
  VarId pad_slice(VarId a, std::size_t offset, std::vector<std::size_t> shape);
  VarId reshape(VarId a, std::vector<std::size_t> shape);
  /// Clamp with straight-through gradient (identity backward).
  VarId clamp_st(VarId a, double lo, double hi);

  // helpers built from the primitives above
  VarId dot(VarId a, VarId b) { return sum(mul(a, b)); }
  VarId norm_sq(VarId a) { return sum(square(a)); }
  VarId mse(VarId pred, VarId target) { return mean(square(sub(pred, target))); }

 private:
  // VJP builder: given the output-gradient var, returns one gradient var
  // per parent (or kNoGrad for non-differentiable inputs).
  static constexpr VarId kNoGrad = static_cast<VarId>(-1);
  using Vjp = std::function<std::vector<VarId>(Tape&, VarId g)>;

  struct Node {
    Tensor value;
    std::vector<VarId> parents;
    Vjp vjp;
    bool requires_grad = false;
  };

  VarId push(Tensor value, std::vector<VarId> parents, Vjp vjp);
  std::vector<Node> nodes_;
};

}  // namespace metastack
