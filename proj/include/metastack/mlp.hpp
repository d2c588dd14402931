#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metastack/rng.hpp"
#include "metastack/tensor.hpp"

namespace metastack {

enum class Activation { identity, tanh, relu, sigmoid, softmax };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Small dense feed-forward network. Weights are stored as [out,in]
/// matrices; forward accepts a single sample [in] or a batch [n,in].
struct Mlp {
  std::vector<std::size_t> widths;  // includes input width
  std::vector<Activation> acts;     // one per layer
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static Mlp make(std::vector<std::size_t> widths, std::vector<Activation> acts);
  static Mlp make_uniform(std::vector<std::size_t> widths, Activation hidden,
                  Activation output = Activation::identity);

  void init_random(RngStream& rng, double scale = 0.5);

  std::size_t num_layers() const { return acts.size(); }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t param_count() const;

  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> p);

  Tensor forward(const Tensor& x) const;

  /// Tape-recorded forward. Vars holds one var per weight/bias tensor.
  struct Vars {
    std::vector<VarId> w, b;
    std::vector<VarId> all() const;
  };
  Vars lift(Tape& t, bool trainable = true) const;
  VarId forward_on(Tape& t, const Vars& vars, VarId x) const;
  /// Forward where all parameters come from one flat vector var (used by
  /// hypernetwork instantiation); layout matches flat_params().
  VarId forward_flat(Tape& t, VarId flat, VarId x) const;

  /// Reads parameter values for this net's vars back out of a tape.
  void read_back(const Tape& t, const Vars& vars);
};

/// First-order optimisers over a list of parameter tensors.
struct OptimizerState {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::vector<Tensor> m, v;  // adam moments, lazily shaped

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr);

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
};

/// Central finite differences, the independent oracle used by tests and
/// the gradcheck command.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::vector<double> params, double step);

/// Max relative error between two gradient vectors, with an absolute
/// floor so near-zero entries do not blow up the ratio.
double max_rel_error(std::span<const double> a, std::span<const double> b,
                     double floor = 1e-8);

}  // namespace metastack
