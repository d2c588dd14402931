#include "metastack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metastack {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_error(const std::string& what) {
  throw std::invalid_argument("shape mismatch: " + what);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_product(shape) != data.size()) shape_error("tensor size vs shape");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  std::size_t n = shape_product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (!is_scalar()) shape_error("item() on non-scalar");
  return data[0];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

std::size_t Tensor::rows() const {
  if (shape.size() != 2) shape_error("rows() on non-matrix");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) shape_error("cols() on non-matrix");
  return shape[1];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

VarId Tape::push(Tensor value, std::vector<VarId> parents, Vjp vjp) {
  bool rg = false;
  for (VarId p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(vjp), rg});
  return nodes_.size() - 1;
}

VarId Tape::leaf(Tensor v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr, true});
  return nodes_.size() - 1;
}

VarId Tape::constant(Tensor v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr, false});
  return nodes_.size() - 1;
}

const Tensor& Tape::value(VarId id) const { return nodes_.at(id).value; }
bool Tape::requires_grad(VarId id) const { return nodes_.at(id).requires_grad; }

std::unordered_map<VarId, VarId> Tape::grad_graph(VarId loss) {
  if (!value(loss).is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
  std::size_t limit = loss + 1;  // nodes appended while building vjps are not revisited
  std::unordered_map<VarId, VarId> grads;
  grads[loss] = constant(Tensor::scalar(1.0));
  for (std::size_t i = limit; i-- > 0;) {
    auto it = grads.find(i);
    if (it == grads.end()) continue;
    if (!nodes_[i].requires_grad || !nodes_[i].vjp) continue;
    VarId g = it->second;
    // vjp builders append nodes; copy what we need before the vector may move
    std::vector<VarId> parents = nodes_[i].parents;
    Vjp vjp = nodes_[i].vjp;
    std::vector<VarId> parent_grads = vjp(*this, g);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      VarId pid = parents[p];
      VarId pg = parent_grads[p];
      if (pg == kNoGrad || !nodes_[pid].requires_grad) continue;
      auto pit = grads.find(pid);
      if (pit == grads.end()) {
        grads[pid] = pg;
      } else {
        pit->second = add(pit->second, pg);
      }
    }
  }
  return grads;
}

std::vector<Tensor> Tape::gradients(VarId loss, const std::vector<VarId>& wrt) {
  auto g = grad_graph(loss);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (VarId id : wrt) {
    auto it = g.find(id);
    if (it == g.end()) {
      out.push_back(Tensor::zeros(value(id).shape));
    } else {
      out.push_back(value(it->second));
    }
  }
  return out;
}

// --- elementwise arithmetic -------------------------------------------------

VarId Tape::add(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  return push(std::move(out), {a, b},
              [](Tape&, VarId g) { return std::vector<VarId>{g, g}; });
}

VarId Tape::sub(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
  return push(std::move(out), {a, b},
              [](Tape& t, VarId g) { return std::vector<VarId>{g, t.neg(g)}; });
}

VarId Tape::mul(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, VarId g) {
    return std::vector<VarId>{t.mul(g, b), t.mul(g, a)};
  });
}

VarId Tape::div(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("div: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= tb.data[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, VarId g) {
    VarId ga = t.div(g, b);
    VarId gb = t.neg(t.div(t.mul(g, a), t.mul(b, b)));
    return std::vector<VarId>{ga, gb};
  });
}

VarId Tape::neg(VarId a) { return mul_scalar(a, -1.0); }

VarId Tape::add_scalar(VarId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v += c;
  return push(std::move(out), {a},
              [](Tape&, VarId g) { return std::vector<VarId>{g}; });
}

VarId Tape::mul_scalar(VarId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  return push(std::move(out), {a}, [c](Tape& t, VarId g) {
    return std::vector<VarId>{t.mul_scalar(g, c)};
  });
}

VarId Tape::scale_by(VarId a, VarId s) {
  const Tensor& ts = value(s);
  if (!ts.is_scalar()) throw std::invalid_argument("scale_by: scale must be scalar");
  Tensor out = value(a);
  for (double& v : out.data) v *= ts.item();
  return push(std::move(out), {a, s}, [a, s](Tape& t, VarId g) {
    VarId ga = t.scale_by(g, s);
    VarId gs = t.sum(t.mul(g, a));
    return std::vector<VarId>{ga, gs};
  });
}

// --- linear algebra ----------------------------------------------------------

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows())
    throw std::invalid_argument("matmul: shape mismatch");
  std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = ta.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * tb.at(p, j);
    }
  return push(std::move(out), {a, b}, [a, b](Tape& t, VarId g) {
    VarId ga = t.matmul(g, t.transpose(b));
    VarId gb = t.matmul(t.transpose(a), g);
    return std::vector<VarId>{ga, gb};
  });
}

VarId Tape::transpose(VarId a) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2) throw std::invalid_argument("transpose: non-matrix");
  std::size_t m = ta.rows(), n = ta.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  return push(std::move(out), {a}, [](Tape& t, VarId g) {
    return std::vector<VarId>{t.transpose(g)};
  });
}

VarId Tape::add_rowvec(VarId a, VarId v) {
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  if (ta.shape.size() != 2 || tv.shape.size() != 1 || ta.cols() != tv.size())
    throw std::invalid_argument("add_rowvec: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) += tv.at(j);
  return push(std::move(out), {a, v}, [](Tape& t, VarId g) {
    return std::vector<VarId>{g, t.col_sum(g)};
  });
}

VarId Tape::col_sum(VarId a) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2) throw std::invalid_argument("col_sum: non-matrix");
  Tensor out = Tensor::zeros({ta.cols()});
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(j) += ta.at(i, j);
  std::size_t m = ta.rows();
  return push(std::move(out), {a}, [m](Tape& t, VarId g) {
    return std::vector<VarId>{t.broadcast_rows(g, m)};
  });
}

VarId Tape::broadcast_rows(VarId v, std::size_t m) {
  const Tensor& tv = value(v);
  if (tv.shape.size() != 1) throw std::invalid_argument("broadcast_rows: non-vector");
  std::size_t n = tv.size();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = tv.at(j);
  return push(std::move(out), {v}, [](Tape& t, VarId g) {
    return std::vector<VarId>{t.col_sum(g)};
  });
}

VarId Tape::broadcast_to(VarId s, std::vector<std::size_t> shape) {
  const Tensor& ts = value(s);
  if (!ts.is_scalar()) throw std::invalid_argument("broadcast_to: non-scalar source");
  Tensor out = Tensor::zeros(shape);
  for (double& v : out.data) v = ts.item();
  return push(std::move(out), {s}, [](Tape& t, VarId g) {
    return std::vector<VarId>{t.sum(g)};
  });
}

// --- nonlinearities ----------------------------------------------------------

VarId Tape::tanh_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  VarId id = push(std::move(out), {a}, nullptr);
  nodes_[id].vjp = [id](Tape& t, VarId g) {
    // 1 - y^2, differentiable through y
    VarId one_minus = t.add_scalar(t.neg(t.square(id)), 1.0);
    return std::vector<VarId>{t.mul(g, one_minus)};
  };
  return id;
}

VarId Tape::relu_(VarId a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  Tensor mask = ta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask.data[i] = ta.data[i] > 0.0 ? 1.0 : 0.0;
    out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
  }
  return push(std::move(out), {a}, [mask](Tape& t, VarId g) {
    VarId m = t.constant(mask);
    return std::vector<VarId>{t.mul(g, m)};
  });
}

VarId Tape::sigmoid_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = stable_sigmoid(v);
  VarId id = push(std::move(out), {a}, nullptr);
  nodes_[id].vjp = [id](Tape& t, VarId g) {
    VarId d = t.mul(id, t.add_scalar(t.neg(id), 1.0));  // y(1-y)
    return std::vector<VarId>{t.mul(g, d)};
  };
  return id;
}

VarId Tape::softplus_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = stable_softplus(v);
  return push(std::move(out), {a}, [a](Tape& t, VarId g) {
    return std::vector<VarId>{t.mul(g, t.sigmoid_(a))};
  });
}

VarId Tape::exp_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  VarId id = push(std::move(out), {a}, nullptr);
  nodes_[id].vjp = [id](Tape& t, VarId g) {
    return std::vector<VarId>{t.mul(g, id)};
  };
  return id;
}

VarId Tape::log_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::log(v);
  return push(std::move(out), {a}, [a](Tape& t, VarId g) {
    return std::vector<VarId>{t.div(g, a)};
  });
}

VarId Tape::sqrt_(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::sqrt(v);
  VarId id = push(std::move(out), {a}, nullptr);
  nodes_[id].vjp = [id](Tape& t, VarId g) {
    return std::vector<VarId>{t.div(g, t.mul_scalar(id, 2.0))};
  };
  return id;
}

VarId Tape::abs_(VarId a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  Tensor sign = ta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    sign.data[i] = ta.data[i] >= 0.0 ? 1.0 : -1.0;
    out.data[i] = std::abs(ta.data[i]);
  }
  return push(std::move(out), {a}, [sign](Tape& t, VarId g) {
    VarId s = t.constant(sign);
    return std::vector<VarId>{t.mul(g, s)};
  });
}

VarId Tape::square(VarId a) {
  Tensor out = value(a);
  for (double& v : out.data) v *= v;
  return push(std::move(out), {a}, [a](Tape& t, VarId g) {
    return std::vector<VarId>{t.mul(g, t.mul_scalar(a, 2.0))};
  });
}

VarId Tape::softmax(VarId a) {
  const Tensor& ta = value(a);
  std::size_t rows = ta.shape.size() == 2 ? ta.rows() : 1;
  std::size_t cols = ta.shape.size() == 2 ? ta.cols() : ta.size();
  Tensor out = ta;
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = out.data[i * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, out.data[i * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out.data[i * cols + j] = std::exp(out.data[i * cols + j] - mx);
      z += out.data[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] /= z;
  }
  VarId id = push(std::move(out), {a}, nullptr);
  nodes_[id].vjp = [id, rows, cols](Tape& t, VarId g) {
    // per-row: y * (g - <g,y>)
    if (rows == 1) {
      VarId inner = t.broadcast_to(t.sum(t.mul(g, id)), t.value(g).shape);
      return std::vector<VarId>{t.mul(id, t.sub(g, inner))};
    }
    VarId gy = t.col_sum(t.transpose(t.mul(g, id)));     // row sums as vector [rows]
    VarId inner = t.transpose(t.broadcast_rows(gy, cols));  // [rows, cols]
    return std::vector<VarId>{t.mul(id, t.sub(g, inner))};
  };
  return id;
}

// --- reductions and views ----------------------------------------------------

VarId Tape::sum(VarId a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  auto shape = ta.shape;
  return push(Tensor::scalar(s), {a}, [shape](Tape& t, VarId g) {
    return std::vector<VarId>{t.broadcast_to(g, shape)};
  });
}

VarId Tape::mean(VarId a) { return mul_scalar(sum(a), 1.0 / double(value(a).size())); }

VarId Tape::slice(VarId a, std::size_t offset, std::size_t len) {
  const Tensor& ta = value(a);
  if (offset + len > ta.size()) throw std::invalid_argument("slice: out of range");
  Tensor out({len}, std::vector<double>(ta.data.begin() + offset,
                                        ta.data.begin() + offset + len));
  auto shape = ta.shape;
  return push(std::move(out), {a}, [offset, shape](Tape& t, VarId g) {
    return std::vector<VarId>{t.pad_slice(g, offset, shape)};
  });
}

VarId Tape::pad_slice(VarId a, std::size_t offset, std::vector<std::size_t> shape) {
  const Tensor& ta = value(a);
  Tensor out = Tensor::zeros(shape);
  if (offset + ta.size() > out.size()) throw std::invalid_argument("pad_slice: out of range");
  std::copy(ta.data.begin(), ta.data.end(), out.data.begin() + offset);
  std::size_t len = ta.size();
  return push(std::move(out), {a}, [offset, len](Tape& t, VarId g) {
    auto flat = t.reshape(g, {t.value(g).size()});
    return std::vector<VarId>{t.slice(flat, offset, len)};
  });
}

VarId Tape::reshape(VarId a, std::vector<std::size_t> shape) {
  const Tensor& ta = value(a);
  Tensor out(shape, ta.data);
  auto orig = ta.shape;
  return push(std::move(out), {a}, [orig](Tape& t, VarId g) {
    return std::vector<VarId>{t.reshape(g, orig)};
  });
}

VarId Tape::clamp_st(VarId a, double lo, double hi) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return push(std::move(out), {a},
              [](Tape&, VarId g) { return std::vector<VarId>{g}; });
}

}  // namespace metastack
