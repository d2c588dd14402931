#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metastack/games.hpp"
#include "metastack/rng.hpp"
#include "metastack/tensor.hpp"

namespace metastack {

enum class TaskDomain { polynomial, game };

TaskDomain domain_from_string(const std::string& s);
std::string to_string(TaskDomain d);

/// y = a x^2 + b x + c over [lo, hi], with Gaussian observation noise.
struct PolynomialSpec {
  double a = 0.0, b = 0.0, c = 0.0;
  double lo = -1.0, hi = 1.0;
  double noise = 0.0;   // sigma_n >= 0
  std::size_t n = 16;   // samples per dataset

  void validate() const;
};

/// Coefficient ranges the task sampler draws from.
struct PolynomialPrior {
  std::array<double, 2> a_range{-1.0, 1.0};
  std::array<double, 2> b_range{-1.0, 1.0};
  std::array<double, 2> c_range{-1.0, 1.0};
  double lo = -1.0, hi = 1.0;
  double noise = 0.0;
  std::size_t n = 16;

  void validate() const;
};

struct Task {
  std::int64_t id = 0;
  TaskDomain domain = TaskDomain::polynomial;
  std::optional<PolynomialSpec> poly;
  std::optional<NormalFormGame> game;
  std::vector<double> embedding;  // phi(tau), fixed dimension per run
};

struct Dataset {
  Tensor inputs;   // [n, d_in]
  Tensor targets;  // [n, d_out]

  std::size_t size() const { return inputs.rows(); }
};

/// Visitation history: bounded FIFO of (task, loss) pairs.
struct TaskHistory {
  struct Entry {
    Task task;
    double loss = 0.0;
    std::size_t step = 0;
  };

  explicit TaskHistory(std::size_t cap = 4096) : cap_(cap) {}

  void record(Task task, double loss, std::size_t step);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t capacity() const { return cap_; }

 private:
  std::size_t cap_;
  std::vector<Entry> entries_;
};

/// Uniform draw of (a,b,c) from the prior; embedding is the coefficient
/// vector, zero-padded to embed_dim when embed_dim > 3.
Task sample_polynomial_task(RngStream& rng, const PolynomialPrior& prior,
                            std::int64_t id, std::size_t embed_dim = 3);

/// Wraps a game as a task; embedding is the flattened payoff vector,
/// zero-padded or truncated to embed_dim.
Task make_game_task(NormalFormGame game, std::int64_t id, std::size_t embed_dim);

Dataset generate_dataset(const Task& task, RngStream& rng);

/// Euclidean distance between embeddings.
double task_distance(const Task& t1, const Task& t2);

/// History entry minimising (or, when argmax, maximising) distance to the
/// query task; ties broken by lowest task id.
const TaskHistory::Entry& select_reference(const TaskHistory& history, const Task& task,
                                           bool argmax = false);

std::string task_to_json(const Task& t);
Task task_from_json(const std::string& text);

}  // namespace metastack
