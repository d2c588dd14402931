#include "metastack/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

TaskDomain domain_from_string(const std::string& s) {
  if (s == "polynomial") return TaskDomain::polynomial;
  if (s == "game") return TaskDomain::game;
  throw std::invalid_argument("unknown task domain: " + s);
}

std::string to_string(TaskDomain d) {
  return d == TaskDomain::polynomial ? "polynomial" : "game";
}

void PolynomialSpec::validate() const {
  if (!(lo < hi)) throw std::invalid_argument("polynomial spec: lo must be < hi");
  if (noise < 0.0) throw std::invalid_argument("polynomial spec: noise must be >= 0");
  if (n < 1) throw std::invalid_argument("polynomial spec: need at least one sample");
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
    throw std::invalid_argument("polynomial spec: coefficients must be finite");
}

void PolynomialPrior::validate() const {
  for (const auto& r : {a_range, b_range, c_range})
    if (!(r[0] <= r[1])) throw std::invalid_argument("polynomial prior: empty coefficient range");
  if (!(lo < hi)) throw std::invalid_argument("polynomial prior: lo must be < hi");
  if (noise < 0.0) throw std::invalid_argument("polynomial prior: noise must be >= 0");
  if (n < 1) throw std::invalid_argument("polynomial prior: need at least one sample");
}

void TaskHistory::record(Task task, double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw std::invalid_argument("history: loss must be finite");
  entries_.push_back({std::move(task), loss, step});
  if (entries_.size() > cap_) entries_.erase(entries_.begin());
}

namespace {

std::vector<double> pad_embedding(std::vector<double> raw, std::size_t embed_dim) {
  raw.resize(embed_dim, 0.0);
  return raw;
}

}  // namespace

Task sample_polynomial_task(RngStream& rng, const PolynomialPrior& prior,
                            std::int64_t id, std::size_t embed_dim) {
  prior.validate();
  if (embed_dim < 3) throw std::invalid_argument("sample_polynomial_task: embed_dim < 3");
  Task t;
  t.id = id;
  t.domain = TaskDomain::polynomial;
  PolynomialSpec spec;
  spec.a = rng.uniform(prior.a_range[0], prior.a_range[1]);
  spec.b = rng.uniform(prior.b_range[0], prior.b_range[1]);
  spec.c = rng.uniform(prior.c_range[0], prior.c_range[1]);
  spec.lo = prior.lo;
  spec.hi = prior.hi;
  spec.noise = prior.noise;
  spec.n = prior.n;
  t.poly = spec;
  t.embedding = pad_embedding({spec.a, spec.b, spec.c}, embed_dim);
  return t;
}

Task make_game_task(NormalFormGame game, std::int64_t id, std::size_t embed_dim) {
  Task t;
  t.id = id;
  t.domain = TaskDomain::game;
  t.embedding = pad_embedding(game.flatten(), embed_dim);
  t.game = std::move(game);
  return t;
}

Dataset generate_dataset(const Task& task, RngStream& rng) {
  if (task.domain != TaskDomain::polynomial || !task.poly)
    throw std::invalid_argument("generate_dataset: only polynomial tasks carry datasets");
  const PolynomialSpec& s = *task.poly;
  s.validate();
  Dataset d;
  d.inputs = Tensor::zeros({s.n, 1});
  d.targets = Tensor::zeros({s.n, 1});
  for (std::size_t i = 0; i < s.n; ++i) {
    double x = rng.uniform(s.lo, s.hi);
    double y = s.a * x * x + s.b * x + s.c;
    if (s.noise > 0.0) y += rng.normal(0.0, s.noise);
    d.inputs.at(i, 0) = x;
    d.targets.at(i, 0) = y;
  }
  return d;
}

double task_distance(const Task& t1, const Task& t2) {
  if (t1.embedding.size() != t2.embedding.size())
    throw std::invalid_argument("task_distance: embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < t1.embedding.size(); ++i) {
    double d = t1.embedding[i] - t2.embedding[i];
    s += d * d;
  }
  return std::sqrt(s);
}

const TaskHistory::Entry& select_reference(const TaskHistory& history, const Task& task,
                                           bool argmax) {
  if (history.empty()) throw std::invalid_argument("select_reference: empty history");
  const TaskHistory::Entry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : history.entries()) {
    double d = task_distance(e.task, task);
    bool better = best == nullptr || (argmax ? d > best_d : d < best_d) ||
                  (d == best_d && e.task.id < best->task.id);
    if (better) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

std::string task_to_json(const Task& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["domain"] = to_string(t.domain);
  j["embedding"] = t.embedding;
  if (t.poly) {
    const PolynomialSpec& s = *t.poly;
    j["poly"] = {{"a", s.a}, {"b", s.b}, {"c", s.c}, {"lo", s.lo},
                 {"hi", s.hi}, {"noise", s.noise}, {"n", s.n}};
  }
  if (t.game) j["game"] = nlohmann::json::parse(game_to_json(*t.game));
  return j.dump();
}

Task task_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Task t;
  t.id = j.at("id").get<std::int64_t>();
  t.domain = domain_from_string(j.at("domain").get<std::string>());
  t.embedding = j.at("embedding").get<std::vector<double>>();
  if (j.contains("poly")) {
    const auto& p = j["poly"];
    PolynomialSpec s;
    s.a = p.at("a");
    s.b = p.at("b");
    s.c = p.at("c");
    s.lo = p.at("lo");
    s.hi = p.at("hi");
    s.noise = p.at("noise");
    s.n = p.at("n");
    s.validate();
    t.poly = s;
  }
  if (j.contains("game")) t.game = game_from_json(j["game"].dump());
  if (t.domain == TaskDomain::polynomial && !t.poly)
    throw std::invalid_argument("task file: polynomial task missing poly payload");
  if (t.domain == TaskDomain::game && !t.game)
    throw std::invalid_argument("task file: game task missing game payload");
  return t;
}

}  // namespace metastack
