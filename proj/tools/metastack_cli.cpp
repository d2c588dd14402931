#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "metastack/checkpoint.hpp"
#include "metastack/config.hpp"

using namespace metastack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::size_t thread_cap() {
  const char* env = std::getenv("METASTACK_THREADS");
  if (!env) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw std::invalid_argument("METASTACK_THREADS must be a positive integer");
  return std::size_t(v);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_override, bool quiet) {
  std::string text = slurp(config_path);
  ExperimentConfig cfg = config_from_text(text);
  if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  std::filesystem::create_directories(cfg.out_dir);

  Checkpoint run = build_run(cfg);
  std::vector<MetricsRecord> metrics;
  train_hierarchy(run.hierarchy, cfg.run, run.state, metrics);

  std::string base = cfg.out_dir + "/";
  write_metrics(base + "metrics.jsonl", metrics);
  write_manifest(base + "manifest.json", hash_text(text), cfg.seed);
  save_checkpoint(base + "checkpoint.json", run.hierarchy, run.state);
  if (!quiet)
    std::cout << "trained " << run.state.step << " steps across " << run.hierarchy.depth()
              << " level(s); wrote " << metrics.size() << " metrics records to "
              << cfg.out_dir << "\n";
  return kExitOk;
}

void print_profile(const NormalFormGame& g, const StrategyProfile& p) {
  auto row = [](const std::vector<double>& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + ")";
  };
  std::cout << "  p0 " << row(p.probs[0]) << "  p1 " << row(p.probs[1]) << "  payoffs ("
            << expected_payoff(g, 0, p) << ", " << expected_payoff(g, 1, p) << ")\n";
}

const char* class_name(GameClass c) {
  switch (c) {
    case GameClass::team: return "team";
    case GameClass::coordination: return "coordination";
    case GameClass::potential: return "potential";
    case GameClass::general: return "general";
  }
  return "?";
}

int cmd_nash(const std::string& game_path, bool quiet) {
  NormalFormGame g = game_from_json(slurp(game_path));
  if (!quiet) std::cout << "class: " << class_name(classify(g)) << "\n";
  auto pure = pure_nash(g);
  std::cout << "pure equilibria: " << pure.size() << "\n";
  for (const auto& p : pure) print_profile(g, p);
  if (g.action_counts[0] == 2 && g.action_counts[1] == 2) {
    auto mixed = mixed_nash_2x2(g);
    std::cout << "mixed equilibria: " << mixed.profiles.size()
              << (mixed.degenerate ? " (degenerate)" : "") << "\n";
    for (const auto& p : mixed.profiles) print_profile(g, p);
  }
  return kExitOk;
}

int cmd_gradcheck(bool inject_error, bool quiet) {
  RootRng root(2024);
  auto rng = root.stream("gradcheck");
  std::map<std::string, double> report;

  {  // task-loss parameter gradient on a random tanh model
    Mlp m = Mlp::make_uniform({1, 6, 1}, Activation::tanh);
    m.init_random(rng);
    Task task = sample_polynomial_task(rng, {}, 0);
    Dataset d = generate_dataset(task, rng);
    auto got_t = task_loss_grad(m, d);
    std::vector<double> got;
    for (const auto& t : got_t) got.insert(got.end(), t.data.begin(), t.data.end());
    Mlp probe = m;
    auto fd = fd_gradient(
        [&](std::span<const double> p) {
          probe.set_flat_params(p);
          return task_loss(probe, d);
        },
        m.flat_params(), 1e-5);
    if (inject_error) got[0] += 0.5;
    report["task_loss_grad"] = max_rel_error(got, fd);
  }
  {  // surrogate gradient, second-order term included
    Mlp m = Mlp::make_uniform({1, 4, 1}, Activation::tanh);
    m.init_random(rng);
    Task task = sample_polynomial_task(rng, {}, 1);
    Dataset d = generate_dataset(task, rng);
    auto got_t = surrogate_grad(m, d, 0.1);
    std::vector<double> got;
    for (const auto& t : got_t) got.insert(got.end(), t.data.begin(), t.data.end());
    Mlp probe = m;
    auto fd = fd_gradient(
        [&](std::span<const double> p) {
          probe.set_flat_params(p);
          return surrogate_loss(probe, d, 0.1);
        },
        m.flat_params(), 1e-5);
    report["surrogate_grad"] = max_rel_error(got, fd);
  }
  {  // smooth score through (delta_l, d)
    ExplorationParams ep;
    std::vector<double> x{0.4, 0.3};
    Tape t;
    VarId dl = t.leaf(Tensor::scalar(x[0]));
    VarId dd = t.leaf(Tensor::scalar(x[1]));
    VarId s = score_smooth_on(t, ep, dl, dd);
    auto g = t.gradients(s, {dl, dd});
    std::vector<double> got{g[0].item(), g[1].item()};
    auto fd = fd_gradient(
        [&](std::span<const double> p) { return score_smooth(ep, p[0], p[1]).total; }, x,
        1e-6);
    report["score_smooth"] = max_rel_error(got, fd);
  }
  {  // selector-gate gradient of the manifold loss
    auto sc = make_soft_constraint({make_scaling_module()}, 3);
    sc.selector.w[0] = {0.3, -0.2, 0.1};
    Task task = sample_polynomial_task(rng, {}, 2);
    std::vector<double> penalties{0.7};
    auto got2 = gate_gradient(sc, task, penalties);
    auto fd = fd_gradient(
        [&](std::span<const double> p) {
          SoftConstraint probe = sc;
          probe.selector.w[0].assign(p.begin(), p.end());
          return selector_gate(probe.selector, task)[0] * probe.penalty_weights[0] *
                 penalties[0];
        },
        sc.selector.w[0], 1e-6);
    report["gate_gradient"] = max_rel_error(got2[0], fd);
  }

  bool ok = true;
  for (const auto& [name, err] : report) {
    bool pass = err < 1e-4;
    ok = ok && pass;
    if (!quiet || !pass)
      std::cout << name << ": max relative error " << err << (pass ? " PASS" : " FAIL")
                << "\n";
  }
  return ok ? kExitOk : kExitDiverged;
}

int cmd_emit_plot_data(const std::string& metrics_path, const std::string& out_dir) {
  auto records = read_metrics(metrics_path);
  std::filesystem::create_directories(out_dir);
  std::size_t max_gates = 0;
  for (const auto& r : records) max_gates = std::max(max_gates, r.gate_means.size());

  auto emit = [&](const std::string& name, auto&& getter) {
    std::ofstream out(out_dir + "/" + name + ".tsv", std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write plot table: " + name);
    out << "step\t" << name << "\n";
    for (const auto& r : records) out << r.step << "\t" << getter(r) << "\n";
  };
  emit("loss_task", [](const MetricsRecord& r) { return r.loss_task; });
  emit("loss_virtual", [](const MetricsRecord& r) { return r.loss_virtual; });
  emit("loss_meta", [](const MetricsRecord& r) { return r.loss_meta; });
  emit("score_explore_mean", [](const MetricsRecord& r) { return r.score_explore_mean; });
  emit("d_fake_mean", [](const MetricsRecord& r) { return r.d_fake_mean; });
  emit("wall_time", [](const MetricsRecord& r) { return r.wall_time; });
  for (std::size_t g = 0; g < max_gates; ++g)
    emit("gate_" + std::to_string(g), [g](const MetricsRecord& r) {
      return g < r.gate_means.size() ? r.gate_means[g] : 0.0;
    });
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             std::size_t n_tasks, bool quiet) {
  ExperimentConfig cfg = config_from_text(slurp(config_path));
  Checkpoint cp = checkpoint_path.empty() ? build_run(cfg) : load_checkpoint(checkpoint_path);
  const MetaLevel& lv = cp.hierarchy.level(1);
  LearnerParams lp = lv.learner;
  RngStream eval_rng = RootRng(cfg.seed).stream("held-out-eval");
  double total = 0.0;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    Task task = sample_polynomial_task(eval_rng, cfg.run.prior, std::int64_t(i));
    Dataset train = generate_dataset(task, eval_rng);
    Dataset test = generate_dataset(task, eval_rng);
    auto am = inner_adapt(lp, instantiate(lp, task), train);
    total += task_loss(am.model, test);
  }
  double mean = total / double(n_tasks);
  if (quiet)
    std::cout << mean << "\n";
  else
    std::cout << "mean adapted test MSE over " << n_tasks << " held-out tasks: " << mean
              << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metastack: recursive meta-learning engine"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path, out_dir, game_path, metrics_path, checkpoint_path;
  std::int64_t seed_override = -1;
  bool quiet = false;
  bool inject_error = false;
  std::size_t eval_tasks = 50;

  app.add_flag("--quiet", quiet, "suppress informational output");

  auto* train = app.add_subcommand("train", "run the configured training loop");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--seed", seed_override, "override the config seed");
  train->add_option("--out", out_dir, "override the config output directory");

  auto* nash = app.add_subcommand("nash", "solve a normal-form game file");
  nash->add_option("game", game_path, "game file (JSON)")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "gradient fidelity report");
  gradcheck->add_flag("--inject-error", inject_error,
                      "negative-control hook: corrupt one derivative");

  auto* plot = app.add_subcommand("emit-plot-data", "dump metrics as per-series tables");
  plot->add_option("metrics", metrics_path, "metrics file (JSONL)")->required();
  plot->add_option("--out", out_dir, "output directory for tables");

  auto* eval = app.add_subcommand("eval", "held-out adapted-MSE evaluation");
  eval->add_option("--config", config_path, "experiment config (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint to evaluate");
  eval->add_option("--tasks", eval_tasks, "number of held-out tasks");

  try {
    app.parse(argc, argv);
    thread_cap();  // validated even though execution is serial
    if (train->parsed()) return cmd_train(config_path, seed_override, out_dir, quiet);
    if (nash->parsed()) return cmd_nash(game_path, quiet);
    if (gradcheck->parsed()) return cmd_gradcheck(inject_error, quiet);
    if (plot->parsed())
      return cmd_emit_plot_data(metrics_path, out_dir.empty() ? "." : out_dir);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint_path, eval_tasks, quiet);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::string what = e.what();
    bool numeric = what.find("diverged") != std::string::npos ||
                   what.find("non-finite") != std::string::npos;
    return numeric ? kExitDiverged : kExitConfig;
  }
}
