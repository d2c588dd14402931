#include "metastack/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string bytes_to_base64(const unsigned char* p, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t v = std::uint32_t(p[i]) << 16;
    if (i + 1 < n) v |= std::uint32_t(p[i + 1]) << 8;
    if (i + 2 < n) v |= std::uint32_t(p[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64[v & 63] : '=');
  }
  return out;
}

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  throw std::runtime_error("checkpoint: invalid base64 character");
}

std::vector<unsigned char> base64_to_bytes(const std::string& s) {
  if (s.size() % 4 != 0) throw std::runtime_error("checkpoint: truncated base64 payload");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
      char c = s[i + j];
      if (c == '=') {
        ++pad;
        v <<= 6;
      } else {
        if (pad > 0) throw std::runtime_error("checkpoint: malformed base64 padding");
        v = (v << 6) | std::uint32_t(b64_value(c));
      }
    }
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json j;
  j["widths"] = m.widths;
  std::vector<std::string> acts;
  for (auto a : m.acts) acts.push_back(to_string(a));
  j["acts"] = acts;
  j["params"] = doubles_to_base64(m.flat_params());
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  std::vector<std::size_t> widths = j.at("widths").get<std::vector<std::size_t>>();
  std::vector<Activation> acts;
  for (const auto& s : j.at("acts")) acts.push_back(activation_from_string(s));
  Mlp m = Mlp::make(std::move(widths), std::move(acts));
  auto params = base64_to_doubles(j.at("params"));
  if (params.size() != m.param_count())
    throw std::runtime_error("checkpoint: parameter payload size mismatch");
  m.set_flat_params(params);
  return m;
}

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape;
  j["data"] = doubles_to_base64(t.data);
  return j;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                base64_to_doubles(j.at("data")));
}

nlohmann::json opt_to_json(const OptimizerState& o) {
  nlohmann::json j;
  j["kind"] = o.kind == OptimizerState::Kind::adam ? "adam" : "sgd";
  j["lr"] = o.lr;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
  j["step_count"] = o.step_count;
  j["m"] = nlohmann::json::array();
  j["v"] = nlohmann::json::array();
  for (const auto& t : o.m) j["m"].push_back(tensor_to_json(t));
  for (const auto& t : o.v) j["v"].push_back(tensor_to_json(t));
  return j;
}

OptimizerState opt_from_json(const nlohmann::json& j) {
  OptimizerState o;
  o.kind = j.at("kind") == "adam" ? OptimizerState::Kind::adam : OptimizerState::Kind::sgd;
  o.lr = j.at("lr");
  o.beta1 = j.at("beta1");
  o.beta2 = j.at("beta2");
  o.eps = j.at("eps");
  o.step_count = j.at("step_count");
  for (const auto& t : j.at("m")) o.m.push_back(tensor_from_json(t));
  for (const auto& t : j.at("v")) o.v.push_back(tensor_from_json(t));
  return o;
}

nlohmann::json constraint_to_json(const SoftConstraint& sc) {
  nlohmann::json j;
  j["modules"] = nlohmann::json::array();
  for (const auto& m : sc.modules)
    j["modules"].push_back({{"kind", to_string(m.kind)},
                            {"param_lo", m.param_lo},
                            {"param_hi", m.param_hi},
                            {"group_samples", m.group_samples}});
  j["selector"] = sc.selector.w;
  j["penalty_weights"] = sc.penalty_weights;
  return j;
}

SoftConstraint constraint_from_json(const nlohmann::json& j) {
  SoftConstraint sc;
  for (const auto& mj : j.at("modules")) {
    StructuralModule m;
    m.kind = module_kind_from_string(mj.at("kind"));
    m.param_lo = mj.at("param_lo");
    m.param_hi = mj.at("param_hi");
    m.group_samples = mj.at("group_samples");
    sc.modules.push_back(m);
  }
  sc.selector.w = j.at("selector").get<std::vector<std::vector<double>>>();
  sc.penalty_weights = j.at("penalty_weights").get<std::vector<double>>();
  sc.validate();
  return sc;
}

nlohmann::json level_to_json(const MetaLevel& lv) {
  nlohmann::json j;
  j["index"] = lv.index;
  j["mode"] = to_string(lv.learner.mode);
  j["alpha"] = lv.learner.alpha;
  j["inner_steps"] = lv.learner.inner_steps;
  j["init"] = mlp_to_json(lv.learner.init);
  if (lv.learner.mode == LearnerMode::hypernetwork)
    j["hyper"] = mlp_to_json(lv.learner.hyper);
  j["lambda_virtual"] = lv.lambda_virtual;
  j["beta_reg"] = lv.beta_reg;
  j["outer_lr"] = lv.outer_lr;
  j["gen_opt"] = opt_to_json(lv.gen_opt);
  if (lv.constraint) j["constraint"] = constraint_to_json(*lv.constraint);
  if (lv.generator) j["generator"] = mlp_to_json(lv.generator->net);
  if (lv.discriminator) j["discriminator"] = mlp_to_json(lv.discriminator->net);
  return j;
}

MetaLevel level_from_json(const nlohmann::json& j) {
  MetaLevel lv;
  lv.index = j.at("index");
  lv.learner.mode = learner_mode_from_string(j.at("mode"));
  lv.learner.alpha = j.at("alpha");
  lv.learner.inner_steps = j.at("inner_steps");
  lv.learner.init = mlp_from_json(j.at("init"));
  if (j.contains("hyper")) lv.learner.hyper = mlp_from_json(j.at("hyper"));
  lv.lambda_virtual = j.at("lambda_virtual");
  lv.beta_reg = j.at("beta_reg");
  lv.outer_lr = j.at("outer_lr");
  lv.gen_opt = opt_from_json(j.at("gen_opt"));
  if (j.contains("constraint")) lv.constraint = constraint_from_json(j.at("constraint"));
  if (j.contains("generator")) lv.generator = Generator{mlp_from_json(j.at("generator"))};
  if (j.contains("discriminator"))
    lv.discriminator = Discriminator{mlp_from_json(j.at("discriminator"))};
  return lv;
}

nlohmann::json task_as_json(const Task& t) { return nlohmann::json::parse(task_to_json(t)); }

}  // namespace

std::string doubles_to_base64(const std::vector<double>& v) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes little-endian doubles");
  return bytes_to_base64(reinterpret_cast<const unsigned char*>(v.data()),
                         v.size() * sizeof(double));
}

std::vector<double> base64_to_doubles(const std::string& s) {
  auto bytes = base64_to_bytes(s);
  if (bytes.size() % sizeof(double) != 0)
    throw std::runtime_error("checkpoint: payload is not a whole number of doubles");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void save_checkpoint(const std::string& path, const Hierarchy& h, const TrainState& st) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["seed"] = st.seed;
  j["step"] = st.step;
  j["K"] = h.depth();

  j["levels"] = nlohmann::json::array();
  for (const auto& lv : h.levels) j["levels"].push_back(level_to_json(lv));
  j["model_template"] = mlp_to_json(h.model_template);

  j["rng"] = {{"task", st.task_rng.serialize()},
              {"data", st.data_rng.serialize()},
              {"virtual", st.virt_rng.serialize()},
              {"eval", st.eval_rng.serialize()}};

  j["history"] = {{"capacity", st.history.capacity()},
                  {"entries", nlohmann::json::array()}};
  for (const auto& e : st.history.entries())
    j["history"]["entries"].push_back(
        {{"task", task_as_json(e.task)}, {"loss", e.loss}, {"step", e.step}});

  j["buffer"] = {{"capacity", st.buffer.capacity()}, {"entries", nlohmann::json::array()}};
  for (const auto& e : st.buffer.entries())
    j["buffer"]["entries"].push_back({{"task", task_as_json(e.task)},
                                      {"performance", e.performance},
                                      {"weight", e.weight}});

  j["next_task_id"] = st.next_task_id;
  j["fresh_samples"] = st.fresh_samples;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint file: " + std::string(e.what()));
  }
  try {
    int version = j.at("format_version");
    if (version != kCheckpointVersion)
      throw std::runtime_error("checkpoint format version " + std::to_string(version) +
                               " unsupported (expected " +
                               std::to_string(kCheckpointVersion) + ")");

    Checkpoint cp;
    cp.state.seed = j.at("seed");
    cp.state.step = j.at("step");
    for (const auto& lj : j.at("levels"))
      cp.hierarchy.levels.push_back(level_from_json(lj));
    if (cp.hierarchy.depth() != j.at("K").get<std::size_t>())
      throw std::runtime_error("checkpoint level count disagrees with header K");
    cp.hierarchy.model_template = mlp_from_json(j.at("model_template"));

    cp.state.task_rng = RngStream::deserialize(j.at("rng").at("task"));
    cp.state.data_rng = RngStream::deserialize(j.at("rng").at("data"));
    cp.state.virt_rng = RngStream::deserialize(j.at("rng").at("virtual"));
    cp.state.eval_rng = RngStream::deserialize(j.at("rng").at("eval"));

    cp.state.history = TaskHistory(j.at("history").at("capacity"));
    for (const auto& ej : j.at("history").at("entries"))
      cp.state.history.record(task_from_json(ej.at("task").dump()), ej.at("loss"),
                              ej.at("step"));

    cp.state.buffer = ReplayBuffer(j.at("buffer").at("capacity"));
    for (const auto& ej : j.at("buffer").at("entries"))
      cp.state.buffer.push({task_from_json(ej.at("task").dump()), ej.at("performance"),
                            ej.at("weight")});

    cp.state.next_task_id = j.at("next_task_id");
    cp.state.fresh_samples = j.at("fresh_samples");
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint file: " + std::string(e.what()));
  }
}

}  // namespace metastack
