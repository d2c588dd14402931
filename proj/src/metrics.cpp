#include "metastack/metrics.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

std::string metrics_to_line(const MetricsRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["level"] = r.level;
  j["loss_task"] = r.loss_task;
  j["loss_virtual"] = r.loss_virtual;
  j["loss_meta"] = r.loss_meta;
  j["score_explore_mean"] = r.score_explore_mean;
  j["gate_means"] = r.gate_means;
  j["d_fake_mean"] = r.d_fake_mean;
  j["wall_time"] = r.wall_time;
  return j.dump();
}

MetricsRecord metrics_from_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  MetricsRecord r;
  r.step = j.at("step");
  r.level = j.at("level");
  r.loss_task = j.at("loss_task");
  r.loss_virtual = j.at("loss_virtual");
  r.loss_meta = j.at("loss_meta");
  r.score_explore_mean = j.at("score_explore_mean");
  r.gate_means = j.at("gate_means").get<std::vector<double>>();
  r.d_fake_mean = j.at("d_fake_mean");
  r.wall_time = j.at("wall_time");
  return r;
}

void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  for (const auto& r : records) out << metrics_to_line(r) << "\n";
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(metrics_from_line(line));
  return out;
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void write_manifest(const std::string& path, const std::string& config_hash,
                    std::uint64_t seed) {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["artifact_version"] = "1.0.0";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace metastack
