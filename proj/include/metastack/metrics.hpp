#pragma once

#include <string>
#include <vector>

namespace metastack {

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t level = 0;
  double loss_task = 0.0;
  double loss_virtual = 0.0;
  double loss_meta = 0.0;
  double score_explore_mean = 0.0;
  std::vector<double> gate_means;
  double d_fake_mean = 0.0;
  double wall_time = 0.0;  // seconds since run start; zeroed in determinism mode
};

std::string metrics_to_line(const MetricsRecord& r);
MetricsRecord metrics_from_line(const std::string& line);

/// One record per line, streaming-append friendly.
void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics(const std::string& path);

/// Run manifest: config hash, seed, artifact version.
void write_manifest(const std::string& path, const std::string& config_hash,
                    std::uint64_t seed);

/// FNV-1a over the canonical config text; stable across runs.
std::string hash_text(const std::string& text);

}  // namespace metastack
