#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trajloom/metrics.hpp"
#include "trajloom/models.hpp"
#include "trajloom/motionlab.hpp"
#include "trajloom/training.hpp"

namespace trajloom {

struct DataConfig {
  int height = 32;
  int width = 32;
  int stride = 4;
  int segment = 8;
  int train_scenes = 64;
  int eval_scenes = 16;
  double jitter = 0.0;
  std::vector<MotionKind> kinds;  // empty: every kind
};

struct MetricsConfig {
  bool literal_div_curl = true;  // divide div/curl by the spacing a second time
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: TRAJLOOM_OUT, then ./trajloom_out

  DataConfig data;
  VaeConfig vae;
  VaeTrainConfig vae_train;
  int flow_hidden = 64;
  int flow_blocks = 2;
  double flow_alpha_init = 0.1;
  double invisible_weight = 0.01;
  FlowTrainConfig flow;
  FinetuneConfig finetune;
  VisibilityConfig visibility;
  VisibilityTrainConfig visibility_train;
  SamplerSpec sampler;
  MetricsConfig metrics;
  CaptionThresholds caption;

  // Copies shared values (frame size, channels, per-loop seeds derived from
  // `seed`, flow options reused by fine-tuning) into the nested configs.
  void resolve();
  void validate() const;
  CorpusSpec corpus() const;
  VelocityConfig velocity() const;
};

// INI text with sections run, data, vae, flow, finetune, visibility, sampler,
// metrics, caption. Unknown sections or keys raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical dump of every key in a fixed order; parse_config(dump) == config.
std::string dump_config(const RunConfig& config);
// 64-bit FNV-1a of the canonical dump.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace trajloom
