#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "saeaudit/classifier.hpp"
#include "saeaudit/dataset.hpp"
#include "saeaudit/unlearn.hpp"

namespace saeaudit {

struct SaePipelineParams {
  int expansion = 4;  // latent count m = expansion * hidden_dim
  int k = 8;
  int epochs = 40;
  double lr = 0.02;
  double momentum = 0.9;
  int batch_size = 256;
  std::string mode = "two-sae";  // "two-sae" or "shared"
};

struct AuditParams {
  std::vector<int> layers = {3, 4, 5};
  double alpha = 10.0;
  double high_threshold = 0.5;
  double low_threshold = 0.1;
  std::string matching_cost = "decoder-cosine";  // or "activation-correlation"
  std::string error_term = "drop";               // or "preserve"
  double filter_lo = 0.0;
  double filter_hi = 1.0;
};

// Everything one pipeline run depends on, in one place. Serialized in a
// versioned key = value section format; the materialized form is embedded
// in the run manifest so reports are self-describing.
struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 42;
  SyntheticSpec data;
  int hidden_layers = 6;
  int hidden_dim = 64;
  TrainConfig model_train;
  int forget_class = 2;
  std::vector<std::string> methods;  // defaults to every registered method
  std::map<std::string, HyperParams> method_overrides;
  SaePipelineParams sae;
  AuditParams audit;
  std::string output_dir = "runs/default";
};

PipelineConfig default_pipeline_config();

// Throws ConfigError on unknown sections/keys, bad values, or violated
// cross-field constraints (layers out of range, unregistered methods).
PipelineConfig parse_pipeline_config(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void validate_pipeline_config(const PipelineConfig& config);

// Canonical materialized form: every effective value explicit, shortest
// round-trip number formatting. Equal configs serialize byte-identically.
std::string serialize_pipeline_config(const PipelineConfig& config);

}  // namespace saeaudit
