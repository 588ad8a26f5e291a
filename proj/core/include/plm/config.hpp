#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "plm/eval.hpp"
#include "plm/trainer.hpp"

namespace plm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every tunable of a run, parsed from flat `key = value` lines (or from the
// JSON echo a previous run wrote). Unknown keys are rejected.
struct RunConfig {
  // run
  std::uint64_t seed = 42;
  int steps = 2000;
  int batch_size = 16;
  double lr = 0.03;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_m = 0.99;
  double tau = 0.2;
  double lambda = 0.5;
  int grid = 7;
  int out_size = 56;
  int d_backbone = 64;
  int d_dense = 32;
  int d_global = 32;
  int queue_global = 4096;
  int queue_dense = 4096;
  std::string matcher = "pl";
  int images = 256;
  int checkpoint_every = 500;
  int threads = 0;
  bool symmetrize = false;
  // data
  int image_size = 64;
  int kmin = 2;
  int kmax = 12;
  double blob_rmin = 3.0;
  double blob_rmax = 8.0;
  // augmentation
  double scale_min = 0.2;
  double scale_max = 1.0;
  double aspect_min = 0.75;
  double aspect_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  double vflip_prob = 0.0;
  double jitter_scale_min = 0.8;
  double jitter_scale_max = 1.2;
  double jitter_shift_min = -0.1;
  double jitter_shift_max = 0.1;
  // eval
  std::string checkpoint;
  int probe_images = 256;
  double probe_train_frac = 0.8;
  double probe_ridge = 1e-3;
  int fidelity_pairs = 10000;
  std::uint64_t eval_seed = 7;
  // lambda sweep
  std::string sweep_lambdas = "0,0.25,0.5,0.75,1.0";
  int sweep_steps = 300;
};

// Flat config text: one `key = value` per line, '#' comments, blank lines ok.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

// Reads either flat text or the JSON object echoed as config.json.
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

// Applies one `key=value` override (the CLI --set form).
void apply_override(RunConfig& cfg, const std::string& key_equals_value);

std::string config_to_json(const RunConfig& cfg);
void write_config_json(const RunConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> config_keys();

TrainConfig to_train_config(const RunConfig& cfg);
ProbeConfig to_probe_config(const RunConfig& cfg);
FidelityConfig to_fidelity_config(const RunConfig& cfg);
DataConfig to_data_config(const RunConfig& cfg);
AugSamplerConfig to_aug_config(const RunConfig& cfg);
ModelConfig to_model_config(const RunConfig& cfg);

std::vector<double> parse_lambda_list(const std::string& csv);

}  // namespace plm
