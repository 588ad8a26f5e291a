#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "plm/trainer.hpp"

namespace plm {

struct MatcherFidelity {
  double mean_coverage = 0.0;   // mean overlap fraction of the assigned target(s)
  double misassign_rate = 0.0;  // assigned key patch shares zero area with the query patch
};

struct MatchFidelityReport {
  int n_pairs = 0;
  MatcherFidelity pl, loc, ft;
  int pl_ge_loc_pairs = 0;       // pairs where pl pair coverage >= loc pair coverage
  double min_pl_minus_loc = 0.0; // min over pairs of (pl coverage - loc coverage)
};

struct FidelityConfig {
  DataConfig data;
  AugSamplerConfig aug;
  ModelConfig model;  // drives the random encoder used for ft assignments
};

// Monte-Carlo comparison of the three matchers against exact overlap
// geometry. For pl, per-patch coverage is wq by construction; the baselines
// get the overlap fraction of their single assigned key patch.
MatchFidelityReport matching_fidelity(const FidelityConfig& cfg, int n_pairs, std::uint64_t seed);

struct ProbeConfig {
  int images = 256;
  double train_frac = 0.8;
  double ridge = 1e-3;
  DataConfig data;
};

// Frozen-encoder ridge regression from each local feature to its patch's
// blob-center count; MAE on a held-out image split.
double linear_probe_mae(const ModelParams& encoder, const ProbeConfig& cfg, std::uint64_t seed);

struct ProbeReport {
  double probe_mae = 0.0;
  double random_init_mae = 0.0;
};

// Probe a trained checkpoint against a random-init encoder of the same
// architecture (seeded from `seed`).
ProbeReport probe_against_random_init(const ModelParams& trained, const ProbeConfig& cfg,
                                      std::uint64_t seed);

struct LambdaSweepRow {
  double lambda = 0.0;
  double probe_mae = 0.0;
};

// One short training run per lambda, each probed with the same seed.
std::vector<LambdaSweepRow> lambda_sweep(const TrainConfig& base, const std::vector<double>& lambdas,
                                         const ProbeConfig& probe_cfg, std::uint64_t eval_seed);

std::string format_lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows);
void write_lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows,
                            const std::filesystem::path& path);

}  // namespace plm
