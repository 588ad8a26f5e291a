#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "plm/data.hpp"
#include "plm/losses.hpp"
#include "plm/model.hpp"

namespace plm {

enum class Matcher { kPrecise, kLocation, kFeature };

Matcher matcher_from_string(const std::string& name);  // "pl" | "loc" | "ft"
std::string to_string(Matcher m);

struct TrainConfig {
  int steps = 2000;
  int batch_size = 16;
  double lr = 0.03;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_m = 0.99;
  double tau = 0.2;
  double lambda = 0.5;
  int queue_global = 4096;
  int queue_dense = 4096;
  std::uint64_t seed = 42;
  Matcher matcher = Matcher::kPrecise;
  int images = 256;  // synthetic pool size
  int checkpoint_every = 500;
  int threads = 0;  // 0 = hardware concurrency
  bool symmetrize = false;
  ModelConfig model;
  DataConfig data;
  AugSamplerConfig aug;
};

struct StepRecord {
  int step = 0;
  double global_loss = 0.0;
  double local_loss = 0.0;
  double combined = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};
using TrainLog = std::vector<StepRecord>;

// Raised when a loss turns NaN; carries the batch seeds needed to replay the
// offending forward pass.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(const std::string& msg, std::string diagnostics)
      : std::runtime_error(msg), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  std::string diagnostics_;
};

double cosine_lr(int step, int total, double base_lr);

// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v
void sgd_update(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
                double lr, double momentum, double weight_decay,
                std::vector<Eigen::MatrixXd>& velocity);

// Geometry of one augmentation pair.
struct PairGeometry {
  PatchGrid qgrid;
  PatchGrid kgrid;
  OverlapMatrix om;
  MatchWeights weights;
};

PairGeometry pair_geometry(const AugmentationSpec& query_aug, const AugmentationSpec& key_aug,
                           int grid);

// Differentiable loss for one augmented pair. The query branch lives on the
// tape; key features enter as constants (the key branch receives no
// gradient). Matched targets built from query features stay differentiable.
struct PairLossGraph {
  ad::Node* combined = nullptr;
  ad::Node* global_term = nullptr;
  ad::Node* local_term = nullptr;
  bool local_degenerate = false;  // all match weights zero
};

PairLossGraph build_pair_loss(ad::Tape& tape, const std::vector<ad::Node*>& query_params,
                              const ModelConfig& mcfg, const Eigen::MatrixXd& query_patches,
                              const FeatureGrid& key_feats, const PairGeometry& geo,
                              Matcher matcher, const Eigen::MatrixXd& global_negatives,
                              const Eigen::MatrixXd& dense_negatives, double tau, double lambda);

struct TrainState {
  TrainConfig cfg;
  BranchPair branches;
  std::vector<Eigen::MatrixXd> velocity;
  NegativeQueue global_queue;
  NegativeQueue dense_queue;
  std::vector<SyntheticImage> pool;
  int step = 0;
  bool any_local_degenerate = false;

  explicit TrainState(const TrainConfig& cfg);
};

// Everything evaluate_batch produces before any state mutation.
struct BatchEval {
  std::vector<Eigen::MatrixXd> grads;  // batch-mean gradient per parameter
  double global_mean = 0.0;
  double local_mean = 0.0;
  double combined_mean = 0.0;
  bool any_degenerate = false;
  Eigen::MatrixXd key_globals;  // batch x d_global, pushed after the update
  Eigen::MatrixXd key_denses;   // batch x d_dense
  std::string nan_diagnostics;  // empty when all losses are finite
};

TrainState init_state(const TrainConfig& cfg);

// Pure with respect to the state: forward + backward over one batch.
BatchEval evaluate_batch(const TrainState& state, int step);

StepRecord train_step(TrainState& state);

struct TrainResult {
  TrainLog log;
  ModelParams final_query;
  bool any_local_degenerate = false;
};

// Full run. When out_dir is nonempty, writes log.csv, periodic
// ckpt_<step>.bin checkpoints and ckpt_final.bin there.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir = {});

std::string format_log_csv(const TrainLog& log);
void write_log_csv(const TrainLog& log, const std::filesystem::path& path);

// Max relative error of analytic vs central-difference gradients of the full
// combined loss on a small fixed scenario (g=2, d=4, 3 negatives).
double full_loss_gradcheck(std::uint64_t seed, double h);

}  // namespace plm
