#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <vector>

#include "plm/autodiff.hpp"
#include "plm/geometry.hpp"
#include "plm/image.hpp"
#include "plm/matching.hpp"
#include "plm/rng.hpp"

namespace plm {

// Grid-structured encoder: a position-shared MLP embeds each pixel cell,
// a per-position two-layer stage refines it, and two projection heads emit
// the dense (per-cell) and global (pooled) features. All positions share
// weights, so the g x g feature-map geometry is preserved exactly.
struct ModelConfig {
  int grid = 7;
  int out_size = 56;  // must be divisible by grid
  int d_backbone = 64;
  int d_dense = 32;
  int d_global = 32;

  int cell() const { return out_size / grid; }
  int patch_dim() const { return cell() * cell() * 3; }
  int n() const { return grid * grid; }
};

// Parameter tensors in fixed declaration order (the checkpoint block order).
enum ParamId : std::size_t {
  kEmbedW = 0,
  kEmbedB,
  kMix1W,
  kMix1B,
  kMix2W,
  kMix2B,
  kGlobalH1W,
  kGlobalH1B,
  kGlobalH2W,
  kGlobalH2B,
  kDenseH1W,
  kDenseH1B,
  kDenseH2W,
  kDenseH2B,
  kParamCount,
};

extern const std::array<const char*, kParamCount> kParamNames;

struct ModelParams {
  ModelConfig cfg;
  std::vector<Eigen::MatrixXd> tensors;  // kParamCount entries

  Eigen::MatrixXd& operator[](std::size_t id) { return tensors[id]; }
  const Eigen::MatrixXd& operator[](std::size_t id) const { return tensors[id]; }
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases 0.01.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// Query/key parameter pair. The key side only ever moves by EMA.
struct BranchPair {
  ModelParams query;
  ModelParams key;
  double momentum = 0.99;
};

// theta_k <- m*theta_k + (1-m)*theta_q, elementwise.
void ema_update(BranchPair& bp);

// Bilinear crop-resample of `aug.crop` to out_size^2 with flips and
// per-channel jitter. Exact at integer alignment, clamp-to-edge sampling.
Image resample(const Image& image, const AugmentationSpec& aug);

// Flattened g x g pixel cells of a view, one row per cell: n x patch_dim.
Eigen::MatrixXd patchify(const Image& view, const ModelConfig& cfg);

// Full forward pass: n unit-norm local features plus one unit-norm global
// feature. Throws "zero feature" when a feature vector has zero norm.
FeatureGrid encode(const Image& view, const ModelParams& params);

// Tape-building twin of encode used for differentiation. Zero-norm rows pass
// through the normalize guard as zeros instead of throwing.
struct EncodedNodes {
  ad::Node* local = nullptr;       // n x d_dense, row-normalized
  ad::Node* global_vec = nullptr;  // 1 x d_global, normalized
};
EncodedNodes encode_on_tape(ad::Tape& tape, const Eigen::MatrixXd& patches,
                            const std::vector<ad::Node*>& params, const ModelConfig& cfg);

// Leaf (or constant) nodes for every parameter tensor, in declaration order.
std::vector<ad::Node*> param_nodes(ad::Tape& tape, const ModelParams& params, bool requires_grad);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace plm
