#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "plm/geometry.hpp"
#include "plm/image.hpp"
#include "plm/rng.hpp"

namespace plm {

// Circular blob with a class id, the "object" the probe task counts.
struct Blob {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  int cls = 0;
};

// Procedurally generated image: low-frequency background texture plus disc
// blobs, with per-cell blob-center counts on a reference g x g grid.
struct SyntheticImage {
  Image image;
  std::vector<Blob> blobs;
  std::vector<int> density_labels;  // reference_g * reference_g, row-major
  int reference_g = 0;
};

struct DataConfig {
  int image_size = 64;
  int kmin = 2;   // blob count range, inclusive
  int kmax = 12;
  double blob_rmin = 3.0;
  double blob_rmax = 8.0;
  int reference_g = 7;
};

// Random-resized-crop sampler parameters.
struct AugSamplerConfig {
  double scale_min = 0.2;   // crop area as a fraction of image area
  double scale_max = 1.0;
  double aspect_min = 0.75;
  double aspect_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  double vflip_prob = 0.0;
  double jitter_scale_min = 0.8;
  double jitter_scale_max = 1.2;
  double jitter_shift_min = -0.1;
  double jitter_shift_max = 0.1;
  int out_size = 56;
  int grid = 7;
};

SyntheticImage generate_image(std::uint64_t seed, const DataConfig& cfg);

// Two independent views of the same image. Deterministic given the rng state.
std::pair<AugmentationSpec, AugmentationSpec> sample_aug_pair(Rng& rng, const AugSamplerConfig& cfg,
                                                              int image_w, int image_h);

AugmentationSpec sample_aug(Rng& rng, const AugSamplerConfig& cfg, int image_w, int image_h);

// Blob-center counts per patch box, half-open containment.
std::vector<int> patch_density_labels(const SyntheticImage& img, const PatchGrid& grid);

// Dataset dump: img_<index>.bin files (JSON header + row-major float32
// pixels) and a labels.json with blob lists and reference-grid counts.
void dump_dataset(const std::filesystem::path& dir, std::uint64_t seed, const DataConfig& cfg,
                  int count);

}  // namespace plm
