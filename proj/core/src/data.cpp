#include "plm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace plm {
namespace {

// Value noise on a coarse lattice, bilinearly upsampled. Gives the background
// a smooth stroma-like texture without any high-frequency content that could
// stand in for the blobs.
struct ValueNoise {
  int lattice = 0;
  std::vector<double> values;  // lattice * lattice * 3

  static ValueNoise sample(Rng& rng, int lattice) {
    ValueNoise n;
    n.lattice = lattice;
    n.values.resize(static_cast<std::size_t>(lattice) * lattice * 3);
    for (auto& v : n.values) v = rng.uniform();
    return n;
  }

  double eval(double u, double v, int c) const {
    const double x = u * (lattice - 1);
    const double y = v * (lattice - 1);
    const int x0 = std::min(static_cast<int>(x), lattice - 2);
    const int y0 = std::min(static_cast<int>(y), lattice - 2);
    const double fx = x - x0;
    const double fy = y - y0;
    auto at = [&](int ix, int iy) {
      return values[(static_cast<std::size_t>(iy) * lattice + ix) * 3 + c];
    };
    return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) +
           fy * ((1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
  }
};

constexpr double kBlobColors[3][3] = {
    {0.36, 0.21, 0.50},  // dark violet
    {0.55, 0.27, 0.42},  // magenta-brown
    {0.24, 0.31, 0.55},  // slate blue
};

}  // namespace

SyntheticImage generate_image(std::uint64_t seed, const DataConfig& cfg) {
  if (cfg.image_size < 2 || cfg.kmin < 0 || cfg.kmax < cfg.kmin || cfg.reference_g < 1)
    throw std::invalid_argument("invalid data config");

  Rng rng(seed, RngStream::kData);
  const int s = cfg.image_size;

  SyntheticImage out;
  out.image = Image(s, s);
  out.reference_g = cfg.reference_g;

  const auto noise = ValueNoise::sample(rng, 5);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double u = (x + 0.5) / s;
      const double v = (y + 0.5) / s;
      for (int c = 0; c < 3; ++c) {
        // Pale eosin-ish base with gentle spatial variation.
        const double base = c == 0 ? 0.78 : (c == 1 ? 0.66 : 0.74);
        out.image.at(x, y, c) = std::clamp(base - 0.18 * noise.eval(u, v, c), 0.0, 1.0);
      }
    }
  }

  const int k = static_cast<int>(rng.uniform_int(cfg.kmin, cfg.kmax));
  out.blobs.reserve(k);
  for (int b = 0; b < k; ++b) {
    Blob blob;
    blob.cx = rng.uniform(0.0, static_cast<double>(s));
    blob.cy = rng.uniform(0.0, static_cast<double>(s));
    blob.radius = rng.uniform(cfg.blob_rmin, cfg.blob_rmax);
    blob.cls = static_cast<int>(rng.uniform_int(0, 2));
    out.blobs.push_back(blob);
  }

  for (const auto& blob : out.blobs) {
    const int xlo = std::max(0, static_cast<int>(std::floor(blob.cx - blob.radius - 1)));
    const int xhi = std::min(s - 1, static_cast<int>(std::ceil(blob.cx + blob.radius + 1)));
    const int ylo = std::max(0, static_cast<int>(std::floor(blob.cy - blob.radius - 1)));
    const int yhi = std::min(s - 1, static_cast<int>(std::ceil(blob.cy + blob.radius + 1)));
    for (int y = ylo; y <= yhi; ++y) {
      for (int x = xlo; x <= xhi; ++x) {
        const double dx = x + 0.5 - blob.cx;
        const double dy = y + 0.5 - blob.cy;
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double cover = std::clamp(blob.radius - dist + 0.5, 0.0, 1.0);
        if (cover <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double& px = out.image.at(x, y, c);
          px = std::clamp(px + cover * 0.92 * (kBlobColors[blob.cls][c] - px), 0.0, 1.0);
        }
      }
    }
  }

  // Reference labels by cell index so every center lands in exactly one cell.
  const int g = cfg.reference_g;
  out.density_labels.assign(static_cast<std::size_t>(g) * g, 0);
  for (const auto& blob : out.blobs) {
    const int cx = std::min(g - 1, static_cast<int>(blob.cx * g / s));
    const int cy = std::min(g - 1, static_cast<int>(blob.cy * g / s));
    ++out.density_labels[static_cast<std::size_t>(cy) * g + cx];
  }
  return out;
}

AugmentationSpec sample_aug(Rng& rng, const AugSamplerConfig& cfg, int image_w, int image_h) {
  if (cfg.scale_min <= 0.0 || cfg.scale_min > cfg.scale_max || cfg.scale_max > 1.0)
    throw std::invalid_argument("invalid scale range");
  if (cfg.aspect_min <= 0.0 || cfg.aspect_min > cfg.aspect_max)
    throw std::invalid_argument("invalid aspect range");

  AugmentationSpec spec;
  spec.out_size = cfg.out_size;

  const double image_area = static_cast<double>(image_w) * image_h;
  bool placed = false;
  for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
    const double area = rng.uniform(cfg.scale_min, cfg.scale_max) * image_area;
    const double aspect =
        std::exp(rng.uniform(std::log(cfg.aspect_min), std::log(cfg.aspect_max)));
    const double w = std::sqrt(area * aspect);
    const double h = std::sqrt(area / aspect);
    if (w <= image_w && h <= image_h) {
      spec.crop = Rect{rng.uniform(0.0, image_w - w), rng.uniform(0.0, image_h - h), w, h};
      placed = true;
    }
  }
  if (!placed) spec.crop = Rect{0.0, 0.0, static_cast<double>(image_w), static_cast<double>(image_h)};

  spec.hflip = rng.bernoulli(cfg.hflip_prob);
  spec.vflip = rng.bernoulli(cfg.vflip_prob);
  for (int c = 0; c < 3; ++c) {
    spec.jitter.scale[c] = rng.uniform(cfg.jitter_scale_min, cfg.jitter_scale_max);
    spec.jitter.shift[c] = rng.uniform(cfg.jitter_shift_min, cfg.jitter_shift_max);
  }
  return spec;
}

std::pair<AugmentationSpec, AugmentationSpec> sample_aug_pair(Rng& rng,
                                                              const AugSamplerConfig& cfg,
                                                              int image_w, int image_h) {
  auto a = sample_aug(rng, cfg, image_w, image_h);
  auto b = sample_aug(rng, cfg, image_w, image_h);
  return {a, b};
}

std::vector<int> patch_density_labels(const SyntheticImage& img, const PatchGrid& grid) {
  std::vector<int> counts(grid.boxes.size(), 0);
  for (const auto& blob : img.blobs) {
    for (std::size_t i = 0; i < grid.boxes.size(); ++i) {
      const Rect& b = grid.boxes[i];
      if (blob.cx >= b.x0 && blob.cx < b.x1() && blob.cy >= b.y0 && blob.cy < b.y1()) {
        ++counts[i];
      }
    }
  }
  return counts;
}

void dump_dataset(const std::filesystem::path& dir, std::uint64_t seed, const DataConfig& cfg,
                  int count) {
  std::filesystem::create_directories(dir);
  nlohmann::json labels;
  labels["count"] = count;
  labels["reference_g"] = cfg.reference_g;
  labels["images"] = nlohmann::json::array();

  for (int i = 0; i < count; ++i) {
    const auto img = generate_image(seed + static_cast<std::uint64_t>(i), cfg);

    nlohmann::json header;
    header["width"] = img.image.width;
    header["height"] = img.image.height;
    header["channels"] = 3;
    header["dtype"] = "float32";
    header["index"] = i;
    const std::string hs = header.dump();

    char name[32];
    std::snprintf(name, sizeof(name), "img_%d.bin", i);
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (double v : img.image.pixels) {
      const float fv = static_cast<float>(v);
      f.write(reinterpret_cast<const char*>(&fv), sizeof(fv));
    }

    nlohmann::json rec;
    rec["index"] = i;
    rec["blobs"] = nlohmann::json::array();
    for (const auto& b : img.blobs) rec["blobs"].push_back({b.cx, b.cy, b.radius, b.cls});
    rec["density"] = img.density_labels;
    labels["images"].push_back(std::move(rec));
  }

  std::ofstream lf(dir / "labels.json");
  lf << labels.dump(2) << "\n";
}

}  // namespace plm
