#include "plm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plm {

const std::array<const char*, kParamCount> kParamNames = {
    "embed_w",     "embed_b",     "mix1_w",      "mix1_b",      "mix2_w",
    "mix2_b",      "global_h1_w", "global_h1_b", "global_h2_w", "global_h2_b",
    "dense_h1_w",  "dense_h1_b",  "dense_h2_w",  "dense_h2_b",
};

namespace {
constexpr double kZeroNormEps = 1e-12;

void check_config(const ModelConfig& cfg) {
  if (cfg.grid < 1 || cfg.out_size < 1 || cfg.d_backbone < 1 || cfg.d_dense < 1 ||
      cfg.d_global < 1)
    throw std::invalid_argument("invalid model config");
  if (cfg.out_size % cfg.grid != 0)
    throw std::invalid_argument("out_size not divisible by grid");
}

Eigen::MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

struct LayerShape {
  Eigen::Index in, out;
};

std::array<LayerShape, kParamCount / 2> layer_shapes(const ModelConfig& cfg) {
  const Eigen::Index p = cfg.patch_dim();
  const Eigen::Index db = cfg.d_backbone;
  const Eigen::Index hg = 2 * cfg.d_global;
  const Eigen::Index hd = 2 * cfg.d_dense;
  return {{{p, db},
           {db, db},
           {db, db},
           {db, hg},
           {hg, cfg.d_global},
           {db, hd},
           {hd, cfg.d_dense}}};
}
}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  check_config(cfg);
  ModelParams params;
  params.cfg = cfg;
  params.tensors.reserve(kParamCount);
  for (const auto& shape : layer_shapes(cfg)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.in));
    params.tensors.push_back(uniform_matrix(rng, shape.in, shape.out, bound));
    params.tensors.push_back(Eigen::MatrixXd::Constant(1, shape.out, 0.01));
  }
  return params;
}

void ema_update(BranchPair& bp) {
  if (bp.momentum < 0.0 || bp.momentum >= 1.0)
    throw std::invalid_argument("momentum outside [0,1)");
  for (std::size_t i = 0; i < kParamCount; ++i)
    bp.key[i] = bp.momentum * bp.key[i] + (1.0 - bp.momentum) * bp.query[i];
}

Image resample(const Image& image, const AugmentationSpec& aug) {
  const Rect& c = aug.crop;
  if (c.w <= 0.0 || c.h <= 0.0) throw std::invalid_argument("degenerate crop");
  if (c.x0 < 0.0 || c.y0 < 0.0 || c.x1() > image.width || c.y1() > image.height)
    throw std::invalid_argument("crop outside image");
  if (aug.out_size < 1) throw std::invalid_argument("invalid out_size");

  const int out = aug.out_size;
  Image view(out, out);
  for (int oy = 0; oy < out; ++oy) {
    const int vy = aug.vflip ? out - 1 - oy : oy;
    const double sy = c.y0 + (vy + 0.5) * c.h / out - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int ox = 0; ox < out; ++ox) {
      const int vx = aug.hflip ? out - 1 - ox : ox;
      const double sx = c.x0 + (vx + 0.5) * c.w / out - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - fx) * image.at(x0, y0, ch) + fx * image.at(x1, y0, ch);
        const double bot = (1 - fx) * image.at(x0, y1, ch) + fx * image.at(x1, y1, ch);
        const double v = (1 - fy) * top + fy * bot;
        view.at(ox, oy, ch) =
            std::clamp(aug.jitter.scale[ch] * v + aug.jitter.shift[ch], 0.0, 1.0);
      }
    }
  }
  return view;
}

Eigen::MatrixXd patchify(const Image& view, const ModelConfig& cfg) {
  check_config(cfg);
  if (view.width != cfg.out_size || view.height != cfg.out_size)
    throw std::invalid_argument("view resolution does not match model config");

  const int cs = cfg.cell();
  Eigen::MatrixXd x(cfg.n(), cfg.patch_dim());
  for (int row = 0; row < cfg.grid; ++row) {
    for (int col = 0; col < cfg.grid; ++col) {
      const int idx = row * cfg.grid + col;
      int k = 0;
      for (int py = 0; py < cs; ++py)
        for (int px = 0; px < cs; ++px)
          for (int ch = 0; ch < 3; ++ch)
            x(idx, k++) = view.at(col * cs + px, row * cs + py, ch);
    }
  }
  return x;
}

namespace {
Eigen::MatrixXd linear(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                       const Eigen::MatrixXd& b) {
  return (x * w).rowwise() + b.row(0);
}
}  // namespace

FeatureGrid encode(const Image& view, const ModelParams& params) {
  const ModelConfig& cfg = params.cfg;
  const Eigen::MatrixXd x = patchify(view, cfg);

  Eigen::MatrixXd h = linear(x, params[kEmbedW], params[kEmbedB]).cwiseMax(0.0);
  h = linear(h, params[kMix1W], params[kMix1B]).cwiseMax(0.0);
  h = linear(h, params[kMix2W], params[kMix2B]);  // backbone features, n x d_backbone

  Eigen::MatrixXd dense =
      linear(linear(h, params[kDenseH1W], params[kDenseH1B]).cwiseMax(0.0), params[kDenseH2W],
             params[kDenseH2B]);

  FeatureGrid out;
  out.local = dense;
  for (Eigen::Index i = 0; i < out.local.rows(); ++i) {
    const double norm = out.local.row(i).norm();
    if (norm < kZeroNormEps) throw std::runtime_error("zero feature");
    out.local.row(i) /= norm;
  }

  const Eigen::MatrixXd pooled = h.colwise().mean();
  Eigen::MatrixXd gvec =
      linear(linear(pooled, params[kGlobalH1W], params[kGlobalH1B]).cwiseMax(0.0),
             params[kGlobalH2W], params[kGlobalH2B]);
  const double gnorm = gvec.row(0).norm();
  if (gnorm < kZeroNormEps) throw std::runtime_error("zero feature");
  out.global_vec = gvec.row(0) / gnorm;
  return out;
}

std::vector<ad::Node*> param_nodes(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  std::vector<ad::Node*> nodes;
  nodes.reserve(kParamCount);
  for (const auto& tensor : params.tensors) nodes.push_back(tape.leaf(tensor, requires_grad));
  return nodes;
}

EncodedNodes encode_on_tape(ad::Tape& tape, const Eigen::MatrixXd& patches,
                            const std::vector<ad::Node*>& params, const ModelConfig& cfg) {
  check_config(cfg);
  if (patches.rows() != cfg.n() || patches.cols() != cfg.patch_dim())
    throw std::invalid_argument("patch matrix does not match model config");

  using namespace ad;
  Node* x = tape.constant(patches);
  Node* h = relu(tape, add_rowvec(tape, matmul(tape, x, params[kEmbedW]), params[kEmbedB]));
  h = relu(tape, add_rowvec(tape, matmul(tape, h, params[kMix1W]), params[kMix1B]));
  h = add_rowvec(tape, matmul(tape, h, params[kMix2W]), params[kMix2B]);

  Node* dense = add_rowvec(
      tape,
      matmul(tape,
             relu(tape, add_rowvec(tape, matmul(tape, h, params[kDenseH1W]), params[kDenseH1B])),
             params[kDenseH2W]),
      params[kDenseH2B]);

  Node* pooled = mean_over_rows(tape, h);
  Node* gvec = add_rowvec(
      tape,
      matmul(tape,
             relu(tape,
                  add_rowvec(tape, matmul(tape, pooled, params[kGlobalH1W]), params[kGlobalH1B])),
             params[kGlobalH2W]),
      params[kGlobalH2B]);

  EncodedNodes out;
  out.local = row_l2_normalize(tape, dense);
  out.global_vec = row_l2_normalize(tape, gvec);
  return out;
}

}  // namespace plm
