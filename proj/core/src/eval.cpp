#include "plm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace plm {

MatchFidelityReport matching_fidelity(const FidelityConfig& cfg, int n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");

  // A fixed random-init encoder supplies the features the ft baseline
  // matches on; pl and loc are purely geometric.
  Rng enc_rng(seed, RngStream::kInit);
  const ModelParams encoder = init_params(cfg.model, enc_rng);

  MatchFidelityReport report;
  report.n_pairs = n_pairs;
  report.min_pl_minus_loc = std::numeric_limits<double>::infinity();

  const int n = cfg.model.n();
  double cover_pl = 0.0, cover_loc = 0.0, cover_ft = 0.0;
  std::int64_t assigned_pl = 0, mis_pl = 0;
  std::int64_t mis_loc = 0, mis_ft = 0;
  const std::int64_t total_patches = static_cast<std::int64_t>(n_pairs) * n;

  for (int p = 0; p < n_pairs; ++p) {
    const SyntheticImage img =
        generate_image(derive_seed(seed, RngStream::kData, static_cast<std::uint64_t>(p)),
                       cfg.data);
    Rng aug_rng(seed, RngStream::kAug, static_cast<std::uint64_t>(p));
    const auto [aug_q, aug_k] =
        sample_aug_pair(aug_rng, cfg.aug, img.image.width, img.image.height);
    const PairGeometry geo = pair_geometry(aug_q, aug_k, cfg.model.grid);

    const FeatureGrid qf = encode(resample(img.image, aug_q), encoder);
    const FeatureGrid kf = encode(resample(img.image, aug_k), encoder);
    const auto loc_assign = location_assignment(geo.qgrid, geo.kgrid);
    const auto ft_assign = feature_assignment(qf, kf);

    double pair_pl = 0.0, pair_loc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double area = geo.om.areas_q(i);
      const double w = geo.weights.wq(i);
      pair_pl += w;
      cover_pl += w;
      if (w > 0.0) {
        ++assigned_pl;  // pl only assigns overlapping patches, never misassigns
      }
      const double ov_loc = geo.om.m(i, loc_assign[static_cast<std::size_t>(i)]) / area;
      pair_loc += ov_loc;
      cover_loc += ov_loc;
      if (ov_loc == 0.0) ++mis_loc;
      const double ov_ft = geo.om.m(i, ft_assign[static_cast<std::size_t>(i)]) / area;
      cover_ft += ov_ft;
      if (ov_ft == 0.0) ++mis_ft;
    }
    pair_pl /= n;
    pair_loc /= n;
    if (pair_pl >= pair_loc) ++report.pl_ge_loc_pairs;
    report.min_pl_minus_loc = std::min(report.min_pl_minus_loc, pair_pl - pair_loc);
  }

  report.pl.mean_coverage = cover_pl / static_cast<double>(total_patches);
  report.pl.misassign_rate = static_cast<double>(mis_pl) / static_cast<double>(total_patches);
  report.loc.mean_coverage = cover_loc / static_cast<double>(total_patches);
  report.loc.misassign_rate = static_cast<double>(mis_loc) / static_cast<double>(total_patches);
  report.ft.mean_coverage = cover_ft / static_cast<double>(total_patches);
  report.ft.misassign_rate = static_cast<double>(mis_ft) / static_cast<double>(total_patches);
  return report;
}

namespace {

struct ProbeData {
  Eigen::MatrixXd features;  // rows = image patches, cols = d_dense + 1 (bias)
  Eigen::VectorXd labels;
};

ProbeData collect_probe_rows(const ModelParams& encoder, const ProbeConfig& cfg,
                             std::uint64_t seed, const std::vector<int>& image_indices) {
  const ModelConfig& mc = encoder.cfg;
  const int n = mc.n();
  ProbeData out;
  out.features.resize(static_cast<Eigen::Index>(image_indices.size()) * n, mc.d_dense + 1);
  out.labels.resize(static_cast<Eigen::Index>(image_indices.size()) * n);

  AugmentationSpec identity;
  identity.crop = Rect{0.0, 0.0, static_cast<double>(cfg.data.image_size),
                       static_cast<double>(cfg.data.image_size)};
  identity.out_size = mc.out_size;

  Eigen::Index row = 0;
  for (int idx : image_indices) {
    const SyntheticImage img =
        generate_image(derive_seed(seed, RngStream::kEval, static_cast<std::uint64_t>(idx)),
                       cfg.data);
    const FeatureGrid feats = encode(resample(img.image, identity), encoder);
    const PatchGrid grid = patch_boxes(identity, mc.grid);
    const std::vector<int> counts = patch_density_labels(img, grid);
    for (int i = 0; i < n; ++i, ++row) {
      out.features.row(row).head(mc.d_dense) = feats.local.row(i);
      out.features(row, mc.d_dense) = 1.0;
      out.labels(row) = static_cast<double>(counts[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge) {
  const Eigen::MatrixXd normal = x.transpose() * x;
  const Eigen::VectorXd rhs = x.transpose() * y;
  double alpha = ridge;
  // Singular normal equations: escalate the regularizer, three retries.
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::MatrixXd reg = normal;
    reg.diagonal().array() += alpha;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd w = ldlt.solve(rhs);
      if (w.allFinite()) return w;
    }
    alpha *= 10.0;
  }
  throw std::runtime_error("singular normal equations");
}

}  // namespace

double linear_probe_mae(const ModelParams& encoder, const ProbeConfig& cfg, std::uint64_t seed) {
  if (cfg.images < 2 || cfg.train_frac <= 0.0 || cfg.train_frac >= 1.0)
    throw std::invalid_argument("invalid probe config");

  std::vector<int> order(static_cast<std::size_t>(cfg.images));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(seed, RngStream::kEval, 0xfeedull);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i)));
    std::swap(order[i], order[j]);
  }
  const auto n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.train_frac * cfg.images)));
  const std::vector<int> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  const std::vector<int> test_idx(order.begin() + static_cast<long>(n_train), order.end());
  if (test_idx.empty()) throw std::invalid_argument("empty probe test split");

  const ProbeData train = collect_probe_rows(encoder, cfg, seed, train_idx);
  const ProbeData test = collect_probe_rows(encoder, cfg, seed, test_idx);

  const Eigen::VectorXd w = ridge_fit(train.features, train.labels, cfg.ridge);
  return (test.features * w - test.labels).cwiseAbs().mean();
}

ProbeReport probe_against_random_init(const ModelParams& trained, const ProbeConfig& cfg,
                                      std::uint64_t seed) {
  ProbeReport report;
  report.probe_mae = linear_probe_mae(trained, cfg, seed);
  Rng rng(seed, RngStream::kInit, 0xbaseull);
  const ModelParams baseline = init_params(trained.cfg, rng);
  report.random_init_mae = linear_probe_mae(baseline, cfg, seed);
  return report;
}

std::vector<LambdaSweepRow> lambda_sweep(const TrainConfig& base,
                                         const std::vector<double>& lambdas,
                                         const ProbeConfig& probe_cfg, std::uint64_t eval_seed) {
  std::vector<LambdaSweepRow> rows;
  rows.reserve(lambdas.size());
  for (const double lambda : lambdas) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda outside [0,1]");
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    const TrainResult result = train(cfg);
    rows.push_back({lambda, linear_probe_mae(result.final_query, probe_cfg, eval_seed)});
  }
  return rows;
}

std::string format_lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows) {
  std::ostringstream os;
  os << "lambda,probe_mae\n";
  char buf[80];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", r.lambda, r.probe_mae);
    os << buf;
  }
  return os.str();
}

void write_lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows,
                            const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << format_lambda_sweep_csv(rows);
}

}  // namespace plm
