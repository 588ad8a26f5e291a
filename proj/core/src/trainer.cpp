#include "plm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace plm {

Matcher matcher_from_string(const std::string& name) {
  if (name == "pl") return Matcher::kPrecise;
  if (name == "loc") return Matcher::kLocation;
  if (name == "ft") return Matcher::kFeature;
  throw std::invalid_argument("unknown matcher '" + name + "' (expected pl, loc or ft)");
}

std::string to_string(Matcher m) {
  switch (m) {
    case Matcher::kPrecise: return "pl";
    case Matcher::kLocation: return "loc";
    case Matcher::kFeature: return "ft";
  }
  return "?";
}

double cosine_lr(int step, int total, double base_lr) {
  if (total < 1 || step < 0 || step > total) throw std::invalid_argument("step outside [0,total]");
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total));
}

void sgd_update(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
                double lr, double momentum, double weight_decay,
                std::vector<Eigen::MatrixXd>& velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw std::invalid_argument("shape mismatch");
    velocity[i] = momentum * velocity[i] + (grads[i] + weight_decay * params[i]);
    params[i] -= lr * velocity[i];
  }
}

PairGeometry pair_geometry(const AugmentationSpec& query_aug, const AugmentationSpec& key_aug,
                           int grid) {
  PairGeometry geo;
  geo.qgrid = patch_boxes(query_aug, grid);
  geo.kgrid = patch_boxes(key_aug, grid);
  geo.om = overlap_matrix(geo.qgrid, geo.kgrid);
  geo.weights = match_weights(geo.om);
  return geo;
}

namespace {

// Weighted InfoNCE over rows: sum_i w_i * [lse(logits_i/tau) - pos_i/tau].
// `queries` may be a tape node or a constant; `targets` likewise. negatives
// enter as a precomputed logits block.
ad::Node* weighted_nce_rows(ad::Tape& tape, ad::Node* queries, ad::Node* targets,
                            ad::Node* negative_logits, const Eigen::VectorXd& weights,
                            double tau) {
  ad::Node* pos = ad::rowwise_dot(tape, queries, targets);
  ad::Node* logits = ad::scale(tape, ad::hconcat(tape, pos, negative_logits), 1.0 / tau);
  ad::Node* lse = ad::row_log_sum_exp(tape, logits);
  ad::Node* per_row = ad::sub(tape, lse, ad::scale(tape, pos, 1.0 / tau));
  return ad::dot(tape, tape.constant(Eigen::MatrixXd(weights)), per_row);
}

Eigen::MatrixXd one_hot_rows(const std::vector<int>& assign) {
  const auto n = static_cast<Eigen::Index>(assign.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) s(i, assign[static_cast<std::size_t>(i)]) = 1.0;
  return s;
}

}  // namespace

PairLossGraph build_pair_loss(ad::Tape& tape, const std::vector<ad::Node*>& query_params,
                              const ModelConfig& mcfg, const Eigen::MatrixXd& query_patches,
                              const FeatureGrid& key_feats, const PairGeometry& geo,
                              Matcher matcher, const Eigen::MatrixXd& global_negatives,
                              const Eigen::MatrixXd& dense_negatives, double tau, double lambda) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda outside [0,1]");
  if (global_negatives.rows() == 0 || dense_negatives.rows() == 0)
    throw std::invalid_argument("no negatives");

  PairLossGraph out;
  const EncodedNodes enc = encode_on_tape(tape, query_patches, query_params, mcfg);

  // Global branch: query global feature vs detached key global.
  {
    ad::Node* pos = ad::dot(tape, enc.global_vec, tape.constant(key_feats.global_vec));
    ad::Node* negs =
        ad::matmul(tape, enc.global_vec, tape.constant(global_negatives.transpose()));
    ad::Node* logits = ad::scale(tape, ad::hconcat(tape, pos, negs), 1.0 / tau);
    ad::Node* lse = ad::row_log_sum_exp(tape, logits);
    out.global_term = ad::sub(tape, lse, ad::scale(tape, pos, 1.0 / tau));
  }

  const double weight_sum = geo.weights.wq.sum() + geo.weights.wk.sum();
  if (weight_sum == 0.0) {
    out.local_term = tape.constant(0.0);
    out.local_degenerate = true;
  } else {
    // Plain copies of the query features drive the baselines' assignments;
    // the assignment index itself is a constant of the step.
    const FeatureGrid query_plain{enc.local->value, enc.global_vec->value.row(0)};

    MatchedTargets targets_for_q;      // constants built from key features
    ad::Node* targets_for_k = nullptr; // tape-built from query features
    std::vector<bool> k_side_valid;

    switch (matcher) {
      case Matcher::kPrecise: {
        targets_for_q = precise_match(geo.om, key_feats);
        const OverlapMatrix omt{geo.om.m.transpose(), geo.om.areas_k, geo.om.areas_q};
        k_side_valid = precise_match(omt, query_plain).valid;
        targets_for_k = ad::row_l2_normalize(
            tape, ad::matmul(tape, tape.constant(geo.om.m.transpose()), enc.local));
        break;
      }
      case Matcher::kLocation: {
        targets_for_q = location_match(geo.qgrid, geo.kgrid, key_feats);
        const auto assign = location_assignment(geo.kgrid, geo.qgrid);
        k_side_valid.assign(assign.size(), true);
        targets_for_k = ad::row_l2_normalize(
            tape, ad::matmul(tape, tape.constant(one_hot_rows(assign)), enc.local));
        break;
      }
      case Matcher::kFeature: {
        targets_for_q = feature_match(query_plain, key_feats);
        const auto assign = feature_assignment(key_feats, query_plain);
        k_side_valid.assign(assign.size(), true);
        targets_for_k = ad::row_l2_normalize(
            tape, ad::matmul(tape, tape.constant(one_hot_rows(assign)), enc.local));
        break;
      }
    }

    Eigen::VectorXd wq_eff = geo.weights.wq;
    Eigen::VectorXd wk_eff = geo.weights.wk;
    for (Eigen::Index i = 0; i < wq_eff.size(); ++i) {
      if (!targets_for_q.valid[static_cast<std::size_t>(i)]) wq_eff(i) = 0.0;
      if (!k_side_valid[static_cast<std::size_t>(i)]) wk_eff(i) = 0.0;
    }

    ad::Node* dense_negs_for_q =
        ad::matmul(tape, enc.local, tape.constant(dense_negatives.transpose()));
    ad::Node* term_q = weighted_nce_rows(tape, enc.local, tape.constant(targets_for_q.targets),
                                         dense_negs_for_q, wq_eff, tau);

    ad::Node* key_local = tape.constant(key_feats.local);
    ad::Node* dense_negs_for_k =
        tape.constant(Eigen::MatrixXd(key_feats.local * dense_negatives.transpose()));
    ad::Node* term_k =
        weighted_nce_rows(tape, key_local, targets_for_k, dense_negs_for_k, wk_eff, tau);

    out.local_term = ad::scale(tape, ad::add(tape, term_q, term_k), 1.0 / weight_sum);
  }

  out.combined = ad::add(tape, ad::scale(tape, out.global_term, 1.0 - lambda),
                         ad::scale(tape, out.local_term, lambda));
  return out;
}

namespace {

void validate_config(const TrainConfig& cfg) {
  if (cfg.steps < 1 || cfg.batch_size < 1 || cfg.images < 1)
    throw std::invalid_argument("steps, batch_size and images must be >= 1");
  if (cfg.lr <= 0.0 || cfg.tau <= 0.0) throw std::invalid_argument("lr and tau must be positive");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw std::invalid_argument("lambda outside [0,1]");
  if (cfg.ema_m < 0.0 || cfg.ema_m >= 1.0) throw std::invalid_argument("momentum outside [0,1)");
  if (cfg.aug.grid != cfg.model.grid || cfg.aug.out_size != cfg.model.out_size)
    throw std::invalid_argument("augmentation grid/out_size must match the model");
}

struct PairOutcome {
  std::vector<Eigen::MatrixXd> grads;
  double global_v = 0.0;
  double local_v = 0.0;
  double combined_v = 0.0;
  bool degenerate = false;
  Eigen::RowVectorXd key_global;
  Eigen::RowVectorXd key_dense;
};

PairOutcome eval_pair(const TrainConfig& cfg, const BranchPair& branches,
                      const SyntheticImage& img, const AugmentationSpec& query_aug,
                      const AugmentationSpec& key_aug, const Eigen::MatrixXd& gnegs,
                      const Eigen::MatrixXd& dnegs) {
  const Image query_view = resample(img.image, query_aug);
  const Image key_view = resample(img.image, key_aug);
  const FeatureGrid key_feats = encode(key_view, branches.key);
  const PairGeometry geo = pair_geometry(query_aug, key_aug, cfg.model.grid);

  ad::Tape tape;
  const auto qnodes = param_nodes(tape, branches.query, true);
  const auto graph =
      build_pair_loss(tape, qnodes, cfg.model, patchify(query_view, cfg.model), key_feats, geo,
                      cfg.matcher, gnegs, dnegs, cfg.tau, cfg.lambda);
  tape.backward(graph.combined);

  PairOutcome o;
  o.grads.reserve(kParamCount);
  for (const auto* node : qnodes) o.grads.push_back(node->grad);
  o.global_v = graph.global_term->scalar();
  o.local_v = graph.local_term->scalar();
  o.combined_v = graph.combined->scalar();
  o.degenerate = graph.local_degenerate;
  o.key_global = key_feats.global_vec;
  o.key_dense = key_feats.local.colwise().mean();
  return o;
}

void accumulate(PairOutcome& into, const PairOutcome& other, double w_into, double w_other) {
  for (std::size_t i = 0; i < into.grads.size(); ++i)
    into.grads[i] = w_into * into.grads[i] + w_other * other.grads[i];
  into.global_v = w_into * into.global_v + w_other * other.global_v;
  into.local_v = w_into * into.local_v + w_other * other.local_v;
  into.combined_v = w_into * into.combined_v + w_other * other.combined_v;
  into.degenerate = into.degenerate || other.degenerate;
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg_in)
    : cfg(cfg_in),
      global_queue(cfg_in.queue_global, cfg_in.model.d_global),
      dense_queue(cfg_in.queue_dense, cfg_in.model.d_dense) {
  validate_config(cfg);

  Rng init_rng(cfg.seed, RngStream::kInit);
  branches.query = init_params(cfg.model, init_rng);
  branches.key = branches.query;  // exact copy
  branches.momentum = cfg.ema_m;

  velocity.reserve(kParamCount);
  for (const auto& t : branches.query.tensors)
    velocity.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));

  pool.reserve(static_cast<std::size_t>(cfg.images));
  for (int i = 0; i < cfg.images; ++i)
    pool.push_back(generate_image(derive_seed(cfg.seed, RngStream::kData, i), cfg.data));

  // One key-branch batch seeds the queues so the very first loss has
  // negatives to contrast against.
  Rng warm_rng(cfg.seed, RngStream::kWarmup);
  Eigen::MatrixXd warm_global(cfg.batch_size, cfg.model.d_global);
  Eigen::MatrixXd warm_dense(cfg.batch_size, cfg.model.d_dense);
  for (int s = 0; s < cfg.batch_size; ++s) {
    const auto& img = pool[static_cast<std::size_t>(warm_rng.uniform_int(0, cfg.images - 1))];
    const auto aug = sample_aug(warm_rng, cfg.aug, img.image.width, img.image.height);
    const FeatureGrid feats = encode(resample(img.image, aug), branches.key);
    warm_global.row(s) = feats.global_vec;
    warm_dense.row(s) = feats.local.colwise().mean();
  }
  global_queue.push(warm_global);
  dense_queue.push(warm_dense);
}

TrainState init_state(const TrainConfig& cfg) { return TrainState(cfg); }

BatchEval evaluate_batch(const TrainState& state, int step) {
  const TrainConfig& cfg = state.cfg;
  const int batch = cfg.batch_size;
  const Eigen::MatrixXd gnegs = state.global_queue.snapshot();
  const Eigen::MatrixXd dnegs = state.dense_queue.snapshot();

  Rng batch_rng(cfg.seed, RngStream::kBatch, static_cast<std::uint64_t>(step));
  std::vector<int> image_idx(static_cast<std::size_t>(batch));
  for (auto& idx : image_idx) idx = static_cast<int>(batch_rng.uniform_int(0, cfg.images - 1));

  struct Slot {
    PairOutcome out;
    std::vector<Eigen::RowVectorXd> push_global, push_dense;
    std::string error;
    bool nan = false;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(batch));

  auto run_slot = [&](int s) {
    Slot& slot = slots[static_cast<std::size_t>(s)];
    try {
      const auto& img = state.pool[static_cast<std::size_t>(image_idx[static_cast<std::size_t>(s)])];
      const std::uint64_t aug_stream = static_cast<std::uint64_t>(step) * batch + s;
      Rng aug_rng(cfg.seed, RngStream::kAug, aug_stream);
      const auto [aug_q, aug_k] =
          sample_aug_pair(aug_rng, cfg.aug, img.image.width, img.image.height);

      slot.out = eval_pair(cfg, state.branches, img, aug_q, aug_k, gnegs, dnegs);
      slot.push_global.push_back(slot.out.key_global);
      slot.push_dense.push_back(slot.out.key_dense);
      if (cfg.symmetrize) {
        const auto swapped = eval_pair(cfg, state.branches, img, aug_k, aug_q, gnegs, dnegs);
        accumulate(slot.out, swapped, 0.5, 0.5);
        slot.push_global.push_back(swapped.key_global);
        slot.push_dense.push_back(swapped.key_dense);
      }
      slot.nan = !std::isfinite(slot.out.combined_v);
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, batch));
  if (threads == 1) {
    for (int s = 0; s < batch; ++s) run_slot(s);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
      workers.emplace_back([&, t] {
        for (int s = t; s < batch; s += threads) run_slot(s);
      });
    for (auto& w : workers) w.join();
  }

  for (const auto& slot : slots)
    if (!slot.error.empty()) throw std::runtime_error("batch evaluation failed: " + slot.error);

  BatchEval ev;
  ev.grads.reserve(kParamCount);
  for (const auto& t : state.branches.query.tensors)
    ev.grads.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));

  std::ostringstream nan_dump;
  const double inv_batch = 1.0 / batch;
  std::vector<Eigen::RowVectorXd> push_global, push_dense;
  for (int s = 0; s < batch; ++s) {
    const Slot& slot = slots[static_cast<std::size_t>(s)];
    if (slot.nan) {
      if (nan_dump.tellp() > 0) nan_dump << "; ";
      nan_dump << "step=" << step << " slot=" << s
               << " image_index=" << image_idx[static_cast<std::size_t>(s)]
               << " aug_stream=" << static_cast<std::uint64_t>(step) * batch + s
               << " seed=" << cfg.seed;
      continue;
    }
    for (std::size_t i = 0; i < ev.grads.size(); ++i) ev.grads[i] += inv_batch * slot.out.grads[i];
    ev.global_mean += inv_batch * slot.out.global_v;
    ev.local_mean += inv_batch * slot.out.local_v;
    ev.combined_mean += inv_batch * slot.out.combined_v;
    ev.any_degenerate = ev.any_degenerate || slot.out.degenerate;
    for (const auto& row : slot.push_global) push_global.push_back(row);
    for (const auto& row : slot.push_dense) push_dense.push_back(row);
  }
  ev.nan_diagnostics = nan_dump.str();

  ev.key_globals.resize(static_cast<Eigen::Index>(push_global.size()), cfg.model.d_global);
  ev.key_denses.resize(static_cast<Eigen::Index>(push_dense.size()), cfg.model.d_dense);
  for (std::size_t r = 0; r < push_global.size(); ++r)
    ev.key_globals.row(static_cast<Eigen::Index>(r)) = push_global[r];
  for (std::size_t r = 0; r < push_dense.size(); ++r)
    ev.key_denses.row(static_cast<Eigen::Index>(r)) = push_dense[r];
  return ev;
}

StepRecord train_step(TrainState& state) {
  const auto t0 = std::chrono::steady_clock::now();
  const double lr = cosine_lr(state.step, state.cfg.steps, state.cfg.lr);

  BatchEval ev = evaluate_batch(state, state.step);
  if (!ev.nan_diagnostics.empty()) throw TrainAbort("NaN loss", ev.nan_diagnostics);

  sgd_update(state.branches.query.tensors, ev.grads, lr, state.cfg.sgd_momentum,
             state.cfg.weight_decay, state.velocity);
  ema_update(state.branches);
  state.global_queue.push(ev.key_globals);
  state.dense_queue.push(ev.key_denses);
  state.any_local_degenerate = state.any_local_degenerate || ev.any_degenerate;

  StepRecord rec;
  rec.step = state.step;
  rec.global_loss = ev.global_mean;
  rec.local_loss = ev.local_mean;
  rec.combined = ev.combined_mean;
  rec.lr = lr;
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ++state.step;
  return rec;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  TrainState state(cfg);
  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.steps));

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  try {
    for (int s = 0; s < cfg.steps; ++s) {
      result.log.push_back(train_step(state));
      if (!out_dir.empty() && cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 &&
          s + 1 < cfg.steps) {
        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_%d.bin", s + 1);
        save_checkpoint(out_dir / name, state.branches.query);
      }
    }
  } catch (const TrainAbort&) {
    if (!out_dir.empty()) write_log_csv(result.log, out_dir / "log.csv");
    throw;
  }

  if (!out_dir.empty()) {
    write_log_csv(result.log, out_dir / "log.csv");
    save_checkpoint(out_dir / "ckpt_final.bin", state.branches.query);
  }
  result.final_query = state.branches.query;
  result.any_local_degenerate = state.any_local_degenerate;
  return result;
}

std::string format_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os << "step,global_loss,local_loss,combined,lr,wall_ms\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.step, r.global_loss,
                  r.local_loss, r.combined, r.lr, r.wall_ms);
    os << buf;
  }
  return os.str();
}

void write_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << format_log_csv(log);
}

double full_loss_gradcheck(std::uint64_t seed, double h) {
  ModelConfig mc;
  mc.grid = 2;
  mc.out_size = 8;
  mc.d_backbone = 8;
  mc.d_dense = 4;
  mc.d_global = 4;

  DataConfig dc;
  dc.image_size = 16;
  dc.reference_g = 2;

  AugSamplerConfig ac;
  ac.grid = 2;
  ac.out_size = 8;
  ac.scale_min = 0.4;
  ac.scale_max = 0.9;

  Rng init_rng(seed, RngStream::kInit);
  const ModelParams query_params = init_params(mc, init_rng);
  Rng key_rng(seed, RngStream::kInit, 1);
  const ModelParams key_params = init_params(mc, key_rng);

  const SyntheticImage img = generate_image(derive_seed(seed, RngStream::kData, 0), dc);
  Rng aug_rng(seed, RngStream::kAug);
  const auto [aug_q, aug_k] = sample_aug_pair(aug_rng, ac, dc.image_size, dc.image_size);

  const Image query_view = resample(img.image, aug_q);
  const FeatureGrid key_feats = encode(resample(img.image, aug_k), key_params);
  const PairGeometry geo = pair_geometry(aug_q, aug_k, mc.grid);
  const Eigen::MatrixXd query_patches = patchify(query_view, mc);

  Rng neg_rng(seed, RngStream::kEval);
  auto unit_rows = [&neg_rng](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = neg_rng.uniform(-1.0, 1.0);
      m.row(r).normalize();
    }
    return m;
  };
  const Eigen::MatrixXd gnegs = unit_rows(3, mc.d_global);
  const Eigen::MatrixXd dnegs = unit_rows(3, mc.d_dense);
  const double tau = 0.2;
  const double lambda = 0.5;

  auto build = [&](ad::Tape& tape, const std::vector<Eigen::MatrixXd>& params,
                   bool requires_grad) {
    std::vector<ad::Node*> nodes;
    nodes.reserve(params.size());
    for (const auto& t : params) nodes.push_back(tape.leaf(t, requires_grad));
    return std::make_pair(
        nodes, build_pair_loss(tape, nodes, mc, query_patches, key_feats, geo, Matcher::kPrecise,
                               gnegs, dnegs, tau, lambda));
  };

  auto value_fn = [&](const std::vector<Eigen::MatrixXd>& params) {
    ad::Tape tape;
    return build(tape, params, false).second.combined->scalar();
  };
  auto grad_fn = [&](const std::vector<Eigen::MatrixXd>& params) {
    ad::Tape tape;
    auto [nodes, graph] = build(tape, params, true);
    tape.backward(graph.combined);
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(nodes.size());
    for (const auto* node : nodes) grads.push_back(node->grad);
    return grads;
  };

  return ad::gradcheck(value_fn, grad_fn, query_params.tensors, h);
}

}  // namespace plm
