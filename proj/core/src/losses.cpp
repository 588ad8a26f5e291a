#include "plm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace plm {

namespace {
constexpr double kZeroNormEps = 1e-12;

Eigen::RowVectorXd renormalized(const Eigen::RowVectorXd& v) {
  const double norm = v.norm();
  if (norm < kZeroNormEps) throw std::invalid_argument("zero-norm vector in contrastive loss");
  return v / norm;
}
}  // namespace

NegativeQueue::NegativeQueue(Eigen::Index capacity, Eigen::Index dim)
    : storage_(Eigen::MatrixXd::Zero(capacity, dim)), capacity_(capacity) {
  if (capacity < 1 || dim < 1) throw std::invalid_argument("queue capacity and dim must be >= 1");
}

void NegativeQueue::push(const Eigen::MatrixXd& batch) {
  if (batch.rows() == 0) return;
  if (batch.cols() != storage_.cols()) throw std::invalid_argument("dimension mismatch");
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    storage_.row(cursor_) = renormalized(batch.row(r));
    cursor_ = (cursor_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }
}

double info_nce(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k_pos,
                const Eigen::MatrixXd& negatives, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (negatives.rows() == 0) throw std::invalid_argument("no negatives");
  if (q.size() != k_pos.size() || q.size() != negatives.cols())
    throw std::invalid_argument("dimension mismatch");

  const Eigen::RowVectorXd qn = renormalized(q);
  const double pos = qn.dot(renormalized(k_pos)) / tau;
  const Eigen::VectorXd neg = (negatives * qn.transpose()) / tau;

  const double shift = std::max(pos, neg.maxCoeff());
  const double denom = std::exp(pos - shift) + (neg.array() - shift).exp().sum();
  // -log softmax of the positive logit: shift-invariant by construction.
  return -(pos - shift) + std::log(denom);
}

double info_nce(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k_pos,
                const NegativeQueue& negatives, double tau) {
  if (negatives.empty()) throw std::invalid_argument("no negatives");
  return info_nce(q, k_pos, negatives.snapshot(), tau);
}

double global_loss(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k,
                   const NegativeQueue& queue, double tau) {
  return info_nce(q, k, queue, tau);
}

LocalLossResult weighted_local_loss(const FeatureGrid& Q, const FeatureGrid& K,
                                    const MatchedTargets& target_for_q,
                                    const MatchedTargets& target_for_k,
                                    const MatchWeights& weights,
                                    const NegativeQueue& dense_queue, double tau) {
  const auto n = Q.n();
  if (K.n() != n || target_for_q.targets.rows() != n || target_for_k.targets.rows() != n ||
      weights.wq.size() != n || weights.wk.size() != n)
    throw std::invalid_argument("size mismatch");
  if (dense_queue.empty()) throw std::invalid_argument("no negatives");

  const double weight_sum = weights.wq.sum() + weights.wk.sum();
  if (weight_sum == 0.0) return {0.0, true};

  const Eigen::MatrixXd negs = dense_queue.snapshot();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (weights.wq(i) > 0.0 && target_for_q.valid[ui])
      acc += weights.wq(i) * info_nce(Q.local.row(i), target_for_q.targets.row(i), negs, tau);
    if (weights.wk(i) > 0.0 && target_for_k.valid[ui])
      acc += weights.wk(i) * info_nce(K.local.row(i), target_for_k.targets.row(i), negs, tau);
  }
  return {acc / weight_sum, false};
}

LocalLossResult local_loss(const FeatureGrid& Q, const FeatureGrid& K, const OverlapMatrix& om,
                           const NegativeQueue& dense_queue, double tau) {
  if (om.m.rows() != Q.n() || om.m.cols() != K.n()) throw std::invalid_argument("size mismatch");

  const MatchWeights weights = match_weights(om);
  // K' targets pair with Q rows; Q' targets (transposed overlap) with K rows.
  const MatchedTargets k_prime = precise_match(om, K);
  const OverlapMatrix omt{om.m.transpose(), om.areas_k, om.areas_q};
  const MatchedTargets q_prime = precise_match(omt, Q);
  return weighted_local_loss(Q, K, k_prime, q_prime, weights, dense_queue, tau);
}

double combined_loss(double global, double local, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda outside [0,1]");
  return (1.0 - lambda) * global + lambda * local;
}

}  // namespace plm
