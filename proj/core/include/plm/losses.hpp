#pragma once

#include <Eigen/Dense>

#include "plm/geometry.hpp"
#include "plm/matching.hpp"

namespace plm {

struct LossConfig {
  double tau = 0.2;
  double lambda = 0.5;
};

// Fixed-capacity FIFO of unit-norm negative key vectors. Pushes normalize
// and overwrite the oldest entries once full. Single writer; loss evaluation
// reads a snapshot.
class NegativeQueue {
 public:
  NegativeQueue(Eigen::Index capacity, Eigen::Index dim);

  void push(const Eigen::MatrixXd& batch);  // rows are vectors of dimension d

  Eigen::Index size() const { return size_; }
  Eigen::Index capacity() const { return capacity_; }
  Eigen::Index dim() const { return storage_.cols(); }
  bool empty() const { return size_ == 0; }

  // The stored negatives, oldest-to-newest order not guaranteed (the loss is
  // permutation-invariant over negatives).
  Eigen::MatrixXd snapshot() const { return storage_.topRows(size_); }

  // Entry at FIFO slot i (for tests).
  Eigen::RowVectorXd entry(Eigen::Index i) const { return storage_.row(i); }

 private:
  Eigen::MatrixXd storage_;  // capacity x d
  Eigen::Index capacity_ = 0;
  Eigen::Index size_ = 0;
  Eigen::Index cursor_ = 0;
};

// -log[ exp(q.k+/tau) / (exp(q.k+/tau) + sum_j exp(q.k-_j/tau)) ], computed
// with a log-sum-exp shift. q and k_pos are re-normalized on entry.
double info_nce(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k_pos,
                const NegativeQueue& negatives, double tau);

// Same computation against an explicit negative matrix (rows = negatives).
double info_nce(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k_pos,
                const Eigen::MatrixXd& negatives, double tau);

double global_loss(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& k,
                   const NegativeQueue& queue, double tau);

struct LocalLossResult {
  double value = 0.0;
  bool degenerate = false;  // all weights zero (disjoint crops)
};

// Weighted symmetric dense loss over precise matched targets:
//   (1/sum_i(wq_i+wk_i)) * sum_i [ wq_i*nce(Q_i,K'_i) + wk_i*nce(K_i,Q'_i) ]
// Terms with invalid targets contribute 0. If all weights are zero the loss
// is 0 with the degenerate flag set.
LocalLossResult local_loss(const FeatureGrid& Q, const FeatureGrid& K, const OverlapMatrix& om,
                           const NegativeQueue& dense_queue, double tau);

// Generalized form used for the baseline matchers: targets are supplied
// instead of derived from the overlap matrix. target_for_q pairs with Q
// rows, target_for_k with K rows; weights come from the overlap geometry.
LocalLossResult weighted_local_loss(const FeatureGrid& Q, const FeatureGrid& K,
                                    const MatchedTargets& target_for_q,
                                    const MatchedTargets& target_for_k,
                                    const MatchWeights& weights,
                                    const NegativeQueue& dense_queue, double tau);

double combined_loss(double global, double local, double lambda);

}  // namespace plm
