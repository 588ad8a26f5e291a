#pragma once

#include <Eigen/Dense>
#include <vector>

#include "plm/geometry.hpp"

namespace plm {

// One view's encoded features: n = g*g local vectors (rows) plus one pooled
// global vector. Rows produced by the encoder are unit L2-norm.
struct FeatureGrid {
  Eigen::MatrixXd local;          // n x d
  Eigen::RowVectorXd global_vec;  // d_g

  Eigen::Index n() const { return local.rows(); }
  Eigen::Index d() const { return local.cols(); }
};

// Per-patch target features built by a matcher. Rows with no defined target
// (no overlap, or a zero-norm combination) carry valid=false and an all-zero
// row; every valid row is unit L2-norm.
struct MatchedTargets {
  Eigen::MatrixXd targets;  // n x d
  std::vector<bool> valid;  // n
};

// Overlap-weighted matching: target i is the row-normalized combination of
// key features weighted by row i of the overlap matrix.
MatchedTargets precise_match(const OverlapMatrix& om, const FeatureGrid& key_feats);

// Nearest-center baseline: target i is the (normalized) key feature whose
// patch center is closest to query patch i's center. Ties break to the
// lowest index. Always assigns, even with zero overlap.
MatchedTargets location_match(const PatchGrid& qgrid, const PatchGrid& kgrid,
                              const FeatureGrid& key_feats);

// Cosine-argmax baseline: target i is the key feature most similar to query
// feature i. Ties break to the lowest index.
MatchedTargets feature_match(const FeatureGrid& query_feats, const FeatureGrid& key_feats);

// Assignment index per query patch for the two one-to-one baselines.
std::vector<int> location_assignment(const PatchGrid& qgrid, const PatchGrid& kgrid);
std::vector<int> feature_assignment(const FeatureGrid& query_feats, const FeatureGrid& key_feats);

}  // namespace plm
