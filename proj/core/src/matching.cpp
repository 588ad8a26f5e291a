#include "plm/matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace plm {

namespace {
constexpr double kZeroNormEps = 1e-12;
}

MatchedTargets precise_match(const OverlapMatrix& om, const FeatureGrid& key_feats) {
  const auto n = om.m.rows();
  if (om.m.cols() != key_feats.n()) throw std::invalid_argument("dimension mismatch");
  if (n != key_feats.n()) throw std::invalid_argument("dimension mismatch");

  MatchedTargets out;
  out.targets = om.m * key_feats.local;  // n x d
  out.valid.assign(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = out.targets.row(i).norm();
    const bool empty_row = (om.m.row(i).array() == 0.0).all();
    if (empty_row || norm < kZeroNormEps) {
      out.targets.row(i).setZero();
      out.valid[static_cast<std::size_t>(i)] = false;
    } else {
      out.targets.row(i) /= norm;
    }
  }
  return out;
}

std::vector<int> location_assignment(const PatchGrid& qgrid, const PatchGrid& kgrid) {
  if (qgrid.n() != kgrid.n()) throw std::invalid_argument("dimension mismatch");
  const int n = qgrid.n();
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const Rect& q = qgrid.boxes[static_cast<std::size_t>(i)];
    const double qcx = q.x0 + 0.5 * q.w;
    const double qcy = q.y0 + 0.5 * q.h;
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j < n; ++j) {
      const Rect& k = kgrid.boxes[static_cast<std::size_t>(j)];
      const double dx = qcx - (k.x0 + 0.5 * k.w);
      const double dy = qcy - (k.y0 + 0.5 * k.h);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        best_j = j;
      }
    }
    assign[static_cast<std::size_t>(i)] = best_j;
  }
  return assign;
}

std::vector<int> feature_assignment(const FeatureGrid& query_feats, const FeatureGrid& key_feats) {
  if (query_feats.n() != key_feats.n() || query_feats.d() != key_feats.d())
    throw std::invalid_argument("dimension mismatch");
  const auto n = query_feats.n();

  Eigen::VectorXd qnorm = query_feats.local.rowwise().norm();
  Eigen::VectorXd knorm = key_feats.local.rowwise().norm();
  if ((qnorm.array() < kZeroNormEps).any() || (knorm.array() < kZeroNormEps).any())
    throw std::invalid_argument("degenerate feature");

  const Eigen::MatrixXd sim = (qnorm.cwiseInverse().asDiagonal() * query_feats.local) *
                              (knorm.cwiseInverse().asDiagonal() * key_feats.local).transpose();

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (sim(i, j) > best) {
        best = sim(i, j);
        best_j = static_cast<int>(j);
      }
    }
    assign[static_cast<std::size_t>(i)] = best_j;
  }
  return assign;
}

namespace {

MatchedTargets gather_targets(const std::vector<int>& assign, const FeatureGrid& key_feats) {
  MatchedTargets out;
  out.targets.resize(static_cast<Eigen::Index>(assign.size()), key_feats.d());
  out.valid.assign(assign.size(), true);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    Eigen::RowVectorXd row = key_feats.local.row(assign[i]);
    const double norm = row.norm();
    out.targets.row(static_cast<Eigen::Index>(i)) = norm < kZeroNormEps ? row : row / norm;
  }
  return out;
}

}  // namespace

MatchedTargets location_match(const PatchGrid& qgrid, const PatchGrid& kgrid,
                              const FeatureGrid& key_feats) {
  if (kgrid.n() != key_feats.n()) throw std::invalid_argument("dimension mismatch");
  return gather_targets(location_assignment(qgrid, kgrid), key_feats);
}

MatchedTargets feature_match(const FeatureGrid& query_feats, const FeatureGrid& key_feats) {
  return gather_targets(feature_assignment(query_feats, key_feats), key_feats);
}

}  // namespace plm
