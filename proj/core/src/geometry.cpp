#include "plm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plm {

double rect_intersection_area(const Rect& a, const Rect& b) {
  const double ix = std::min(a.x1(), b.x1()) - std::max(a.x0, b.x0);
  const double iy = std::min(a.y1(), b.y1()) - std::max(a.y0, b.y0);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  return ix * iy;
}

PatchGrid patch_boxes(const AugmentationSpec& aug, int g) {
  if (g < 1) throw std::invalid_argument("grid side must be >= 1");
  const Rect& c = aug.crop;
  if (!(std::isfinite(c.x0) && std::isfinite(c.y0) && std::isfinite(c.w) && std::isfinite(c.h)))
    throw std::invalid_argument("non-finite crop");
  if (c.w <= 0.0 || c.h <= 0.0) throw std::invalid_argument("degenerate crop");

  const double bw = c.w / g;
  const double bh = c.h / g;

  PatchGrid grid;
  grid.g = g;
  grid.boxes.reserve(static_cast<std::size_t>(g) * g);
  for (int row = 0; row < g; ++row) {
    // A flipped view shows the crop mirrored, so output feature (row, col)
    // looks at the mirrored cell of the crop. Remapping indices here keeps
    // everything downstream flip-agnostic.
    const int src_row = aug.vflip ? g - 1 - row : row;
    for (int col = 0; col < g; ++col) {
      const int src_col = aug.hflip ? g - 1 - col : col;
      grid.boxes.push_back(Rect{c.x0 + src_col * bw, c.y0 + src_row * bh, bw, bh});
    }
  }
  return grid;
}

OverlapMatrix overlap_matrix(const PatchGrid& q, const PatchGrid& k) {
  if (q.g != k.g) throw std::invalid_argument("grid size mismatch");
  const int n = q.n();
  OverlapMatrix om;
  om.m.resize(n, n);
  om.areas_q.resize(n);
  om.areas_k.resize(n);
  for (int i = 0; i < n; ++i) om.areas_q(i) = q.boxes[i].area();
  for (int j = 0; j < n; ++j) om.areas_k(j) = k.boxes[j].area();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      om.m(i, j) = rect_intersection_area(q.boxes[i], k.boxes[j]);
  return om;
}

MatchWeights match_weights(const OverlapMatrix& om) {
  const auto n = om.m.rows();
  if (om.areas_q.size() != n || om.areas_k.size() != om.m.cols())
    throw std::invalid_argument("overlap matrix shape mismatch");
  if ((om.areas_q.array() <= 0.0).any() || (om.areas_k.array() <= 0.0).any())
    throw std::invalid_argument("degenerate patch");

  MatchWeights w;
  w.wq = om.m.rowwise().sum().cwiseQuotient(om.areas_q);
  w.wk = om.m.colwise().sum().transpose().cwiseQuotient(om.areas_k);
  return w;
}

}  // namespace plm
