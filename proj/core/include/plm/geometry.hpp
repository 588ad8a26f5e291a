#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace plm {

// Axis-aligned rectangle in original-image coordinates, half-open
// [x0, x0+w) x [y0, y0+h). Half-open edges make grid tilings exact: shared
// borders have zero area.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double x1() const { return x0 + w; }
  double y1() const { return y0 + h; }
};

// Per-channel affine photometric jitter: x -> clamp(scale*x + shift, 0, 1).
struct PhotometricJitter {
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> shift{0.0, 0.0, 0.0};
};

// One view's augmentation: which region of the original image it shows, how
// it is flipped, and how pixel values are jittered. Rotation and other
// non-axis-aligned transforms are unsupported.
struct AugmentationSpec {
  Rect crop;
  bool hflip = false;
  bool vflip = false;
  PhotometricJitter jitter;
  int out_size = 56;
};

// The g x g partition of a view's crop, in original-image coordinates.
// Box index i is row-major over the *view*: flips are folded into the box
// positions so boxes[i] is always the original-image region seen by the
// i-th output feature.
struct PatchGrid {
  int g = 0;
  std::vector<Rect> boxes;

  int n() const { return g * g; }
};

// Pairwise intersection areas between two patch grids over the same original
// image, plus each grid's own patch areas.
struct OverlapMatrix {
  Eigen::MatrixXd m;        // n x n, m(i,j) = area(q.boxes[i] ∩ k.boxes[j])
  Eigen::VectorXd areas_q;  // n
  Eigen::VectorXd areas_k;  // n
};

// Fraction of each patch covered by the other view's crop, in [0, 1].
struct MatchWeights {
  Eigen::VectorXd wq;
  Eigen::VectorXd wk;
};

double rect_intersection_area(const Rect& a, const Rect& b);

PatchGrid patch_boxes(const AugmentationSpec& aug, int g);

OverlapMatrix overlap_matrix(const PatchGrid& q, const PatchGrid& k);

MatchWeights match_weights(const OverlapMatrix& om);

}  // namespace plm
