// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "kinesplat/compositor.hpp"
#include "kinesplat/scene.hpp"

namespace kinesplat {

// Peak signal-to-noise ratio with peak 1.0; both rasters are clamped to
// [0, 1] before the comparison. Identical inputs yield +infinity.
double metric_psnr(const RasterD& a, const RasterD& b);

// Channel-averaged structural similarity (same estimator as the loss).
double metric_ssim(const RasterD& a, const RasterD& b);

// Mean intersection-over-union over label maps. Classes whose union is empty
// in both maps are skipped; entries < 0 in gt are ignored pixels.
double metric_miou(const std::vector<int>& gt, const std::vector<int>& pred, int class_count);

struct ChamferResult {
  double accuracy = 0.0;      // mean over pred of distance to nearest gt
  double completeness = 0.0;  // mean over gt of distance to nearest pred
};

// Exact nearest-neighbour chamfer distances between point sets.
ChamferResult metric_chamfer(const std::vector<Eigen::Vector3d>& pred,
                             const std::vector<Eigen::Vector3d>& gt);

// Root-mean-square depth error over masked pixels where both depths are
// finite. Returns 0 when no pixel qualifies.
double metric_depth_rmse(const RasterD& depth, const RasterD& gt_depth,
                         const std::vector<std::uint8_t>& mask);

// One point per Gaussian whose opacity passes the threshold; the label is the
// argmax of its semantic logits. Statics first, then object canonicals in
// order (object points are canonical-frame positions).
struct LabeledPoint {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  int label = 0;
  int source = 0;  // index into the flattened static+canonical ordering
};
std::vector<LabeledPoint> extract_semantic_pointcloud(const SceneGraph& scene,
                                                      double opacity_threshold);

struct PoseError {
  double rotation = 0.0;     // geodesic angle of R_est * R_gt^-1, radians
  double translation = 0.0;  // Euclidean distance between translations
};

PoseError pose_error(const Eigen::Matrix3d& r_est, const Eigen::Vector3d& t_est,
                     const Eigen::Matrix3d& r_gt, const Eigen::Vector3d& t_gt);

// Exact static nearest-neighbour index over 3D points (median-split tree).
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Eigen::Vector3d> points);
  bool empty() const { return points_.empty(); }
  // Index of the nearest point and (optionally) its distance.
  int nearest(const Eigen::Vector3d& query, double* distance = nullptr) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(int begin, int end);
  void search(int node, const Eigen::Vector3d& q, int* best, double* best_sq) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace kinesplat
