// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kinesplat/losses.hpp"

namespace kinesplat {

double metric_psnr(const RasterD& a, const RasterD& b) {
  if (a.v.size() != b.v.size()) {
    throw std::invalid_argument("metric_psnr: raster shapes differ");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double x = std::clamp(a.v[i], 0.0, 1.0);
    const double y = std::clamp(b.v[i], 0.0, 1.0);
    mse += (x - y) * (x - y);
  }
  mse /= static_cast<double>(a.v.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double metric_ssim(const RasterD& a, const RasterD& b) { return ssim(a, b, nullptr); }

double metric_miou(const std::vector<int>& gt, const std::vector<int>& pred, int class_count) {
  if (gt.size() != pred.size()) throw std::invalid_argument("metric_miou: size mismatch");
  std::vector<std::int64_t> inter(class_count, 0), uni(class_count, 0);
  std::vector<std::int64_t> gt_count(class_count, 0), pred_count(class_count, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0) continue;
    if (gt[i] >= class_count || pred[i] < 0 || pred[i] >= class_count) {
      throw std::invalid_argument("metric_miou: label out of range");
    }
    ++gt_count[gt[i]];
    ++pred_count[pred[i]];
    if (gt[i] == pred[i]) ++inter[gt[i]];
  }
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < class_count; ++k) {
    uni[k] = gt_count[k] + pred_count[k] - inter[k];
    if (uni[k] == 0) continue;  // class absent from both maps
    sum += static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    ++used;
  }
  return used == 0 ? 0.0 : sum / used;
}

ChamferResult metric_chamfer(const std::vector<Eigen::Vector3d>& pred,
                             const std::vector<Eigen::Vector3d>& gt) {
  ChamferResult r;
  if (pred.empty() || gt.empty()) {
    r.accuracy = r.completeness = std::numeric_limits<double>::infinity();
    if (pred.empty() && gt.empty()) r.accuracy = r.completeness = 0.0;
    return r;
  }
  const KdTree3 gt_tree(gt);
  double acc = 0.0;
  for (const auto& p : pred) {
    double d = 0.0;
    gt_tree.nearest(p, &d);
    acc += d;
  }
  r.accuracy = acc / static_cast<double>(pred.size());

  const KdTree3 pred_tree(pred);
  double comp = 0.0;
  for (const auto& p : gt) {
    double d = 0.0;
    pred_tree.nearest(p, &d);
    comp += d;
  }
  r.completeness = comp / static_cast<double>(gt.size());
  return r;
}

double metric_depth_rmse(const RasterD& depth, const RasterD& gt_depth,
                         const std::vector<std::uint8_t>& mask) {
  if (depth.v.size() != gt_depth.v.size() || depth.c != 1) {
    throw std::invalid_argument("metric_depth_rmse: raster shapes differ");
  }
  const std::size_t n = depth.v.size();
  if (!mask.empty() && mask.size() != n) {
    throw std::invalid_argument("metric_depth_rmse: mask size mismatch");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    if (!std::isfinite(depth.v[i]) || !std::isfinite(gt_depth.v[i])) continue;
    const double d = depth.v[i] - gt_depth.v[i];
    sum += d * d;
    ++count;
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

PoseError pose_error(const Eigen::Matrix3d& r_est, const Eigen::Vector3d& t_est,
                     const Eigen::Matrix3d& r_gt, const Eigen::Vector3d& t_gt) {
  PoseError e;
  const Eigen::Matrix3d rel = r_est * r_gt.transpose();
  const double c = std::clamp((rel.trace() - 1.0) * 0.5, -1.0, 1.0);
  e.rotation = std::acos(c);
  e.translation = (t_est - t_gt).norm();
  return e;
}

KdTree3::KdTree3(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(points_.size());
  if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree3::build(int begin, int end) {
  if (begin >= end) return -1;
  // Split along the widest axis of the subset's bounding box.
  Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{order_[mid], axis, -1, -1});
  const int left = build(begin, mid);
  const int right = build(mid + 1, end);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree3::search(int node, const Eigen::Vector3d& q, int* best, double* best_sq) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const double d2 = (points_[n.point] - q).squaredNorm();
  if (d2 < *best_sq) {
    *best_sq = d2;
    *best = n.point;
  }
  const double delta = q[n.axis] - points_[n.point][n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, best, best_sq);
  if (delta * delta < *best_sq) search(far, q, best, best_sq);
}

int KdTree3::nearest(const Eigen::Vector3d& query, double* distance) const {
  if (points_.empty()) throw std::logic_error("KdTree3::nearest on empty tree");
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, query, &best, &best_sq);
  if (distance) *distance = std::sqrt(best_sq);
  return best;
}

namespace {

int argmax_label(const Eigen::VectorXd& logits) {
  int best = 0;
  for (int k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return best;
}

}  // namespace

std::vector<LabeledPoint> extract_semantic_pointcloud(const SceneGraph& scene,
                                                      double opacity_threshold) {
  std::vector<LabeledPoint> out;
  int source = 0;
  auto visit = [&](const Gaussian3D& g) {
    if (g.opacity() >= opacity_threshold && g.logits.size() > 0)
      out.push_back({g.mu, argmax_label(g.logits), source});
    ++source;
  };
  for (const auto& g : scene.static_gaussians) visit(g);
  for (const auto& obj : scene.objects)
    for (const auto& g : obj.canonical) visit(g);
  return out;
}

}  // namespace kinesplat
