// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace kinesplat {

// Branch threshold for the straight-line limit of the unicycle arc step.
inline constexpr double kOmegaEps = 1e-6;
// Default extrapolation horizon for track pose queries, in frames.
inline constexpr double kDefaultPoseHorizon = 5.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Gaussian3D {
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // unit
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  std::vector<Eigen::Vector3d> sh;  // one RGB triplet per basis function
  Eigen::VectorXd logits;           // per-class semantic logits

  double opacity() const { return sigmoid(opacity_logit); }
  Eigen::Vector3d scale() const { return log_scale.array().exp(); }
  int sh_degree() const;
};

// Sigma = R diag(exp(2 ls)) R^T; symmetric positive definite for finite inputs.
Eigen::Matrix3d covariance_of(const Gaussian3D& g);

struct FrameCamera {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();  // upper triangular
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  // world-to-camera
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double timestamp = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d exposure_A = Eigen::Matrix3d::Identity();
  Eigen::Vector3d exposure_b = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -R.transpose() * t; }
};

struct UnicycleState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // unwrapped yaw, radians
};

// Ground-plane trajectory: a pose sample per timestamp plus per-interval
// forward speed v (m/frame) and yaw rate w (rad/frame).
struct UnicycleTrack {
  std::vector<double> timestamps;  // strictly increasing
  std::vector<UnicycleState> states;
  std::vector<double> heights;
  std::vector<Eigen::Vector2d> velocities;  // (v, w), size states-1
};

struct DynamicObject {
  int id = 0;
  std::vector<Gaussian3D> canonical;
  UnicycleTrack track;
};

struct SceneGraph {
  int class_count = 0;
  Eigen::Vector3d background_color = Eigen::Vector3d::Zero();
  std::vector<Gaussian3D> static_gaussians;
  std::vector<DynamicObject> objects;
};

// Yaw-about-z plus translation; the only rigid motion tracks can express.
struct TrackPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;

  Eigen::Matrix3d rotation() const;
  Eigen::Vector3d translation() const { return {x, y, z}; }
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation(); }
};

Eigen::Quaterniond yaw_quaternion(double theta);

// One arc step: advance (x, y, theta) by tau frames at rates (v, w).
// |w| < w_eps switches to the second-order straight-line expansion.
UnicycleState propagate_unicycle(const UnicycleState& s, double v, double w, double tau,
                                 double w_eps = kOmegaEps);

// d(x', y', theta') / d(x, y, theta, v, w) for a single propagate_unicycle step.
struct PropagateJac {
  UnicycleState next;
  Eigen::Matrix<double, 3, 5> d;  // rows x',y',theta'; cols x,y,theta,v,w
};
PropagateJac propagate_unicycle_jac(const UnicycleState& s, double v, double w, double tau,
                                    double w_eps = kOmegaEps);

enum class PoseInterp { kUnicycle, kLinear };

// Pose at an arbitrary timestamp. Stored states are returned verbatim;
// unobserved times propagate the nearest earlier state through the arc step
// (or interpolate linearly under kLinear), with z always linear in t.
// Queries farther than `horizon` frames outside the observed range throw.
TrackPose pose_at(const UnicycleTrack& track, double t,
                  PoseInterp interp = PoseInterp::kUnicycle,
                  double horizon = kDefaultPoseHorizon);

// Dependency of a kUnicycle pose query on the track parameters it touched.
struct PoseAtJac {
  int seg = 0;         // state index the pose was propagated from
  int vseg = 0;        // velocity interval supplying (v, w)
  bool exact = false;  // t hit a stored timestamp
  Eigen::Matrix<double, 3, 5> dpose =
      Eigen::Matrix<double, 3, 5>::Zero();  // d(x,y,theta)/d(x_s,y_s,theta_s,v,w)
  int zi0 = 0, zi1 = 0;  // height samples blended for z
  double dz0 = 0.0, dz1 = 0.0;
};
TrackPose pose_at_jac(const UnicycleTrack& track, double t, PoseAtJac* jac,
                      double horizon = kDefaultPoseHorizon);

struct WorldSplatSource {
  int object = -1;  // <0: static_gaussians[index]; otherwise objects[object].canonical[index]
  int index = 0;
};

struct WorldView {
  std::vector<Gaussian3D> gaussians;  // statics first, then objects in order
  std::vector<WorldSplatSource> sources;
  std::vector<TrackPose> poses;  // pose used per object at this timestamp
};

// Flattens the scene at timestamp t. Opacity, SH, and logits pass through
// untouched; means and orientations get the object pose applied.
WorldView instantiate_world(const SceneGraph& scene, double t,
                            PoseInterp interp = PoseInterp::kUnicycle,
                            double horizon = kDefaultPoseHorizon);

// Throws std::invalid_argument naming the first malformed field.
void validate_scene(const SceneGraph& scene);
void validate_track(const UnicycleTrack& track);
void validate_camera(const FrameCamera& cam);

}  // namespace kinesplat
