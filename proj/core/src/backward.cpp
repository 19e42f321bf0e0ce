// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/backward.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "kinesplat/parallel.hpp"
#include "kinesplat/sh.hpp"
#include "pixel_walk.hpp"

namespace kinesplat {
namespace {

constexpr double kFdFloor = 1e-8;

// Flat accumulator layout per (tile, splat) row and per merged splat. The
// semantic blocks are appended only when those paths are active.
struct AccLayout {
  int color = 0;   // 3
  int depth = 3;   // 1
  int flow = 4;    // 2
  int alpha = 6;   // 1, d/d post-sigmoid opacity
  int mean = 7;    // 2
  int cov = 9;     // 3: full-matrix d/d inv_cov entries (00, 01=10, 11)
  int probs = 12;  // S
  int raw = 12;    // S, offset by probs when both active
  int stride = 12;

  AccLayout(bool use_probs, bool use_raw, int s) {
    if (use_probs) {
      stride += s;
      raw += s;
    }
    if (use_raw) stride += s;
  }
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

void check_raster(const RasterD& r, int h, int w, int c, const char* name) {
  if (r.h != h || r.w != w || r.c != c) {
    throw std::invalid_argument(std::string("backward: ") + name + " raster shape mismatch");
  }
}

}  // namespace

GaussianGrads GaussianGrads::zeros_like(const Gaussian3D& g) {
  GaussianGrads out;
  out.sh.assign(g.sh.size(), Eigen::Vector3d::Zero());
  out.logits = Eigen::VectorXd::Zero(g.logits.size());
  return out;
}

void GaussianGrads::add_scaled(const GaussianGrads& other, double s) {
  mu += s * other.mu;
  rot += s * other.rot;
  log_scale += s * other.log_scale;
  opacity_logit += s * other.opacity_logit;
  for (std::size_t k = 0; k < sh.size(); ++k) sh[k] += s * other.sh[k];
  if (logits.size() > 0) logits += s * other.logits;
}

ParamGrads ParamGrads::zeros_like(const SceneGraph& scene) {
  ParamGrads out;
  out.statics.reserve(scene.static_gaussians.size());
  for (const auto& g : scene.static_gaussians) out.statics.push_back(GaussianGrads::zeros_like(g));
  out.objects.resize(scene.objects.size());
  out.tracks.reserve(scene.objects.size());
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    out.objects[o].reserve(scene.objects[o].canonical.size());
    for (const auto& g : scene.objects[o].canonical) {
      out.objects[o].push_back(GaussianGrads::zeros_like(g));
    }
    out.tracks.push_back(TrackGrads::zeros_like(scene.objects[o].track));
  }
  return out;
}

void ParamGrads::add_scaled(const ParamGrads& other, double s) {
  for (std::size_t i = 0; i < statics.size(); ++i) statics[i].add_scaled(other.statics[i], s);
  for (std::size_t o = 0; o < objects.size(); ++o) {
    for (std::size_t i = 0; i < objects[o].size(); ++i) {
      objects[o][i].add_scaled(other.objects[o][i], s);
    }
    tracks[o].add_scaled(other.tracks[o], s);
  }
  camera.exposure_A += s * other.camera.exposure_A;
  camera.exposure_b += s * other.camera.exposure_b;
}

bool ParamGrads::all_finite(std::string* where) const {
  const auto bad = [&](const std::string& name) {
    if (where) *where = name;
    return false;
  };
  const auto check_g = [&](const GaussianGrads& g, const std::string& name) {
    if (!g.mu.allFinite()) return bad(name + ".mu");
    if (!g.rot.allFinite()) return bad(name + ".rot");
    if (!g.log_scale.allFinite()) return bad(name + ".log_scale");
    if (!std::isfinite(g.opacity_logit)) return bad(name + ".opacity_logit");
    for (const auto& v : g.sh) {
      if (!v.allFinite()) return bad(name + ".sh");
    }
    if (g.logits.size() > 0 && !g.logits.allFinite()) return bad(name + ".logits");
    return true;
  };
  for (std::size_t i = 0; i < statics.size(); ++i) {
    if (!check_g(statics[i], "statics[" + std::to_string(i) + "]")) return false;
  }
  for (std::size_t o = 0; o < objects.size(); ++o) {
    for (std::size_t i = 0; i < objects[o].size(); ++i) {
      if (!check_g(objects[o][i],
                   "objects[" + std::to_string(o) + "][" + std::to_string(i) + "]")) {
        return false;
      }
    }
    const TrackGrads& t = tracks[o];
    const std::string tn = "tracks[" + std::to_string(o) + "]";
    for (const auto& sv : t.states) {
      if (!sv.allFinite()) return bad(tn + ".states");
    }
    for (double hv : t.heights) {
      if (!std::isfinite(hv)) return bad(tn + ".heights");
    }
    for (const auto& vv : t.velocities) {
      if (!vv.allFinite()) return bad(tn + ".velocities");
    }
  }
  if (!camera.exposure_A.allFinite()) return bad("camera.exposure_A");
  if (!camera.exposure_b.allFinite()) return bad("camera.exposure_b");
  return true;
}

ParamGrads backward(const SceneGraph& scene, const FrameCamera& cam, const FrameCamera* cam2,
                    const RenderResult& result, const BufferGrads& upstream,
                    const RenderOptions& opt) {
  const int h = cam.height, w = cam.width;
  const int cls = scene.class_count;
  const auto& splats = result.splats;
  const auto& geoms = result.geoms;
  const auto& grid = result.grid;

  if (!splats.empty() && geoms.size() != splats.size()) {
    throw std::invalid_argument("backward: render result lacks the training tape");
  }
  const bool use_color = !upstream.color.empty();
  const bool use_sem = !upstream.semantic.empty();
  const bool use_raw = !upstream.semantic_2dnorm.empty();
  const bool use_depth = !upstream.depth.empty();
  const bool use_flow = !upstream.flow.empty();
  const bool use_accum = !upstream.accum_alpha.empty();
  const bool use_expo = use_color && upstream.color_is_exposed;

  if (use_color) {
    check_raster(upstream.color, h, w, 3, "color");
    if (result.buffers.color.empty()) {
      throw std::invalid_argument("backward: color gradient without a color render");
    }
  }
  if (use_sem) {
    check_raster(upstream.semantic, h, w, cls, "semantic");
    if (result.buffers.semantic.empty()) {
      throw std::invalid_argument("backward: semantic gradient without a semantic render");
    }
  }
  if (use_raw) {
    check_raster(upstream.semantic_2dnorm, h, w, cls, "semantic_2dnorm");
    if (result.buffers.semantic_2dnorm.empty()) {
      throw std::invalid_argument("backward: semantic_2dnorm gradient without a semantic render");
    }
  }
  if (use_depth) {
    check_raster(upstream.depth, h, w, 1, "depth");
    if (result.buffers.depth.empty()) {
      throw std::invalid_argument("backward: depth gradient without a depth render");
    }
  }
  if (use_flow) {
    check_raster(upstream.flow, h, w, 2, "flow");
    if (!result.has_flow || cam2 == nullptr) {
      throw std::invalid_argument("backward: flow gradient without a flow render");
    }
  }
  if (use_accum) check_raster(upstream.accum_alpha, h, w, 1, "accum_alpha");
  if (!scene.objects.empty() && opt.interp != PoseInterp::kUnicycle) {
    throw std::invalid_argument("backward: dynamic objects require the unicycle pose policy");
  }

  ParamGrads grads = ParamGrads::zeros_like(scene);
  const std::size_t n = splats.size();

  // Track poses and their parameter dependencies at both timestamps.
  std::vector<TrackPose> poses1(scene.objects.size()), poses2(scene.objects.size());
  std::vector<PoseAtJac> jacs1(scene.objects.size()), jacs2(scene.objects.size());
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    poses1[o] = pose_at_jac(scene.objects[o].track, cam.timestamp, &jacs1[o], opt.horizon);
    if (use_flow) {
      poses2[o] = pose_at_jac(scene.objects[o].track, cam2->timestamp, &jacs2[o], opt.horizon);
    }
  }

  const AccLayout ly(use_sem, use_raw, cls);
  const detail::WalkRules rules{opt.alpha_clamp, opt.alpha_cut, opt.q_cut(), opt.t_stop};
  const int tile_count = grid.tile_count();
  std::vector<std::vector<double>> tile_acc(static_cast<std::size_t>(tile_count));
  std::vector<Eigen::Matrix3d> tile_ea;
  std::vector<Eigen::Vector3d> tile_eb;
  if (use_expo) {
    tile_ea.assign(static_cast<std::size_t>(tile_count), Eigen::Matrix3d::Zero());
    tile_eb.assign(static_cast<std::size_t>(tile_count), Eigen::Vector3d::Zero());
  }

  // Phase 1: per-pixel alpha-blending backward, accumulated per (tile, splat).
  parallel_for(tile_count, opt.threads, [&](std::int64_t tb, std::int64_t te) {
    std::vector<detail::Contribution> contribs;
    std::unordered_map<int, int> row_of;
    Eigen::VectorXd g_sem(cls), g_raw(cls), s_probs(cls), s_raw(cls), p2d(cls);
    for (std::int64_t tile = tb; tile < te; ++tile) {
      const auto& bin = grid.bins[static_cast<std::size_t>(tile)];
      const int tx = static_cast<int>(tile) % grid.tiles_x;
      const int ty = static_cast<int>(tile) / grid.tiles_x;
      const int x0 = tx * grid.tile_size, x1 = std::min(w, x0 + grid.tile_size);
      const int y0 = ty * grid.tile_size, y1 = std::min(h, y0 + grid.tile_size);

      auto& acc = tile_acc[static_cast<std::size_t>(tile)];
      if (!bin.empty()) {
        acc.assign(bin.size() * static_cast<std::size_t>(ly.stride), 0.0);
        row_of.clear();
        for (std::size_t i = 0; i < bin.size(); ++i) row_of[bin[i]] = static_cast<int>(i);
      }

      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          Eigen::Vector3d g_col = Eigen::Vector3d::Zero();
          if (use_color) {
            Eigen::Vector3d up(upstream.color.at(y, x, 0), upstream.color.at(y, x, 1),
                               upstream.color.at(y, x, 2));
            if (use_expo) {
              const Eigen::Vector3d pre(result.buffers.color.at(y, x, 0),
                                        result.buffers.color.at(y, x, 1),
                                        result.buffers.color.at(y, x, 2));
              tile_ea[static_cast<std::size_t>(tile)] += up * pre.transpose();
              tile_eb[static_cast<std::size_t>(tile)] += up;
              up = cam.exposure_A.transpose() * up;
            }
            g_col = up;
          }
          if (bin.empty()) continue;

          if (use_sem) {
            for (int k = 0; k < cls; ++k) g_sem[k] = upstream.semantic.at(y, x, k);
          }
          if (use_raw) {
            // Chain through the per-pixel softmax of the accumulated logits.
            double dot = 0.0;
            for (int k = 0; k < cls; ++k) {
              p2d[k] = result.buffers.semantic_2dnorm.at(y, x, k);
              g_raw[k] = upstream.semantic_2dnorm.at(y, x, k);
              dot += p2d[k] * g_raw[k];
            }
            for (int k = 0; k < cls; ++k) g_raw[k] = p2d[k] * (g_raw[k] - dot);
          }
          const double g_depth = use_depth ? upstream.depth.at(y, x, 0) : 0.0;
          Eigen::Vector2d g_flow = Eigen::Vector2d::Zero();
          if (use_flow) g_flow << upstream.flow.at(y, x, 0), upstream.flow.at(y, x, 1);
          const double g_accum = use_accum ? upstream.accum_alpha.at(y, x, 0) : 0.0;

          contribs.clear();
          const Eigen::Vector2d px = detail::pixel_center(x, y);
          const double t_end = detail::walk_pixel(
              splats, bin, px, rules,
              [&](const detail::Contribution& c) { contribs.push_back(c); });
          if (contribs.empty()) continue;

          // Suffix-sum walk, back to front: each contribution's alpha scales
          // everything behind it by (1 - alpha).
          Eigen::Vector3d s_col = use_color ? (t_end * scene.background_color).eval()
                                            : Eigen::Vector3d::Zero();
          double s_depth = 0.0;
          Eigen::Vector2d s_flow = Eigen::Vector2d::Zero();
          if (use_sem) s_probs.setZero();
          if (use_raw) s_raw.setZero();

          for (std::size_t ci = contribs.size(); ci-- > 0;) {
            const auto& c = contribs[ci];
            const Splat2D& s = splats[static_cast<std::size_t>(c.idx)];
            const double one_minus = 1.0 - c.alpha;
            const double wgt = c.alpha * c.trans;
            double* a = acc.data() + static_cast<std::size_t>(row_of[c.idx]) * ly.stride;

            double da = 0.0;
            if (use_color) {
              da += g_col.dot(s.color * c.trans - s_col / one_minus);
              for (int k = 0; k < 3; ++k) a[ly.color + k] += g_col[k] * wgt;
            }
            if (use_sem) {
              const Eigen::VectorXd& pj = geoms[static_cast<std::size_t>(c.idx)].probs;
              da += g_sem.dot(pj * c.trans - s_probs / one_minus);
              for (int k = 0; k < cls; ++k) a[ly.probs + k] += g_sem[k] * wgt;
            }
            if (use_raw) {
              da += g_raw.dot(s.logits * c.trans - s_raw / one_minus);
              for (int k = 0; k < cls; ++k) a[ly.raw + k] += g_raw[k] * wgt;
            }
            if (use_depth) {
              da += g_depth * (s.depth * c.trans - s_depth / one_minus);
              a[ly.depth] += g_depth * wgt;
            }
            if (use_flow) {
              const Eigen::Vector2d own =
                  s.flow_valid ? s.flow : Eigen::Vector2d::Zero().eval();
              da += g_flow.dot(own * c.trans - s_flow / one_minus);
              if (s.flow_valid) {
                a[ly.flow + 0] += g_flow.x() * wgt;
                a[ly.flow + 1] += g_flow.y() * wgt;
              }
            }
            if (use_accum) da += g_accum * t_end / one_minus;

            if (!c.clamped) {
              // a_px = opacity * exp(-q/2); the clamp zeroes this chain.
              a[ly.alpha] += da * (c.alpha / s.opacity);
              const double gq = da * c.alpha * -0.5;
              const Eigen::Vector2d d = px - s.mean2d;
              const Eigen::Vector2d md = s.inv_cov * d;
              a[ly.mean + 0] += gq * -2.0 * md.x();
              a[ly.mean + 1] += gq * -2.0 * md.y();
              a[ly.cov + 0] += gq * d.x() * d.x();
              a[ly.cov + 1] += gq * d.x() * d.y();
              a[ly.cov + 2] += gq * d.y() * d.y();
            }

            if (use_color) s_col += wgt * s.color;
            if (use_sem) s_probs += wgt * geoms[static_cast<std::size_t>(c.idx)].probs;
            if (use_raw) s_raw += wgt * s.logits;
            if (use_depth) s_depth += wgt * s.depth;
            if (use_flow && s.flow_valid) s_flow += wgt * s.flow;
          }
        }
      }
    }
  });

  // Merge per-splat rows in tile order; the reduction order is fixed, so the
  // result does not depend on how phase 1 was scheduled.
  std::vector<double> merged(n * static_cast<std::size_t>(ly.stride), 0.0);
  for (int tile = 0; tile < tile_count; ++tile) {
    const auto& bin = grid.bins[static_cast<std::size_t>(tile)];
    const auto& acc = tile_acc[static_cast<std::size_t>(tile)];
    if (acc.empty()) continue;
    for (std::size_t i = 0; i < bin.size(); ++i) {
      double* dst = merged.data() + static_cast<std::size_t>(bin[i]) * ly.stride;
      const double* src = acc.data() + i * static_cast<std::size_t>(ly.stride);
      for (int k = 0; k < ly.stride; ++k) dst[k] += src[k];
    }
    tile_acc[static_cast<std::size_t>(tile)].clear();
  }
  if (use_expo) {
    for (int tile = 0; tile < tile_count; ++tile) {
      grads.camera.exposure_A += tile_ea[static_cast<std::size_t>(tile)];
      grads.camera.exposure_b += tile_eb[static_cast<std::size_t>(tile)];
    }
  }

  // Phase 2: chain each splat's merged buffer gradients through projection,
  // shading, and instantiation. Splats map to disjoint parameter slots, so
  // this is safely parallel; pose pulls are staged per splat for phase 3.
  std::vector<double> pose_pull(use_flow ? n * 8 : n * 4, 0.0);
  const int pose_stride = use_flow ? 8 : 4;

  parallel_for(static_cast<std::int64_t>(n), opt.threads, [&](std::int64_t b, std::int64_t e) {
    double basis[16];
    Eigen::Vector3d dbasis[16];
    for (std::int64_t ji = b; ji < e; ++ji) {
      const auto j = static_cast<std::size_t>(ji);
      const Splat2D& sp = splats[j];
      const SplatGeom& ge = geoms[j];
      const double* m = merged.data() + j * static_cast<std::size_t>(ly.stride);
      const bool dynamic = sp.source.object >= 0;
      const Gaussian3D& gsn =
          dynamic ? scene.objects[static_cast<std::size_t>(sp.source.object)]
                        .canonical[static_cast<std::size_t>(sp.source.index)]
                  : scene.static_gaussians[static_cast<std::size_t>(sp.source.index)];
      GaussianGrads& out =
          dynamic ? grads.objects[static_cast<std::size_t>(sp.source.object)]
                               [static_cast<std::size_t>(sp.source.index)]
                  : grads.statics[static_cast<std::size_t>(sp.source.index)];
      const TrackPose* pose1 =
          dynamic ? &poses1[static_cast<std::size_t>(sp.source.object)] : nullptr;

      // Blending-value chains.
      const Eigen::Vector3d g_col(m[ly.color], m[ly.color + 1], m[ly.color + 2]);
      if (use_sem && cls > 0) {
        Eigen::Map<const Eigen::VectorXd> gp(m + ly.probs, cls);
        const double dot = ge.probs.dot(gp);
        out.logits.array() += ge.probs.array() * (gp.array() - dot);
      }
      if (use_raw && cls > 0) out.logits += Eigen::Map<const Eigen::VectorXd>(m + ly.raw, cls);
      out.opacity_logit += m[ly.alpha] * sp.opacity * (1.0 - sp.opacity);

      // Color -> SH coefficients and view direction.
      Eigen::Vector3d g_mu_w = Eigen::Vector3d::Zero();
      if (!gsn.sh.empty()) {
        const int deg = gsn.sh_degree();
        sh_basis_grad(deg, ge.view_dir, basis, dbasis);
        Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
        for (std::size_t k = 0; k < gsn.sh.size(); ++k) {
          out.sh[k] += basis[k] * g_col;
          g_dir += gsn.sh[k].dot(g_col) * dbasis[k];
        }
        // dir = v/|v|: project out the radial component.
        g_mu_w += (g_dir - ge.view_dir * ge.view_dir.dot(g_dir)) / ge.view_len;
      }

      // Screen-space mean; the flow buffer subtracts it.
      Eigen::Vector2d g_mean(m[ly.mean], m[ly.mean + 1]);
      const Eigen::Vector2d g_fl(m[ly.flow], m[ly.flow + 1]);
      const bool flow_chain = use_flow && sp.flow_valid;
      if (flow_chain) g_mean -= g_fl;
      Eigen::Vector3d g_p = ge.J.transpose() * g_mean;
      g_p.z() += m[ly.depth];

      // Footprint shape: inv_cov -> floored cov -> EWA cov -> (J, sigma_w).
      Eigen::Matrix2d gm;
      gm << m[ly.cov], m[ly.cov + 1], m[ly.cov + 1], m[ly.cov + 2];
      const Eigen::Matrix2d gc = -(sp.inv_cov * gm * sp.inv_cov);
      const Eigen::Matrix<double, 2, 3> a2 = ge.J * cam.R;
      const Eigen::Matrix3d g_sigma = a2.transpose() * gc * a2;
      const Eigen::Matrix<double, 2, 3> g_a = 2.0 * gc * a2 * ge.sigma_world;
      const Eigen::Matrix<double, 2, 3> g_j = g_a * cam.R.transpose();
      {
        const double fx = cam.K(0, 0), sk = cam.K(0, 1), fy = cam.K(1, 1);
        const double px = ge.p_cam.x(), py = ge.p_cam.y(), pz = ge.p_cam.z();
        const double iz2 = 1.0 / (pz * pz), iz3 = iz2 / pz;
        g_p.x() += g_j(0, 2) * (-fx * iz2);
        g_p.y() += g_j(0, 2) * (-sk * iz2) + g_j(1, 2) * (-fy * iz2);
        g_p.z() += g_j(0, 0) * (-fx * iz2) + g_j(0, 1) * (-sk * iz2) +
                   g_j(0, 2) * (2.0 * (fx * px + sk * py) * iz3) + g_j(1, 1) * (-fy * iz2) +
                   g_j(1, 2) * (2.0 * fy * py * iz3);
      }
      g_mu_w += cam.R.transpose() * g_p;

      // sigma_w = R diag(exp(2 ls)) R^T in the world frame.
      const Eigen::Matrix3d r_w =
          dynamic ? (yaw_quaternion(pose1->theta) * gsn.rotation).toRotationMatrix()
                  : gsn.rotation.toRotationMatrix();
      const Eigen::Matrix3d rgr = r_w.transpose() * g_sigma * r_w;
      for (int k = 0; k < 3; ++k) {
        out.log_scale[k] += rgr(k, k) * 2.0 * std::exp(2.0 * gsn.log_scale[k]);
      }
      Eigen::Vector3d g_eps;
      for (int k = 0; k < 3; ++k) {
        const Eigen::Matrix3d ek = skew(Eigen::Vector3d::Unit(k));
        g_eps[k] =
            g_sigma.cwiseProduct(ek * ge.sigma_world - ge.sigma_world * ek).sum();
      }

      // Flow's second endpoint: position at the paired timestamp.
      Eigen::Vector3d g_mu_w2 = Eigen::Vector3d::Zero();
      if (flow_chain) g_mu_w2 = cam2->R.transpose() * (ge.J2.transpose() * g_fl);

      if (!dynamic) {
        out.mu += g_mu_w + g_mu_w2;  // the point does not move between frames
        out.rot += g_eps;
        continue;
      }

      const Eigen::Matrix3d r1 = pose1->rotation();
      out.mu += r1.transpose() * g_mu_w;
      out.rot += r1.transpose() * g_eps;
      const Eigen::Vector3d mu_w = pose1->apply(gsn.mu);
      double* pull = pose_pull.data() + j * static_cast<std::size_t>(pose_stride);
      pull[0] = g_mu_w.x();
      pull[1] = g_mu_w.y();
      pull[2] = g_mu_w.z();
      // Yaw moves the point tangentially and spins the covariance.
      pull[3] = g_eps.z() - (mu_w.y() - pose1->y) * g_mu_w.x() +
                (mu_w.x() - pose1->x) * g_mu_w.y();
      if (flow_chain) {
        const TrackPose& pose2 = poses2[static_cast<std::size_t>(sp.source.object)];
        out.mu += pose2.rotation().transpose() * g_mu_w2;
        const Eigen::Vector3d mu_w2 = pose2.apply(gsn.mu);
        pull[4] = g_mu_w2.x();
        pull[5] = g_mu_w2.y();
        pull[6] = g_mu_w2.z();
        pull[7] = -(mu_w2.y() - pose2.y) * g_mu_w2.x() + (mu_w2.x() - pose2.x) * g_mu_w2.y();
      }
    }
  });

  // Phase 3: fold pose pulls into track parameters, serially in splat order.
  const auto apply_pull = [](TrackGrads& tg, const PoseAtJac& jac, double gx, double gy,
                             double gz, double gth) {
    const Eigen::Vector3d g(gx, gy, gth);
    const Eigen::Matrix<double, 5, 1> row = jac.dpose.transpose() * g;
    tg.states[static_cast<std::size_t>(jac.seg)] += row.head<3>();
    tg.velocities[static_cast<std::size_t>(jac.vseg)] += row.tail<2>();
    tg.heights[static_cast<std::size_t>(jac.zi0)] += jac.dz0 * gz;
    tg.heights[static_cast<std::size_t>(jac.zi1)] += jac.dz1 * gz;
  };
  for (std::size_t j = 0; j < n; ++j) {
    const auto& src = splats[j].source;
    if (src.object < 0) continue;
    const auto o = static_cast<std::size_t>(src.object);
    const double* pull = pose_pull.data() + j * static_cast<std::size_t>(pose_stride);
    apply_pull(grads.tracks[o], jacs1[o], pull[0], pull[1], pull[2], pull[3]);
    if (use_flow && splats[j].flow_valid) {
      apply_pull(grads.tracks[o], jacs2[o], pull[4], pull[5], pull[6], pull[7]);
    }
  }
  return grads;
}

// ---- finite-difference verification ----

namespace {

struct Probe {
  std::string cls;
  std::string label;
  double analytic = 0.0;
  std::function<void(double)> apply;  // sets parameter = original + delta
};

void collect_gaussian_probes(Gaussian3D* g, const GaussianGrads& a, const std::string& name,
                             const FdSelector& sel, std::vector<Probe>* probes) {
  static const char* axes = "xyz";
  if (sel.mu) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d base = g->mu;
      probes->push_back({"mu", name + ".mu." + axes[k], a.mu[k],
                         [g, base, k](double d) { g->mu = base + d * Eigen::Vector3d::Unit(k); }});
    }
  }
  if (sel.rot) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Quaterniond base = g->rotation;
      probes->push_back({"rot", name + ".rot." + axes[k], a.rot[k], [g, base, k](double d) {
                           const Eigen::Vector3d v = d * Eigen::Vector3d::Unit(k);
                           const double ang = v.norm();
                           Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
                           if (ang > 0.0) {
                             dq = Eigen::Quaterniond(Eigen::AngleAxisd(ang, v / ang));
                           }
                           g->rotation = dq * base;
                         }});
    }
  }
  if (sel.log_scale) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d base = g->log_scale;
      probes->push_back({"log_scale", name + ".ls." + axes[k], a.log_scale[k],
                         [g, base, k](double d) {
                           g->log_scale = base + d * Eigen::Vector3d::Unit(k);
                         }});
    }
  }
  if (sel.opacity) {
    const double base = g->opacity_logit;
    probes->push_back({"opacity", name + ".op", a.opacity_logit,
                       [g, base](double d) { g->opacity_logit = base + d; }});
  }
  if (sel.sh) {
    for (std::size_t k = 0; k < g->sh.size(); ++k) {
      for (int c = 0; c < 3; ++c) {
        const double base = g->sh[k][c];
        probes->push_back({"sh", name + ".sh" + std::to_string(k) + "." + axes[c], a.sh[k][c],
                           [g, k, c, base](double d) { g->sh[k][c] = base + d; }});
      }
    }
  }
  if (sel.logits) {
    for (int k = 0; k < g->logits.size(); ++k) {
      const double base = g->logits[k];
      probes->push_back({"logits", name + ".lg" + std::to_string(k), a.logits[k],
                         [g, k, base](double d) { g->logits[k] = base + d; }});
    }
  }
}

}  // namespace

FdReport fd_check(SceneGraph scene, std::vector<FrameCamera> cams, const FdObjective& objective,
                  const FdSelector& sel, double h, std::uint64_t seed) {
  double base_loss = 0.0;
  ParamGrads analytic = ParamGrads::zeros_like(scene);
  objective(scene, cams, &base_loss, &analytic);

  std::vector<Probe> probes;
  for (std::size_t i = 0; i < scene.static_gaussians.size(); ++i) {
    collect_gaussian_probes(&scene.static_gaussians[i], analytic.statics[i],
                            "s" + std::to_string(i), sel, &probes);
  }
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    for (std::size_t i = 0; i < scene.objects[o].canonical.size(); ++i) {
      collect_gaussian_probes(&scene.objects[o].canonical[i], analytic.objects[o][i],
                              "o" + std::to_string(o) + "g" + std::to_string(i), sel, &probes);
    }
    UnicycleTrack* tr = &scene.objects[o].track;
    const TrackGrads& tg = analytic.tracks[o];
    const std::string tn = "o" + std::to_string(o) + ".t";
    if (sel.track_state) {
      for (std::size_t i = 0; i < tr->states.size(); ++i) {
        const UnicycleState base = tr->states[i];
        probes.push_back({"track_state", tn + std::to_string(i) + ".x", tg.states[i][0],
                          [tr, i, base](double d) { tr->states[i].x = base.x + d; }});
        probes.push_back({"track_state", tn + std::to_string(i) + ".y", tg.states[i][1],
                          [tr, i, base](double d) { tr->states[i].y = base.y + d; }});
        probes.push_back({"track_state", tn + std::to_string(i) + ".th", tg.states[i][2],
                          [tr, i, base](double d) { tr->states[i].theta = base.theta + d; }});
      }
    }
    if (sel.track_height) {
      for (std::size_t i = 0; i < tr->heights.size(); ++i) {
        const double base = tr->heights[i];
        probes.push_back({"track_height", tn + std::to_string(i) + ".z", tg.heights[i],
                          [tr, i, base](double d) { tr->heights[i] = base + d; }});
      }
    }
    if (sel.track_velocity) {
      for (std::size_t i = 0; i < tr->velocities.size(); ++i) {
        const Eigen::Vector2d base = tr->velocities[i];
        probes.push_back({"track_velocity", tn + std::to_string(i) + ".v", tg.velocities[i][0],
                          [tr, i, base](double d) { tr->velocities[i][0] = base[0] + d; }});
        probes.push_back({"track_velocity", tn + std::to_string(i) + ".w", tg.velocities[i][1],
                          [tr, i, base](double d) { tr->velocities[i][1] = base[1] + d; }});
      }
    }
  }
  if (sel.exposure && !cams.empty()) {
    FrameCamera* c0 = &cams.front();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double base = c0->exposure_A(r, c);
        probes.push_back({"exposure",
                          "cam.A" + std::to_string(r) + std::to_string(c),
                          analytic.camera.exposure_A(r, c),
                          [c0, r, c, base](double d) { c0->exposure_A(r, c) = base + d; }});
      }
      const double base = c0->exposure_b[r];
      probes.push_back({"exposure", "cam.b" + std::to_string(r), analytic.camera.exposure_b[r],
                        [c0, r, base](double d) { c0->exposure_b[r] = base + d; }});
    }
  }

  // Optional per-class subsampling, deterministic in the seed.
  std::vector<std::size_t> selected;
  if (sel.max_per_class > 0) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < probes.size(); ++i) by_class[probes[i].cls].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto& [cls, idxs] : by_class) {
      std::shuffle(idxs.begin(), idxs.end(), rng);
      const std::size_t take = std::min<std::size_t>(idxs.size(), sel.max_per_class);
      idxs.resize(take);
      selected.insert(selected.end(), idxs.begin(), idxs.end());
    }
    std::sort(selected.begin(), selected.end());
  } else {
    selected.resize(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) selected[i] = i;
  }

  FdReport report;
  for (const std::size_t pi : selected) {
    Probe& p = probes[pi];
    double lp = 0.0, lm = 0.0;
    p.apply(h);
    objective(scene, cams, &lp, nullptr);
    p.apply(-h);
    objective(scene, cams, &lm, nullptr);
    p.apply(0.0);

    FdEntry e;
    e.param_class = p.cls;
    e.label = p.label;
    e.analytic = p.analytic;
    e.numeric = (lp - lm) / (2.0 * h);
    e.rel_err = std::abs(e.numeric - e.analytic) / std::max(std::abs(e.analytic), kFdFloor);
    report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
    auto [it, inserted] = report.max_by_class.try_emplace(p.cls, e.rel_err);
    if (!inserted) it->second = std::max(it->second, e.rel_err);
    ++report.count_by_class[p.cls];
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace kinesplat
