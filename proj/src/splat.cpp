#include "roadgs/splat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "roadgs/parallel.hpp"

namespace roadgs {

Eigen::Matrix3d world_covariance(const Eigen::Vector3d& scale,
                                 const Eigen::Vector4d& quaternion, double tol) {
  if (!(scale.minCoeff() > 0.0))
    throw std::invalid_argument("world_covariance: scales must be positive");
  const double norm = quaternion.norm();
  if (std::abs(norm - 1.0) > tol)
    throw std::invalid_argument("world_covariance: quaternion is not unit norm");
  const Eigen::Vector4d q = quaternion / norm;
  const Eigen::Quaterniond rot(q[0], q[1], q[2], q[3]);
  const Eigen::Matrix3d m = rot.toRotationMatrix() * scale.asDiagonal();
  return m * m.transpose();
}

Eigen::Matrix<double, 2, 3> camera_jacobian(const Eigen::Vector3d& point_cam,
                                            const CameraModel& cam) {
  const double x = point_cam.x();
  const double y = point_cam.y();
  const double z = point_cam.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * x / (z * z),
         0.0, cam.fy / z, -cam.fy * y / (z * z);
  return jac;
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma,
                                   const Eigen::Matrix3d& cam_rotation,
                                   const Eigen::Matrix<double, 2, 3>& jacobian,
                                   double blur_floor_px2) {
  const Eigen::Matrix<double, 2, 3> m = jacobian * cam_rotation;
  Eigen::Matrix2d cov = m * sigma * m.transpose();
  cov(0, 0) += blur_floor_px2;
  cov(1, 1) += blur_floor_px2;
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  return cov;
}

Eigen::Vector3d eval_sh(const Eigen::Matrix<double, kShCoeffs, 1>& coeffs,
                        const Eigen::Vector3d& view_dir) {
  Eigen::Vector3d rgb;
  for (int ch = 0; ch < 3; ++ch) {
    const double raw = 0.5 + kSh0 * coeffs[ch] +
                       kSh1 * (-coeffs[3 + ch] * view_dir.y() +
                               coeffs[6 + ch] * view_dir.z() -
                               coeffs[9 + ch] * view_dir.x());
    rgb[ch] = std::clamp(raw, 0.0, 1.0);
  }
  return rgb;
}

SceneGradients SceneGradients::zeros(std::int64_t count) {
  SceneGradients g;
  g.sh.setZero(count, kShCoeffs);
  g.opacity = Eigen::VectorXd::Zero(count);
  g.rotation.setZero(count, 4);
  g.scale.setZero();
  g.elevation = Eigen::VectorXd::Zero(count);
  return g;
}

namespace {

constexpr double kBoxQMargin = 1e-6;  // rounding slack on the alpha_min boundary

struct PreparedSplat {
  double mean_u = 0.0, mean_v = 0.0;
  double ia = 0.0, ib = 0.0, ic = 0.0;  // conic (inverse 2D covariance)
  double opacity = 0.0;
  double color[3] = {0.0, 0.0, 0.0};
  double depth = 0.0;
  double qcut = 0.0;  // Mahalanobis^2 above which alpha < alpha_min
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // pixel bounds, half-open, image-clipped
  std::int64_t source = -1;
};

struct Prepared {
  std::vector<PreparedSplat> splats;  // depth-sorted, visible only
};

bool prepare_one(const GaussianGrid& grid, const CameraModel& cam,
                 const RenderConfig& config, std::int64_t g, PreparedSplat* out) {
  const Eigen::Vector3d p = grid.center(g);
  const Eigen::Vector3d pc = cam.to_camera(p);
  if (!(pc.z() > config.near_clip_m)) return false;
  const double opacity = grid.opacity[g];
  if (config.alpha_min > 0.0 && opacity < config.alpha_min) return false;

  const Eigen::Matrix3d sigma =
      world_covariance(grid.scale, grid.rotation.row(g).transpose());
  const Eigen::Matrix<double, 2, 3> jac = camera_jacobian(pc, cam);
  const Eigen::Matrix2d cov = project_covariance(sigma, cam.rotation, jac,
                                                 config.blur_floor_px2);
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  if (!(det > 0.0)) return false;  // blur floor keeps this from happening

  out->mean_u = cam.fx * pc.x() / pc.z() + cam.cx;
  out->mean_v = cam.fy * pc.y() / pc.z() + cam.cy;
  out->ia = cov(1, 1) / det;
  out->ib = -cov(0, 1) / det;
  out->ic = cov(0, 0) / det;
  out->opacity = opacity;
  out->depth = pc.z();
  out->source = g;

  const Eigen::Vector3d dir = (p - cam.center()).normalized();
  Eigen::Matrix<double, kShCoeffs, 1> coeffs = grid.sh.row(g).transpose();
  const Eigen::Vector3d rgb = eval_sh(coeffs, dir);
  out->color[0] = rgb[0];
  out->color[1] = rgb[1];
  out->color[2] = rgb[2];

  if (config.alpha_min > 0.0) {
    out->qcut = 2.0 * std::log(opacity / config.alpha_min);
    const double q_box = out->qcut + kBoxQMargin;
    const double ru = std::sqrt(q_box * cov(0, 0));
    const double rv = std::sqrt(q_box * cov(1, 1));
    out->x0 = std::max(0, static_cast<int>(std::ceil(out->mean_u - ru)));
    out->x1 = std::min(cam.width, static_cast<int>(std::floor(out->mean_u + ru)) + 1);
    out->y0 = std::max(0, static_cast<int>(std::ceil(out->mean_v - rv)));
    out->y1 = std::min(cam.height, static_cast<int>(std::floor(out->mean_v + rv)) + 1);
  } else {
    out->qcut = std::numeric_limits<double>::infinity();
    out->x0 = 0;
    out->x1 = cam.width;
    out->y0 = 0;
    out->y1 = cam.height;
  }
  return out->x0 < out->x1 && out->y0 < out->y1;
}

Prepared prepare_scene(const GaussianGrid& grid, const CameraModel& cam,
                       const RenderConfig& config) {
  if (cam.width <= 0 || cam.height <= 0)
    throw std::invalid_argument("render: camera has a zero-size image");
  const std::int64_t n = grid.count();
  std::vector<PreparedSplat> all(static_cast<std::size_t>(n));
  std::vector<char> visible(static_cast<std::size_t>(n), 0);
  parallel_for(
      n,
      [&](std::int64_t g) {
        visible[static_cast<std::size_t>(g)] =
            prepare_one(grid, cam, config, g, &all[static_cast<std::size_t>(g)]) ? 1 : 0;
      },
      config.threads);

  Prepared prep;
  prep.splats.reserve(static_cast<std::size_t>(n));
  for (std::int64_t g = 0; g < n; ++g)
    if (visible[static_cast<std::size_t>(g)]) prep.splats.push_back(all[static_cast<std::size_t>(g)]);
  std::sort(prep.splats.begin(), prep.splats.end(),
            [](const PreparedSplat& a, const PreparedSplat& b) {
              return a.depth != b.depth ? a.depth < b.depth : a.source < b.source;
            });
  return prep;
}

/// Per-pixel state saved by the forward pass for the analytic backward.
struct ForwardState {
  Array2d final_t;
  Eigen::ArrayXXi last_contrib;  // position in the tile list, -1 = none
};

struct TileGrid {
  int tiles_x = 0, tiles_y = 0, tile_px = 32;
  std::vector<std::vector<int>> lists;  // sorted-order splat indices per tile
};

TileGrid build_tiles(const Prepared& prep, const CameraModel& cam,
                     const RenderConfig& config) {
  TileGrid tg;
  tg.tile_px = std::max(1, config.tile_px);
  tg.tiles_x = (cam.width + tg.tile_px - 1) / tg.tile_px;
  tg.tiles_y = (cam.height + tg.tile_px - 1) / tg.tile_px;
  tg.lists.assign(static_cast<std::size_t>(tg.tiles_x) * tg.tiles_y, {});
  for (int s = 0; s < static_cast<int>(prep.splats.size()); ++s) {
    const PreparedSplat& sp = prep.splats[static_cast<std::size_t>(s)];
    const int tx0 = sp.x0 / tg.tile_px;
    const int tx1 = (sp.x1 - 1) / tg.tile_px;
    const int ty0 = sp.y0 / tg.tile_px;
    const int ty1 = (sp.y1 - 1) / tg.tile_px;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        tg.lists[static_cast<std::size_t>(ty) * tg.tiles_x + tx].push_back(s);
  }
  return tg;
}

RenderOutput make_output(const CameraModel& cam) {
  RenderOutput out;
  out.rgb = Image(cam.height, cam.width);
  out.alpha = Array2d::Zero(cam.height, cam.width);
  out.depth = Array2d::Zero(cam.height, cam.width);
  out.coverage = Mask2d::Constant(cam.height, cam.width, false);
  return out;
}

void finalize_output(RenderOutput& out, const Array2d& trans, const Array2d& depth_acc,
                     const RenderConfig& config) {
  out.alpha = 1.0 - trans;
  out.coverage = out.alpha > config.coverage_threshold;
  out.depth = (out.alpha > 0.0).select(depth_acc / out.alpha.max(1e-300), 0.0);
}

RenderOutput rasterize_tiled(const Prepared& prep, const CameraModel& cam,
                             const RenderConfig& config, ForwardState* state) {
  RenderOutput out = make_output(cam);
  Array2d trans = Array2d::Ones(cam.height, cam.width);
  Array2d depth_acc = Array2d::Zero(cam.height, cam.width);
  if (state) {
    state->final_t = Array2d::Ones(cam.height, cam.width);
    state->last_contrib = Eigen::ArrayXXi::Constant(cam.height, cam.width, -1);
  }

  const TileGrid tg = build_tiles(prep, cam, config);
  parallel_for(
      static_cast<std::int64_t>(tg.lists.size()),
      [&](std::int64_t tile) {
        const int tx = static_cast<int>(tile % tg.tiles_x);
        const int ty = static_cast<int>(tile / tg.tiles_x);
        const int px0 = tx * tg.tile_px;
        const int px1 = std::min(cam.width, px0 + tg.tile_px);
        const int py0 = ty * tg.tile_px;
        const int py1 = std::min(cam.height, py0 + tg.tile_px);
        const auto& list = tg.lists[static_cast<std::size_t>(tile)];
        for (int pos = 0; pos < static_cast<int>(list.size()); ++pos) {
          const PreparedSplat& sp = prep.splats[static_cast<std::size_t>(list[pos])];
          const int cx0 = std::max(px0, sp.x0);
          const int cx1 = std::min(px1, sp.x1);
          const int cy0 = std::max(py0, sp.y0);
          const int cy1 = std::min(py1, sp.y1);
          for (int r = cy0; r < cy1; ++r) {
            for (int c = cx0; c < cx1; ++c) {
              const double t = trans(r, c);
              if (t < config.t_min) continue;
              const double du = c - sp.mean_u;
              const double dv = r - sp.mean_v;
              const double q = sp.ia * du * du + 2.0 * sp.ib * du * dv + sp.ic * dv * dv;
              const double alpha =
                  std::min(config.alpha_cap, sp.opacity * std::exp(-0.5 * q));
              if (config.alpha_min > 0.0 && alpha < config.alpha_min) continue;
              const double w = alpha * t;
              out.rgb.ch[0](r, c) += w * sp.color[0];
              out.rgb.ch[1](r, c) += w * sp.color[1];
              out.rgb.ch[2](r, c) += w * sp.color[2];
              depth_acc(r, c) += w * sp.depth;
              trans(r, c) = t * (1.0 - alpha);
              if (state) state->last_contrib(r, c) = pos;
            }
          }
        }
      },
      config.threads);

  if (state) state->final_t = trans;
  finalize_output(out, trans, depth_acc, config);
  return out;
}

}  // namespace

std::vector<ProjectedGaussian> project_gaussians(const GaussianGrid& grid,
                                                 const CameraModel& cam,
                                                 const RenderConfig& config) {
  Prepared prep = prepare_scene(grid, cam, config);
  std::vector<ProjectedGaussian> out;
  out.reserve(prep.splats.size());
  for (const PreparedSplat& sp : prep.splats) {
    ProjectedGaussian pg;
    pg.mean2d = {sp.mean_u, sp.mean_v};
    const double det = sp.ia * sp.ic - sp.ib * sp.ib;
    pg.cov2d << sp.ic / det, -sp.ib / det, -sp.ib / det, sp.ia / det;
    pg.depth = sp.depth;
    pg.color = {sp.color[0], sp.color[1], sp.color[2]};
    pg.opacity = sp.opacity;
    pg.source_index = sp.source;
    out.push_back(pg);
  }
  return out;
}

RenderOutput render(const GaussianGrid& grid, const CameraModel& cam,
                    const RenderConfig& config) {
  const Prepared prep = prepare_scene(grid, cam, config);
  return rasterize_tiled(prep, cam, config, nullptr);
}

RenderOutput render_reference(const GaussianGrid& grid, const CameraModel& cam,
                              const RenderConfig& config) {
  const Prepared prep = prepare_scene(grid, cam, config);
  const int nvis = static_cast<int>(prep.splats.size());

  // Structure-of-arrays copy so the per-pixel scan over every sorted
  // Gaussian vectorizes.
  std::vector<double> mu(nvis), mv(nvis), ia(nvis), ib(nvis), ic(nvis), op(nvis),
      cr(nvis), cg(nvis), cb(nvis), dep(nvis), qc(nvis);
  for (int i = 0; i < nvis; ++i) {
    const PreparedSplat& sp = prep.splats[static_cast<std::size_t>(i)];
    mu[i] = sp.mean_u;
    mv[i] = sp.mean_v;
    ia[i] = sp.ia;
    ib[i] = sp.ib;
    ic[i] = sp.ic;
    op[i] = sp.opacity;
    cr[i] = sp.color[0];
    cg[i] = sp.color[1];
    cb[i] = sp.color[2];
    dep[i] = sp.depth;
    qc[i] = sp.qcut + kBoxQMargin;
  }

  RenderOutput out = make_output(cam);
  Array2d trans = Array2d::Ones(cam.height, cam.width);
  Array2d depth_acc = Array2d::Zero(cam.height, cam.width);

  constexpr int kBlock = 256;
  parallel_for(
      cam.height,
      [&](std::int64_t row) {
        const int r = static_cast<int>(row);
        std::array<double, kBlock> qbuf;
        for (int c = 0; c < cam.width; ++c) {
          double t = 1.0;
          double acc_r = 0.0, acc_g = 0.0, acc_b = 0.0, acc_d = 0.0;
          for (int start = 0; start < nvis && t >= config.t_min; start += kBlock) {
            const int len = std::min(kBlock, nvis - start);
            double best = -1.0;
            for (int k = 0; k < len; ++k) {
              const int i = start + k;
              const double du = c - mu[i];
              const double dv = r - mv[i];
              const double q = ia[i] * du * du + 2.0 * ib[i] * du * dv + ic[i] * dv * dv;
              qbuf[static_cast<std::size_t>(k)] = q;
              best = std::max(best, qc[i] - q);
            }
            if (best < 0.0) continue;  // nothing in this block can contribute
            for (int k = 0; k < len && t >= config.t_min; ++k) {
              const int i = start + k;
              const double q = qbuf[static_cast<std::size_t>(k)];
              if (!(q <= qc[i])) continue;
              const double alpha = std::min(config.alpha_cap, op[i] * std::exp(-0.5 * q));
              if (config.alpha_min > 0.0 && alpha < config.alpha_min) continue;
              const double w = alpha * t;
              acc_r += w * cr[i];
              acc_g += w * cg[i];
              acc_b += w * cb[i];
              acc_d += w * dep[i];
              t *= 1.0 - alpha;
            }
          }
          out.rgb.ch[0](r, c) = acc_r;
          out.rgb.ch[1](r, c) = acc_g;
          out.rgb.ch[2](r, c) = acc_b;
          depth_acc(r, c) = acc_d;
          trans(r, c) = t;
        }
      },
      config.threads);

  finalize_output(out, trans, depth_acc, config);
  return out;
}

namespace {

/// Per-splat compositing adjoints accumulated during the reverse pixel walk.
struct SplatPartial {
  double color[3] = {0.0, 0.0, 0.0};
  double opacity = 0.0;
  double mean[2] = {0.0, 0.0};
  double qaa = 0.0, qab = 0.0, qcc = 0.0;  // dL/d(conic) via q = d^T A d
};

/// dR/dq for the canonical (w,x,y,z) quaternion-to-rotation map.
void rotation_derivatives(const Eigen::Vector4d& q, Eigen::Matrix3d dR[4]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  dR[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  dR[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dR[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dR[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (int k = 0; k < 4; ++k) dR[k] *= 2.0;
}

}  // namespace

SceneGradients render_backward(const GaussianGrid& grid, const CameraModel& cam,
                               const Image& dL_dI, const RenderConfig& config) {
  if (dL_dI.height() != cam.height || dL_dI.width() != cam.width)
    throw std::invalid_argument("render_backward: adjoint shape mismatch");

  const Prepared prep = prepare_scene(grid, cam, config);
  ForwardState state;
  rasterize_tiled(prep, cam, config, &state);

  const TileGrid tg = build_tiles(prep, cam, config);
  const int nvis = static_cast<int>(prep.splats.size());

  // Phase A: per-tile reverse compositing walk, partials per tile entry.
  std::vector<std::vector<SplatPartial>> tile_partials(tg.lists.size());
  parallel_for(
      static_cast<std::int64_t>(tg.lists.size()),
      [&](std::int64_t tile) {
        const auto& list = tg.lists[static_cast<std::size_t>(tile)];
        if (list.empty()) return;
        auto& partials = tile_partials[static_cast<std::size_t>(tile)];
        partials.assign(list.size(), SplatPartial{});

        const int tx = static_cast<int>(tile % tg.tiles_x);
        const int ty = static_cast<int>(tile / tg.tiles_x);
        const int px0 = tx * tg.tile_px;
        const int px1 = std::min(cam.width, px0 + tg.tile_px);
        const int py0 = ty * tg.tile_px;
        const int py1 = std::min(cam.height, py0 + tg.tile_px);
        const int tw = px1 - px0;
        const int th = py1 - py0;

        // Running transmittance (rewound front of the suffix) and the
        // accumulated suffix color sum_{j>i} c_j w_j per pixel.
        Array2d t_run(th, tw);
        Array2d suffix_r = Array2d::Zero(th, tw);
        Array2d suffix_g = Array2d::Zero(th, tw);
        Array2d suffix_b = Array2d::Zero(th, tw);
        for (int r = 0; r < th; ++r)
          for (int c = 0; c < tw; ++c) t_run(r, c) = state.final_t(py0 + r, px0 + c);

        for (int pos = static_cast<int>(list.size()) - 1; pos >= 0; --pos) {
          const PreparedSplat& sp = prep.splats[static_cast<std::size_t>(list[pos])];
          SplatPartial& acc = partials[static_cast<std::size_t>(pos)];
          const int cx0 = std::max(px0, sp.x0);
          const int cx1 = std::min(px1, sp.x1);
          const int cy0 = std::max(py0, sp.y0);
          const int cy1 = std::min(py1, sp.y1);
          for (int r = cy0; r < cy1; ++r) {
            for (int c = cx0; c < cx1; ++c) {
              if (pos > state.last_contrib(r, c)) continue;
              const double du = c - sp.mean_u;
              const double dv = r - sp.mean_v;
              const double q = sp.ia * du * du + 2.0 * sp.ib * du * dv + sp.ic * dv * dv;
              const double expo = std::exp(-0.5 * q);
              const double alpha_raw = sp.opacity * expo;
              const bool capped = alpha_raw > config.alpha_cap;
              const double alpha = capped ? config.alpha_cap : alpha_raw;
              if (config.alpha_min > 0.0 && alpha < config.alpha_min) continue;

              const int lr = r - py0;
              const int lc = c - px0;
              const double t_before = t_run(lr, lc) / (1.0 - alpha);
              const double w = alpha * t_before;

              const double a_r = dL_dI.ch[0](r, c);
              const double a_g = dL_dI.ch[1](r, c);
              const double a_b = dL_dI.ch[2](r, c);

              acc.color[0] += w * a_r;
              acc.color[1] += w * a_g;
              acc.color[2] += w * a_b;

              // dL/dalpha through this pixel: own term minus the suffix it
              // attenuates.
              const double inv_rest = 1.0 / (1.0 - alpha);
              const double g_alpha =
                  a_r * (sp.color[0] * t_before - suffix_r(lr, lc) * inv_rest) +
                  a_g * (sp.color[1] * t_before - suffix_g(lr, lc) * inv_rest) +
                  a_b * (sp.color[2] * t_before - suffix_b(lr, lc) * inv_rest);

              if (!capped) {
                acc.opacity += g_alpha * expo;
                const double g_q = g_alpha * (-0.5 * alpha_raw);
                const double adx = sp.ia * du + sp.ib * dv;
                const double ady = sp.ib * du + sp.ic * dv;
                acc.mean[0] += -2.0 * g_q * adx;
                acc.mean[1] += -2.0 * g_q * ady;
                acc.qaa += g_q * du * du;
                acc.qab += g_q * du * dv;
                acc.qcc += g_q * dv * dv;
              }

              suffix_r(lr, lc) += w * sp.color[0];
              suffix_g(lr, lc) += w * sp.color[1];
              suffix_b(lr, lc) += w * sp.color[2];
              t_run(lr, lc) = t_before;
            }
          }
        }
      },
      config.threads);

  // Phase B: deterministic reduction, fixed tile order.
  std::vector<SplatPartial> accum(static_cast<std::size_t>(nvis));
  for (std::size_t tile = 0; tile < tg.lists.size(); ++tile) {
    const auto& list = tg.lists[tile];
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      const SplatPartial& p = tile_partials[tile][pos];
      SplatPartial& a = accum[static_cast<std::size_t>(list[pos])];
      for (int k = 0; k < 3; ++k) a.color[k] += p.color[k];
      a.opacity += p.opacity;
      a.mean[0] += p.mean[0];
      a.mean[1] += p.mean[1];
      a.qaa += p.qaa;
      a.qab += p.qab;
      a.qcc += p.qcc;
    }
  }

  // Phase C: geometric chain per visible Gaussian.
  SceneGradients grads = SceneGradients::zeros(grid.count());
  Eigen::Matrix<double, Eigen::Dynamic, 3> scale_partials =
      Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(nvis, 3);
  const Eigen::Matrix3d w_rot = cam.rotation;
  const Eigen::Vector3d cam_center = cam.center();

  parallel_for(
      nvis,
      [&](std::int64_t s) {
        const PreparedSplat& sp = prep.splats[static_cast<std::size_t>(s)];
        const SplatPartial& a = accum[static_cast<std::size_t>(s)];
        const std::int64_t g = sp.source;

        const Eigen::Vector3d p = grid.center(g);
        const Eigen::Vector3d pc = cam.to_camera(p);
        const double z = pc.z();

        const Eigen::Vector4d q_raw = grid.rotation.row(g).transpose();
        const double qnorm = q_raw.norm();
        const Eigen::Vector4d q = q_raw / qnorm;
        const Eigen::Quaterniond rot_q(q[0], q[1], q[2], q[3]);
        const Eigen::Matrix3d rot = rot_q.toRotationMatrix();
        const Eigen::Matrix3d m3 = rot * grid.scale.asDiagonal();
        const Eigen::Matrix3d sigma = m3 * m3.transpose();
        const Eigen::Matrix<double, 2, 3> jac = camera_jacobian(pc, cam);
        const Eigen::Matrix<double, 2, 3> m = jac * w_rot;
        Eigen::Matrix2d cov = m * sigma * m.transpose();
        cov(0, 0) += config.blur_floor_px2;
        cov(1, 1) += config.blur_floor_px2;
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        const Eigen::Matrix2d conic =
            (Eigen::Matrix2d() << cov(1, 1) / det, -cov(0, 1) / det, -cov(0, 1) / det,
             cov(0, 0) / det)
                .finished();

        Eigen::Vector3d d_pc = Eigen::Vector3d::Zero();
        Eigen::Vector3d d_pw = Eigen::Vector3d::Zero();

        // Color chain: SH coefficients and view direction.
        {
          const Eigen::Vector3d to_p = p - cam_center;
          const double dist = to_p.norm();
          const Eigen::Vector3d dir = to_p / dist;
          Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
          for (int ch = 0; ch < 3; ++ch) {
            const double raw = 0.5 + kSh0 * grid.sh(g, ch) +
                               kSh1 * (-grid.sh(g, 3 + ch) * dir.y() +
                                       grid.sh(g, 6 + ch) * dir.z() -
                                       grid.sh(g, 9 + ch) * dir.x());
            if (raw <= 0.0 || raw >= 1.0) continue;  // clamp active
            const double gc = a.color[ch];
            grads.sh(g, ch) += kSh0 * gc;
            grads.sh(g, 3 + ch) += -kSh1 * dir.y() * gc;
            grads.sh(g, 6 + ch) += kSh1 * dir.z() * gc;
            grads.sh(g, 9 + ch) += -kSh1 * dir.x() * gc;
            g_dir.x() += -kSh1 * grid.sh(g, 9 + ch) * gc;
            g_dir.y() += -kSh1 * grid.sh(g, 3 + ch) * gc;
            g_dir.z() += kSh1 * grid.sh(g, 6 + ch) * gc;
          }
          d_pw += (Eigen::Matrix3d::Identity() - dir * dir.transpose()) / dist * g_dir;
        }

        grads.opacity[g] = a.opacity;

        // Mean: the projection Jacobian is exactly d(mean2d)/d(point_cam).
        const Eigen::Vector2d g_mean(a.mean[0], a.mean[1]);
        d_pc += jac.transpose() * g_mean;

        // Conic -> 2D covariance -> (J, Sigma).
        Eigen::Matrix2d g_conic;
        g_conic << a.qaa, a.qab, a.qab, a.qcc;
        const Eigen::Matrix2d g_cov = -conic * g_conic * conic;
        const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov * m * sigma;
        const Eigen::Matrix3d g_sigma = m.transpose() * g_cov * m;
        const Eigen::Matrix<double, 2, 3> g_jac = g_m * w_rot.transpose();

        const double z2 = z * z;
        const double z3 = z2 * z;
        d_pc.x() += g_jac(0, 2) * (-cam.fx / z2);
        d_pc.y() += g_jac(1, 2) * (-cam.fy / z2);
        d_pc.z() += g_jac(0, 0) * (-cam.fx / z2) + g_jac(1, 1) * (-cam.fy / z2) +
                    g_jac(0, 2) * (2.0 * cam.fx * pc.x() / z3) +
                    g_jac(1, 2) * (2.0 * cam.fy * pc.y() / z3);

        d_pw += w_rot.transpose() * d_pc;
        grads.elevation[g] = d_pw.z();

        // Sigma = M3 M3^T with M3 = R diag(s).
        const Eigen::Matrix3d g_m3 = 2.0 * g_sigma * m3;
        Eigen::Matrix3d g_rot = Eigen::Matrix3d::Zero();
        for (int k = 0; k < 3; ++k) {
          scale_partials(s, k) = g_m3.col(k).dot(rot.col(k));
          g_rot.col(k) = g_m3.col(k) * grid.scale[k];
        }

        Eigen::Matrix3d d_rot_dq[4];
        rotation_derivatives(q, d_rot_dq);
        Eigen::Vector4d g_q_unit;
        for (int k = 0; k < 4; ++k)
          g_q_unit[k] = (g_rot.array() * d_rot_dq[k].array()).sum();
        const Eigen::Vector4d g_q_raw =
            (Eigen::Matrix4d::Identity() - q * q.transpose()) / qnorm * g_q_unit;
        grads.rotation.row(g) = g_q_raw.transpose();
      },
      config.threads);

  for (int s = 0; s < nvis; ++s) grads.scale += scale_partials.row(s).transpose();
  return grads;
}

}  // namespace roadgs
