#include "roadgs/camera.hpp"

#include <sstream>
#include <stdexcept>

namespace roadgs {

void validate_camera(const CameraModel& cam) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(cam.fx > 0.0 && cam.fy > 0.0)) fail("camera: fx and fy must be positive");
  if (cam.width <= 0 || cam.height <= 0) fail("camera: image size must be positive");
  if (!(cam.cx >= 0.0 && cam.cx < cam.width)) fail("camera: cx outside [0, width)");
  if (!(cam.cy >= 0.0 && cam.cy < cam.height)) fail("camera: cy outside [0, height)");
  const Eigen::Matrix3d gram = cam.rotation.transpose() * cam.rotation;
  if ((gram - Eigen::Matrix3d::Identity()).norm() > 1e-9)
    fail("camera: pose rotation is not orthonormal (1e-9)");
  if (std::abs(cam.rotation.determinant() - 1.0) > 1e-9)
    fail("camera: pose rotation determinant is not +1 (1e-9)");
}

bool project_point(const CameraModel& cam, const Eigen::Vector3d& world, double& u,
                   double& v, double& depth) {
  const Eigen::Vector3d pc = cam.to_camera(world);
  depth = pc.z();
  if (!(depth > 0.0)) {
    u = v = 0.0;
    return false;
  }
  u = cam.fx * pc.x() / depth + cam.cx;
  v = cam.fy * pc.y() / depth + cam.cy;
  return true;
}

ProjectedPoints project_points(const Eigen::Matrix<double, Eigen::Dynamic, 3>& world,
                               const CameraModel& cam) {
  const Eigen::Index n = world.rows();
  ProjectedPoints out;
  out.u.resize(n);
  out.v.resize(n);
  out.depth.resize(n);
  out.valid.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = 0.0, v = 0.0, depth = 0.0;
    const bool front = project_point(cam, world.row(i).transpose(), u, v, depth);
    out.u[i] = u;
    out.v[i] = v;
    out.depth[i] = depth;
    out.valid[i] = front && u >= 0.0 && u <= cam.width - 1.0 && v >= 0.0 &&
                   v <= cam.height - 1.0;
  }
  return out;
}

Eigen::Vector3d backproject(const CameraModel& cam, double u, double v, double depth) {
  const Eigen::Vector3d pc((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth,
                           depth);
  return cam.rotation.transpose() * (pc - cam.translation);
}

}  // namespace roadgs
