#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace roadgs {

/// Pinhole camera with a world-to-camera rigid pose. Camera frame is the
/// usual computer-vision one: x right, y down, z forward. Pixel centers sit
/// on integer coordinates; u runs along columns, v along rows.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world-to-camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  /// Camera center expressed in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// Throws std::invalid_argument on bad intrinsics or a pose rotation that is
/// not orthonormal with determinant +1 (checked to 1e-9).
void validate_camera(const CameraModel& cam);

struct ProjectedPoints {
  Eigen::ArrayXd u;
  Eigen::ArrayXd v;
  Eigen::ArrayXd depth;
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;
};

/// Pinhole projection of pose-transformed world points. A point is valid
/// when its depth is positive and (u, v) lands inside the image
/// (0 <= u <= width-1, 0 <= v <= height-1). Invalid points are masked,
/// never an error.
ProjectedPoints project_points(const Eigen::Matrix<double, Eigen::Dynamic, 3>& world,
                               const CameraModel& cam);

/// Single-point projection; returns false when depth <= 0.
bool project_point(const CameraModel& cam, const Eigen::Vector3d& world,
                   double& u, double& v, double& depth);

/// Inverse of project_point for a known depth: pixel + depth -> world point.
Eigen::Vector3d backproject(const CameraModel& cam, double u, double v, double depth);

}  // namespace roadgs
