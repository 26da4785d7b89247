#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsdrive {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

struct ImageSize {
  int width = 1;
  int height = 1;
};

/// Pinhole camera. World points map to camera space as
/// x_cam = rotation_w2c * x_world + translation_w2c; the camera looks down +z
/// and pixel coordinates are K * x_cam / z.
struct Camera {
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation_w2c = Mat3::Identity();
  Vec3 translation_w2c = Vec3::Zero();
  ImageSize image_size;

  /// Throws kInvalidCamera when an invariant is broken.
  void validate() const;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }

  /// Camera center in world coordinates.
  Vec3 center() const { return -rotation_w2c.transpose() * translation_w2c; }
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  Vec3 homogeneous() const { return {u, v, 1.0}; }
};

struct PointProjection {
  Pixel pixel;
  double depth = 0.0;  // view-space z
};

Mat3 skew(const Vec3& v);

/// E = [t]x R. Throws kInvalidRotation if rel_rotation is not a proper rotation.
Mat3 essential_matrix(const Mat3& rel_rotation, const Vec3& rel_translation);

/// l = E x.
Vec3 epipolar_line(const Mat3& essential, const Vec3& x);

/// World point at `depth` along the ray of homogeneous pixel x.
Vec3 backproject_pixel(const Camera& cam, const Vec3& x, double depth);

PointProjection project_point(const Camera& cam, const Vec3& world_point);

/// Relative pose (R, t) mapping camera-`from` coordinates into camera-`to`.
void relative_pose(const Camera& from, const Camera& to, Mat3& rotation, Vec3& translation);

/// Forward-facing vehicle camera at ground pose (position, heading) mounted
/// `height` meters above the ground plane (world z up).
Camera vehicle_camera(const Vec2& position, double heading, double height,
                      const Mat3& intrinsics, ImageSize size);

Mat3 make_intrinsics(double fx, double fy, double cx, double cy);

}  // namespace gsdrive
