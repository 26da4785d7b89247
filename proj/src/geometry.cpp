#include "gsdrive/geometry.hpp"

#include <cmath>
#include <string>

#include "gsdrive/error.hpp"

namespace gsdrive {

namespace {

constexpr double kOrthonormalTol = 1e-9;
constexpr double kDeterminantTol = 1e-6;
constexpr double kMinDepth = 1e-9;

}  // namespace

void Camera::validate() const {
  if ((rotation_w2c * rotation_w2c.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() >
      kOrthonormalTol) {
    throw Error(ErrorCode::kInvalidCamera, "camera rotation is not orthonormal");
  }
  if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0) {
    throw Error(ErrorCode::kInvalidCamera, "camera intrinsics must be upper-triangular");
  }
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0)) {
    throw Error(ErrorCode::kInvalidCamera, "camera focal lengths must be positive");
  }
  if (image_size.width < 1 || image_size.height < 1) {
    throw Error(ErrorCode::kInvalidCamera, "image size must be at least 1x1");
  }
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Mat3 essential_matrix(const Mat3& rel_rotation, const Vec3& rel_translation) {
  const double det = rel_rotation.determinant();
  const double ortho =
      (rel_rotation * rel_rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (std::abs(det - 1.0) > kDeterminantTol || ortho > kDeterminantTol) {
    throw Error(ErrorCode::kInvalidRotation,
                "relative rotation is not orthonormal (det=" + std::to_string(det) + ")");
  }
  return skew(rel_translation) * rel_rotation;
}

Vec3 epipolar_line(const Mat3& essential, const Vec3& x) { return essential * x; }

Vec3 backproject_pixel(const Camera& cam, const Vec3& x, double depth) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kInvalidDepth, "back-projection depth must be positive");
  }
  const Vec3 cam_point = cam.intrinsics.triangularView<Eigen::Upper>().solve(x) * depth;
  return cam.rotation_w2c.transpose() * (cam_point - cam.translation_w2c);
}

PointProjection project_point(const Camera& cam, const Vec3& world_point) {
  const Vec3 p = cam.rotation_w2c * world_point + cam.translation_w2c;
  if (p.z() <= kMinDepth) {
    throw Error(ErrorCode::kBehindCamera, "point is behind the camera");
  }
  const Vec3 h = cam.intrinsics * p;
  return {{h.x() / p.z(), h.y() / p.z()}, p.z()};
}

void relative_pose(const Camera& from, const Camera& to, Mat3& rotation, Vec3& translation) {
  rotation = to.rotation_w2c * from.rotation_w2c.transpose();
  translation = to.translation_w2c - rotation * from.translation_w2c;
}

Camera vehicle_camera(const Vec2& position, double heading, double height,
                      const Mat3& intrinsics, ImageSize size) {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  Camera cam;
  cam.intrinsics = intrinsics;
  // Rows: camera right, camera down, camera forward, expressed in world axes.
  cam.rotation_w2c << s, -c, 0.0,
                      0.0, 0.0, -1.0,
                      c, s, 0.0;
  const Vec3 center(position.x(), position.y(), height);
  cam.translation_w2c = -cam.rotation_w2c * center;
  cam.image_size = size;
  return cam;
}

Mat3 make_intrinsics(double fx, double fy, double cx, double cy) {
  Mat3 k;
  k << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

}  // namespace gsdrive
