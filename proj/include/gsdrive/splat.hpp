#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsdrive/geometry.hpp"

namespace gsdrive {

/// One splat primitive. Color is the degree-0 spherical-harmonic term read
/// directly as RGB.
struct Gaussian3D {
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();

  void validate() const;
};

struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

/// A scripted moving cluster. Body Gaussians are expressed in the agent frame
/// (x forward, y left, z up) and follow poses[tick].
struct AgentScript {
  double radius = 1.0;
  std::vector<Pose2> poses;
  std::vector<Gaussian3D> body;

  /// Pose at tick, holding the last pose past the end of the schedule.
  Pose2 pose_at(int tick) const;
  /// Forward-difference velocity at tick.
  Vec2 velocity_at(int tick, double dt) const;
};

using Polyline = std::vector<Vec2>;

struct Scene {
  std::string name;
  std::vector<Gaussian3D> gaussians;
  std::vector<Camera> cameras;
  Polyline expert_trajectory;  // one waypoint per simulation tick
  std::vector<AgentScript> agents;
  std::vector<Polyline> lane_centerlines;
  double road_half_width = 2.5;

  /// Static Gaussians followed by every agent body placed at its pose for tick.
  std::vector<Gaussian3D> gaussians_at(int tick) const;

  /// Throws kInvalidArgument when a drivable-scene list is empty or a
  /// Gaussian violates its invariants.
  void validate() const;
};

/// Row-major H x W x C image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

struct RenderOutput {
  Image color;          // H x W x 3 in [0, 1]
  Image depth;          // H x W, meters, 0 where nothing was blended
  Image transmittance;  // H x W, remaining transmittance after blending
};

struct RenderOptions {
  int workers = 0;     // 0 = default_worker_count()
  bool naive = false;  // evaluate every Gaussian at every pixel (reference path)
};

inline constexpr int kTileSize = 16;
inline constexpr double kMinContribution = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kCovarianceFloor = 0.3;
inline constexpr double kNearPlane = 0.05;

/// R S S^T R^T.
Mat3 build_covariance(const Gaussian3D& g);

/// J W Sigma W^T J^T plus the 0.3 px^2 floor on both eigenvalues.
Mat2 project_covariance(const Gaussian3D& g, const Camera& cam);

/// Jacobian of the pixel map at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& cam_point);

RenderOutput render_gaussians(std::span<const Gaussian3D> gaussians, const Camera& cam,
                              const RenderOptions& options = {});

/// Renders the scene at `tick` (agents placed at their scripted poses).
RenderOutput render_view(const Scene& scene, const Camera& cam, int tick = 0,
                         const RenderOptions& options = {});

struct ReconLossWeights {
  double rgb = 0.8;
  double ssim = 0.2;
  double depth = 0.05;

  void validate() const;
};

struct ReconLoss {
  double total = 0.0;
  double l1 = 0.0;
  double ssim_term = 0.0;  // 1 - SSIM
  double depth = 0.0;      // mean squared error over valid gt_depth pixels
};

/// gt_depth pixels <= 0 are treated as missing.
ReconLoss recon_loss(const RenderOutput& rendered, const Image& gt_image, const Image& gt_depth,
                     const ReconLossWeights& w);

/// Analytic gradients of the reconstruction loss w.r.t. per-Gaussian color and
/// opacity, indexed like the input span.
struct AppearanceGradients {
  ReconLoss loss;
  std::vector<Vec3> color;
  std::vector<double> opacity;
};

AppearanceGradients recon_gradients(std::span<const Gaussian3D> gaussians, const Camera& cam,
                                    const Image& gt_image, const Image& gt_depth,
                                    const ReconLossWeights& w);

struct RefineResult {
  Scene scene;
  std::vector<double> loss_history;  // steps + 1 entries, before and after each step
  std::vector<std::string> warnings;
};

/// Gradient descent on static Gaussian color and opacity against one view.
RefineResult refine_appearance(const Scene& scene, const Camera& cam, const Image& gt_image,
                               const Image& gt_depth, const ReconLossWeights& w, int steps,
                               double lr);

// SSIM on luma with an 11x11 Gaussian window (sigma 1.5), zero padded.
Image to_luma(const Image& rgb);
double ssim(const Image& a, const Image& b);
/// d mean-SSIM(a, b) / d a.
Image ssim_gradient(const Image& a, const Image& b);

}  // namespace gsdrive
