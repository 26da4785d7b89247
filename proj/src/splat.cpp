#include "gsdrive/splat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "gsdrive/error.hpp"
#include "gsdrive/parallel.hpp"

namespace gsdrive {

void Gaussian3D::validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian rotation must be a unit quaternion");
  }
  if (!(opacity >= 0.0 && opacity <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian opacity must lie in [0, 1]");
  }
  if (!(scale.minCoeff() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian scales must be positive");
  }
}

Pose2 AgentScript::pose_at(int tick) const {
  if (poses.empty()) return {};
  const auto i = static_cast<std::size_t>(std::clamp(tick, 0, static_cast<int>(poses.size()) - 1));
  return poses[i];
}

Vec2 AgentScript::velocity_at(int tick, double dt) const {
  return (pose_at(tick + 1).position - pose_at(tick).position) / dt;
}

std::vector<Gaussian3D> Scene::gaussians_at(int tick) const {
  std::vector<Gaussian3D> out = gaussians;
  for (const auto& agent : agents) {
    const Pose2 pose = agent.pose_at(tick);
    const Eigen::Quaterniond yaw(Eigen::AngleAxisd(pose.heading, Vec3::UnitZ()));
    for (const auto& local : agent.body) {
      Gaussian3D g = local;
      g.mean = yaw * local.mean + Vec3(pose.position.x(), pose.position.y(), 0.0);
      g.rotation = (yaw * local.rotation).normalized();
      out.push_back(g);
    }
  }
  return out;
}

void Scene::validate() const {
  if (gaussians.empty()) throw Error(ErrorCode::kInvalidArgument, "scene has no gaussians");
  if (cameras.empty()) throw Error(ErrorCode::kInvalidArgument, "scene has no cameras");
  if (expert_trajectory.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "scene expert trajectory needs >= 2 waypoints");
  }
  if (lane_centerlines.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scene has no lane centerlines");
  }
  if (!(road_half_width > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "road half-width must be positive");
  }
  for (const auto& g : gaussians) g.validate();
  for (const auto& c : cameras) c.validate();
  for (const auto& a : agents) {
    if (a.poses.empty()) throw Error(ErrorCode::kInvalidArgument, "agent has no poses");
    for (const auto& g : a.body) g.validate();
  }
}

Mat3 build_covariance(const Gaussian3D& g) {
  const Mat3 r = g.rotation.normalized().toRotationMatrix();
  const Mat3 s = g.scale.asDiagonal();
  const Mat3 m = r * s;
  Mat3 cov = m * m.transpose();
  // Exact symmetry; the product is symmetric only up to rounding.
  return 0.5 * (cov + cov.transpose());
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& p) {
  const Mat3& k = cam.intrinsics;
  const double z = p.z();
  const double z2 = z * z;
  Eigen::Matrix<double, 2, 3> j;
  j << k(0, 0) / z, k(0, 1) / z, -(k(0, 0) * p.x() + k(0, 1) * p.y()) / z2,
       0.0, k(1, 1) / z, -k(1, 1) * p.y() / z2;
  return j;
}

Mat2 project_covariance(const Gaussian3D& g, const Camera& cam) {
  const Vec3 p = cam.rotation_w2c * g.mean + cam.translation_w2c;
  if (p.z() <= 1e-9) {
    throw Error(ErrorCode::kBehindCamera, "gaussian is behind the camera");
  }
  const Eigen::Matrix<double, 2, 3> jw = projection_jacobian(cam, p) * cam.rotation_w2c;
  Mat2 cov = jw * build_covariance(g) * jw.transpose();
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += kCovarianceFloor;
  return cov;
}

namespace {

struct Splat {
  std::size_t source = 0;  // index into the caller's span
  double depth = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  // Inverse 2D covariance (conic) entries.
  double ca = 0.0;
  double cb = 0.0;
  double cc = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

// Projects, culls and depth-sorts. Gaussians below the contribution threshold
// everywhere (opacity < 1/255) or behind the near plane are dropped.
std::vector<Splat> prepare_splats(std::span<const Gaussian3D> gaussians, const Camera& cam) {
  const int w = cam.image_size.width;
  const int h = cam.image_size.height;
  std::vector<Splat> splats;
  splats.reserve(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian3D& g = gaussians[i];
    if (!(g.opacity >= kMinContribution)) continue;
    const Vec3 p = cam.rotation_w2c * g.mean + cam.translation_w2c;
    if (p.z() <= kNearPlane) continue;
    const Mat2 cov = project_covariance(g, cam);
    const double det = cov.determinant();
    if (!(det > 0.0)) continue;
    const Vec3 hp = cam.intrinsics * p;

    Splat s;
    s.source = i;
    s.depth = p.z();
    s.cx = hp.x() / p.z();
    s.cy = hp.y() / p.z();
    s.ca = cov(1, 1) / det;
    s.cb = -cov(0, 1) / det;
    s.cc = cov(0, 0) / det;
    s.opacity = g.opacity;
    s.color = g.color;

    // Beyond this radius opacity * G < 1/255, so the pixel skip rule never
    // admits the splat; the 3-sigma ellipse is always covered.
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double cutoff_sigmas =
        std::max(3.0, std::sqrt(std::max(0.0, 2.0 * std::log(255.0 * g.opacity))));
    const double radius = std::sqrt(lambda_max) * cutoff_sigmas + 1.0;
    const double fx0 = std::ceil(s.cx - radius);
    const double fx1 = std::floor(s.cx + radius);
    const double fy0 = std::ceil(s.cy - radius);
    const double fy1 = std::floor(s.cy + radius);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > w - 1 || fy0 > h - 1) continue;
    s.x0 = static_cast<int>(std::max(0.0, fx0));
    s.x1 = static_cast<int>(std::min<double>(w - 1, fx1));
    s.y0 = static_cast<int>(std::max(0.0, fy0));
    s.y1 = static_cast<int>(std::min<double>(h - 1, fy1));
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source < b.source;
  });
  return splats;
}

struct Contribution {
  std::uint32_t splat = 0;
  double falloff = 0.0;        // G without opacity
  double alpha = 0.0;          // opacity * G
  double transmittance = 0.0;  // T before this splat
};

struct PixelResult {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double transmittance = 1.0;
};

// Front-to-back blend of the listed splats at one pixel. Both the tiled and
// the naive renderer go through this function, so they agree bitwise.
PixelResult shade_pixel(const std::vector<Splat>& splats, std::span<const std::uint32_t> order,
                        double px, double py, std::vector<Contribution>* record) {
  PixelResult out;
  double t = 1.0;
  for (const std::uint32_t idx : order) {
    const Splat& s = splats[idx];
    const double dx = px - s.cx;
    const double dy = py - s.cy;
    const double power = -0.5 * (s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy);
    const double falloff = std::exp(power);
    const double alpha = s.opacity * falloff;
    if (alpha < kMinContribution) continue;
    const double weight = t * alpha;
    out.color += weight * s.color;
    out.depth += weight * s.depth;
    if (record) record->push_back({idx, falloff, alpha, t});
    t *= 1.0 - alpha;
    if (t < kTransmittanceCutoff) break;
  }
  out.transmittance = t;
  return out;
}

struct TileBins {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> bins;
};

TileBins bin_splats(const std::vector<Splat>& splats, int width, int height) {
  TileBins tb;
  tb.tiles_x = (width + kTileSize - 1) / kTileSize;
  tb.tiles_y = (height + kTileSize - 1) / kTileSize;
  tb.bins.resize(static_cast<std::size_t>(tb.tiles_x) * tb.tiles_y);
  for (std::uint32_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats[i];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty) {
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx) {
        tb.bins[static_cast<std::size_t>(ty) * tb.tiles_x + tx].push_back(i);
      }
    }
  }
  return tb;
}

void write_pixel(RenderOutput& out, int x, int y, const PixelResult& r) {
  for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = r.color[c];
  out.depth.at(x, y) = r.depth;
  out.transmittance.at(x, y) = r.transmittance;
}

RenderOutput blank_output(const Camera& cam) {
  const int w = cam.image_size.width;
  const int h = cam.image_size.height;
  RenderOutput out;
  out.color = Image(w, h, 3, 0.0);
  out.depth = Image(w, h, 1, 0.0);
  out.transmittance = Image(w, h, 1, 1.0);
  return out;
}

}  // namespace

RenderOutput render_gaussians(std::span<const Gaussian3D> gaussians, const Camera& cam,
                              const RenderOptions& options) {
  cam.validate();
  const int w = cam.image_size.width;
  const int h = cam.image_size.height;
  const std::vector<Splat> splats = prepare_splats(gaussians, cam);
  RenderOutput out = blank_output(cam);

  if (options.naive) {
    std::vector<std::uint32_t> all(splats.size());
    std::iota(all.begin(), all.end(), 0u);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) write_pixel(out, x, y, shade_pixel(splats, all, x, y, nullptr));
    }
    return out;
  }

  const TileBins tb = bin_splats(splats, w, h);
  parallel_for(tb.bins.size(), options.workers, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile) % tb.tiles_x;
    const int ty = static_cast<int>(tile) / tb.tiles_x;
    const auto& order = tb.bins[tile];
    for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
        write_pixel(out, x, y, shade_pixel(splats, order, x, y, nullptr));
      }
    }
  });
  return out;
}

RenderOutput render_view(const Scene& scene, const Camera& cam, int tick,
                         const RenderOptions& options) {
  const std::vector<Gaussian3D> all = scene.gaussians_at(tick);
  return render_gaussians(all, cam, options);
}

void ReconLossWeights::validate() const {
  if (rgb < 0.0 || ssim < 0.0 || depth < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "reconstruction loss weights must be >= 0");
  }
  if (rgb == 0.0 && ssim == 0.0 && depth == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "reconstruction loss weights are all zero");
  }
}

namespace {

void check_recon_shapes(const RenderOutput& r, const Image& gt_image, const Image& gt_depth) {
  if (!r.color.same_shape(gt_image) || gt_image.channels != 3) {
    throw Error(ErrorCode::kShapeMismatch, "rendered color and ground-truth image differ in shape");
  }
  if (!r.depth.same_shape(gt_depth)) {
    throw Error(ErrorCode::kShapeMismatch, "rendered depth and ground-truth depth differ in shape");
  }
}

struct LossImageGrads {
  Image color;  // dL/dC
  Image depth;  // dL/dD
};

ReconLoss evaluate_recon(const RenderOutput& r, const Image& gt_image, const Image& gt_depth,
                         const ReconLossWeights& w, LossImageGrads* grads) {
  check_recon_shapes(r, gt_image, gt_depth);
  ReconLoss loss;
  const std::size_t n = r.color.data.size();
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) l1 += std::abs(r.color.data[i] - gt_image.data[i]);
  loss.l1 = n ? l1 / static_cast<double>(n) : 0.0;

  const Image luma_r = to_luma(r.color);
  const Image luma_gt = to_luma(gt_image);
  loss.ssim_term = 1.0 - ssim(luma_r, luma_gt);

  double sq = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
    if (gt_depth.data[i] > 0.0) {
      const double d = r.depth.data[i] - gt_depth.data[i];
      sq += d * d;
      ++valid;
    }
  }
  loss.depth = valid ? sq / static_cast<double>(valid) : 0.0;
  loss.total = w.rgb * loss.l1 + w.ssim * loss.ssim_term + w.depth * loss.depth;

  if (grads) {
    grads->color = Image(r.color.width, r.color.height, 3, 0.0);
    grads->depth = Image(r.depth.width, r.depth.height, 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = r.color.data[i] - gt_image.data[i];
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      grads->color.data[i] = w.rgb * sign / static_cast<double>(n);
    }
    if (w.ssim != 0.0) {
      const Image gs = ssim_gradient(luma_r, luma_gt);
      static constexpr double kLuma[3] = {0.299, 0.587, 0.114};
      for (int y = 0; y < gs.height; ++y) {
        for (int x = 0; x < gs.width; ++x) {
          for (int c = 0; c < 3; ++c) grads->color.at(x, y, c) -= w.ssim * kLuma[c] * gs.at(x, y);
        }
      }
    }
    if (valid) {
      for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
        if (gt_depth.data[i] > 0.0) {
          grads->depth.data[i] =
              w.depth * 2.0 * (r.depth.data[i] - gt_depth.data[i]) / static_cast<double>(valid);
        }
      }
    }
  }
  return loss;
}

}  // namespace

ReconLoss recon_loss(const RenderOutput& rendered, const Image& gt_image, const Image& gt_depth,
                     const ReconLossWeights& w) {
  return evaluate_recon(rendered, gt_image, gt_depth, w, nullptr);
}

AppearanceGradients recon_gradients(std::span<const Gaussian3D> gaussians, const Camera& cam,
                                    const Image& gt_image, const Image& gt_depth,
                                    const ReconLossWeights& w) {
  cam.validate();
  const int width = cam.image_size.width;
  const int height = cam.image_size.height;
  const std::vector<Splat> splats = prepare_splats(gaussians, cam);
  const TileBins tb = bin_splats(splats, width, height);

  RenderOutput out = blank_output(cam);
  std::vector<std::vector<Contribution>> records(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t tile =
          static_cast<std::size_t>(y / kTileSize) * tb.tiles_x + x / kTileSize;
      auto& rec = records[static_cast<std::size_t>(y) * width + x];
      write_pixel(out, x, y, shade_pixel(splats, tb.bins[tile], x, y, &rec));
    }
  }

  LossImageGrads lg;
  AppearanceGradients result;
  result.loss = evaluate_recon(out, gt_image, gt_depth, w, &lg);
  result.color.assign(gaussians.size(), Vec3::Zero());
  result.opacity.assign(gaussians.size(), 0.0);

  // Back-to-front sweep: behind_* is the normalized color/depth accumulated
  // behind the current splat, so dC/dalpha_q = T_q (c_q - behind).
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto& rec = records[static_cast<std::size_t>(y) * width + x];
      if (rec.empty()) continue;
      const Vec3 g_color(lg.color.at(x, y, 0), lg.color.at(x, y, 1), lg.color.at(x, y, 2));
      const double g_depth = lg.depth.at(x, y);
      Vec3 behind_color = Vec3::Zero();
      double behind_depth = 0.0;
      for (auto it = rec.rbegin(); it != rec.rend(); ++it) {
        const Splat& s = splats[it->splat];
        result.color[s.source] += g_color * (it->transmittance * it->alpha);
        const double d_alpha = it->transmittance * (g_color.dot(s.color - behind_color) +
                                                    g_depth * (s.depth - behind_depth));
        result.opacity[s.source] += d_alpha * it->falloff;
        behind_color = it->alpha * s.color + (1.0 - it->alpha) * behind_color;
        behind_depth = it->alpha * s.depth + (1.0 - it->alpha) * behind_depth;
      }
    }
  }
  return result;
}

RefineResult refine_appearance(const Scene& scene, const Camera& cam, const Image& gt_image,
                               const Image& gt_depth, const ReconLossWeights& w, int steps,
                               double lr) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "refine_appearance needs steps >= 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "refine_appearance needs lr > 0");
  w.validate();

  RefineResult result;
  result.scene = scene;
  auto& gs = result.scene.gaussians;
  double initial = 0.0;
  for (int step = 0; step <= steps; ++step) {
    const AppearanceGradients grads = recon_gradients(gs, cam, gt_image, gt_depth, w);
    const double loss = grads.loss.total;
    if (step == 0) {
      initial = loss;
    } else {
      if (loss > 10.0 * initial && loss > 1e-12) {
        throw Error(ErrorCode::kDivergence, "appearance refinement diverged at step " +
                                                std::to_string(step) +
                                                " (loss " + std::to_string(loss) + ")");
      }
      if (loss > result.loss_history.back() + 1e-12) {
        result.warnings.push_back("loss increased at step " + std::to_string(step) + ": " +
                                  std::to_string(result.loss_history.back()) + " -> " +
                                  std::to_string(loss));
      }
    }
    result.loss_history.push_back(loss);
    if (step == steps) break;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      gs[i].color = (gs[i].color - lr * grads.color[i]).cwiseMax(0.0).cwiseMin(1.0);
      gs[i].opacity = std::clamp(gs[i].opacity - lr * grads.opacity[i], 0.001, 0.999);
    }
  }
  for (const auto& msg : result.warnings) std::fprintf(stderr, "warning: %s\n", msg.c_str());
  return result;
}

}  // namespace gsdrive
