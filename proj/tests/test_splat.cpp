#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "gsdrive/error.hpp"
#include "gsdrive/splat.hpp"
#include "test_util.hpp"

namespace gsdrive {
namespace {

Camera small_camera(int w = 48, int h = 40, double f = 40.0) {
  Camera c;
  c.intrinsics = make_intrinsics(f, f, w / 2.0, h / 2.0);
  c.image_size = {w, h};
  return c;
}

Gaussian3D splat_at(const Vec3& mean, double scale, double opacity, const Vec3& color) {
  Gaussian3D g;
  g.mean = mean;
  g.scale = Vec3::Constant(scale);
  g.opacity = opacity;
  g.color = color;
  return g;
}

std::vector<Gaussian3D> random_cloud(Rng& rng, int n) {
  std::vector<Gaussian3D> out;
  for (int i = 0; i < n; ++i) {
    Gaussian3D g;
    g.mean = Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.2, 1.2), rng.uniform(2.0, 6.0));
    g.scale = Vec3(rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4));
    g.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    g.opacity = rng.uniform(0.2, 0.9);
    g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    out.push_back(g);
  }
  return out;
}

bool bitwise_equal(const Image& a, const Image& b) {
  return a.same_shape(b) && std::equal(a.data.begin(), a.data.end(), b.data.begin(),
                                       [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

bool bitwise_equal(const RenderOutput& a, const RenderOutput& b) {
  return bitwise_equal(a.color, b.color) && bitwise_equal(a.depth, b.depth) &&
         bitwise_equal(a.transmittance, b.transmittance);
}

// ---- covariance ----

TEST(Covariance, Examples) {
  Gaussian3D g;
  EXPECT_TRUE(build_covariance(g).isApprox(Mat3::Identity(), 1e-15));
  g.scale = Vec3(2, 1, 1);
  EXPECT_LT((build_covariance(g) - Vec3(4, 1, 1).asDiagonal().toDenseMatrix()).norm(), 1e-15);
  g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  EXPECT_LT((build_covariance(g) - Vec3(1, 4, 1).asDiagonal().toDenseMatrix()).norm(), 1e-12);
}

TEST(Covariance, SymmetricWithSquaredScaleSpectrum) {
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    Gaussian3D g;
    g.scale = Vec3(rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3));
    g.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    const Mat3 cov = build_covariance(g);
    EXPECT_LE((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    std::vector<double> want{g.scale[0] * g.scale[0], g.scale[1] * g.scale[1], g.scale[2] * g.scale[2]};
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(es.eigenvalues()[k], want[k], 1e-9);
  }
}

TEST(ProjectedCovariance, OnAxisIdentity) {
  const double f = 50.0, z0 = 4.0;
  Camera cam = small_camera(64, 64, f);
  const Gaussian3D g = splat_at(Vec3(0, 0, z0), 1.0, 1.0, Vec3::Zero());
  const Mat2 cov = project_covariance(g, cam);
  const double s = (f / z0) * (f / z0);
  EXPECT_NEAR(cov(0, 0), s + kCovarianceFloor, 1e-9);
  EXPECT_NEAR(cov(1, 1), s + kCovarianceFloor, 1e-9);
  EXPECT_NEAR(cov(0, 1), 0.0, 1e-12);
  const Gaussian3D far = splat_at(Vec3(0, 0, 2 * z0), 1.0, 1.0, Vec3::Zero());
  const Mat2 cov_far = project_covariance(far, cam);
  EXPECT_NEAR(cov_far(0, 0) - kCovarianceFloor, 0.25 * (cov(0, 0) - kCovarianceFloor), 1e-9);
}

TEST(ProjectedCovariance, MatchesFiniteDifferenceJacobian) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Camera cam = test::random_camera(rng);
    Gaussian3D g;
    g.scale = Vec3(rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1));
    g.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    g.mean = cam.rotation_w2c.transpose() * (Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 8)) -
                                             cam.translation_w2c);
    // d pixel / d world by central differences.
    Eigen::Matrix<double, 2, 3> jw;
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 up = g.mean, down = g.mean;
      up[k] += h;
      down[k] -= h;
      const Pixel pu = project_point(cam, up).pixel, pd = project_point(cam, down).pixel;
      jw(0, k) = (pu.u - pd.u) / (2 * h);
      jw(1, k) = (pu.v - pd.v) / (2 * h);
    }
    Mat2 want = jw * build_covariance(g) * jw.transpose();
    want.diagonal().array() += kCovarianceFloor;
    const Mat2 got = project_covariance(g, cam);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    EXPECT_LE(std::abs(got(0, 1) - got(1, 0)), 1e-12);
  }
}

TEST(ProjectedCovariance, BehindCameraThrows) {
  const Gaussian3D g = splat_at(Vec3(0, 0, -1), 1.0, 1.0, Vec3::Zero());
  EXPECT_THROW(project_covariance(g, small_camera()), Error);
}

// ---- rendering ----

TEST(Render, SingleOpaqueGaussianAtCenter) {
  Camera cam = small_camera(33, 33, 40.0);
  cam.intrinsics = make_intrinsics(40, 40, 16, 16);
  const Vec3 c(0.2, 0.5, 0.9);
  const std::vector<Gaussian3D> gs{splat_at(Vec3(0, 0, 3), 0.3, 1.0, c)};
  const RenderOutput r = render_gaussians(gs, cam);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(r.color.at(16, 16, k), c[k]);
  EXPECT_EQ(r.transmittance.at(16, 16), 0.0);
  EXPECT_DOUBLE_EQ(r.depth.at(16, 16), 3.0);
}

TEST(Render, TwoGaussianAnalyticBlend) {
  Camera cam = small_camera(33, 33, 40.0);
  cam.intrinsics = make_intrinsics(40, 40, 16, 16);
  const Vec3 c1(1, 0, 0), c2(0, 0.5, 1);
  const double z1 = 2.0, z2 = 5.0;
  // Listed back first so the blend order has to come from the depth sort.
  const std::vector<Gaussian3D> gs{splat_at(Vec3(0, 0, z2), 0.4, 0.8, c2), splat_at(Vec3(0, 0, z1), 0.2, 0.6, c1)};
  const RenderOutput r = render_gaussians(gs, cam);
  const Vec3 want = 0.6 * c1 + 0.4 * 0.8 * c2;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.color.at(16, 16, k), want[k], 1e-6);
  EXPECT_NEAR(r.depth.at(16, 16), 0.6 * z1 + 0.32 * z2, 1e-6);
  EXPECT_NEAR(r.transmittance.at(16, 16), 0.4 * 0.2, 1e-6);
}

TEST(Render, EmptySceneIsBackground) {
  const RenderOutput r = render_gaussians({}, small_camera());
  for (double v : r.color.data) EXPECT_EQ(v, 0.0);
  for (double v : r.depth.data) EXPECT_EQ(v, 0.0);
  for (double v : r.transmittance.data) EXPECT_EQ(v, 1.0);
}

TEST(Render, ZeroOpacityInsertionIsBitInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Gaussian3D> gs = random_cloud(rng, 30);
    const RenderOutput base = render_gaussians(gs, small_camera());
    for (int k = 0; k < 5; ++k) {
      Gaussian3D ghost = random_cloud(rng, 1)[0];
      ghost.opacity = 0.0;
      gs.insert(gs.begin() + static_cast<long>(rng.index(gs.size() + 1)), ghost);
    }
    EXPECT_TRUE(bitwise_equal(base, render_gaussians(gs, small_camera())));
  }
}

TEST(Render, TiledEqualsNaiveBitwise) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<Gaussian3D> gs = random_cloud(rng, 64);
    const Camera cam = small_camera(70, 50);
    RenderOptions naive;
    naive.naive = true;
    EXPECT_TRUE(bitwise_equal(render_gaussians(gs, cam), render_gaussians(gs, cam, naive)));
  }
}

TEST(Render, DeterministicAcrossWorkerCounts) {
  Rng rng(13);
  const std::vector<Gaussian3D> gs = random_cloud(rng, 64);
  const Camera cam = small_camera(80, 64);
  RenderOptions one, many;
  one.workers = 1;
  many.workers = 4;
  EXPECT_TRUE(bitwise_equal(render_gaussians(gs, cam, one), render_gaussians(gs, cam, many)));
}

TEST(Render, PermutationInvariant) {
  Rng rng(14);
  std::vector<Gaussian3D> gs = random_cloud(rng, 40);
  const RenderOutput base = render_gaussians(gs, small_camera());
  std::reverse(gs.begin(), gs.end());
  std::swap(gs[3], gs[17]);
  EXPECT_TRUE(bitwise_equal(base, render_gaussians(gs, small_camera())));
}

TEST(Render, BlendWeightsBounded) {
  Rng rng(15);
  const RenderOutput r = render_gaussians(random_cloud(rng, 64), small_camera());
  for (int y = 0; y < r.color.height; ++y) {
    for (int x = 0; x < r.color.width; ++x) {
      const double t = r.transmittance.at(x, y);
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
      for (int c = 0; c < 3; ++c) {
        EXPECT_GE(r.color.at(x, y, c), 0.0);
        EXPECT_LE(r.color.at(x, y, c), 1.0 - t + 1e-12);
      }
    }
  }
}

TEST(Render, SingleGaussianColorLinearInOpacity) {
  Camera cam = small_camera(33, 33, 40.0);
  cam.intrinsics = make_intrinsics(40, 40, 16, 16);
  const Vec3 c(0.3, 0.6, 0.9);
  double prev = -1.0;
  std::vector<double> values;
  for (double a : {0.2, 0.4, 0.6, 0.8}) {
    const RenderOutput r = render_gaussians(std::vector<Gaussian3D>{splat_at(Vec3(0, 0, 3), 0.3, a, c)}, cam);
    const double v = r.color.at(18, 16, 1);
    EXPECT_GT(v, prev);
    prev = v;
    values.push_back(v);
  }
  // Equal opacity increments give equal color increments.
  EXPECT_NEAR(values[1] - values[0], values[3] - values[2], 1e-12);
}

TEST(Render, SceneAgentsFollowTheirPoses) {
  Scene s;
  AgentScript a;
  a.poses = {{Vec2(0, 0), 0.0}, {Vec2(5, 0), M_PI / 2}};
  a.body.push_back(splat_at(Vec3(1, 0, 0.5), 0.3, 1.0, Vec3::Ones()));
  s.agents.push_back(a);
  const auto g1 = s.gaussians_at(1);
  ASSERT_EQ(g1.size(), 1u);
  EXPECT_LT((g1[0].mean - Vec3(5, 1, 0.5)).norm(), 1e-12);
  EXPECT_LT((s.gaussians_at(7)[0].mean - g1[0].mean).norm(), 1e-15);
}

// ---- reconstruction loss ----

Image random_image(Rng& rng, int w, int h, int c) {
  Image img(w, h, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Direct 11x11 window sums, zero padded, no separability.
double reference_ssim(const Image& a, const Image& b) {
  double wk[11], sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    wk[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
    sum += wk[i];
  }
  for (double& v : wk) v /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = 0; j < 11; ++j) {
        for (int i = 0; i < 11; ++i) {
          const int xx = x + i - 5, yy = y + j - 5;
          if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height) continue;
          const double w = wk[i] * wk[j], va = a.at(xx, yy), vb = b.at(xx, yy);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (a.width * a.height);
}

RenderOutput as_render(const Image& color, const Image& depth) {
  RenderOutput r;
  r.color = color;
  r.depth = depth;
  r.transmittance = Image(color.width, color.height, 1, 1.0);
  return r;
}

TEST(ReconLoss, ExactMatchIsZero) {
  Rng rng(30);
  const Image img = random_image(rng, 20, 16, 3);
  const Image depth = random_image(rng, 20, 16, 1);
  const ReconLoss l = recon_loss(as_render(img, depth), img, depth, {});
  EXPECT_NEAR(l.total, 0.0, 1e-15);
  EXPECT_EQ(l.l1, 0.0);
  EXPECT_NEAR(l.ssim_term, 0.0, 1e-15);
  EXPECT_EQ(l.depth, 0.0);
}

TEST(ReconLoss, ConstantOffsetL1) {
  const Image a(10, 8, 3, 0.5), b(10, 8, 3, 0.4), d(10, 8, 1, 1.0);
  ReconLossWeights w;
  w.rgb = 1.0;
  w.ssim = 0.0;
  w.depth = 0.0;
  EXPECT_NEAR(recon_loss(as_render(a, d), b, d, w).total, 0.1, 1e-12);
}

TEST(ReconLoss, MatchesStraightforwardReimplementation) {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const Image img = random_image(rng, 23, 17, 3), gt = random_image(rng, 23, 17, 3);
    const Image depth = random_image(rng, 23, 17, 1);
    Image gt_depth = random_image(rng, 23, 17, 1);
    for (std::size_t i = 0; i < gt_depth.data.size(); i += 3) gt_depth.data[i] = 0.0;  // missing
    const ReconLossWeights w;
    const ReconLoss l = recon_loss(as_render(img, depth), gt, gt_depth, w);

    double l1 = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) l1 += std::abs(img.data[i] - gt.data[i]);
    l1 /= static_cast<double>(img.data.size());
    Image la(23, 17, 1), lb(23, 17, 1);
    for (int y = 0; y < 17; ++y) {
      for (int x = 0; x < 23; ++x) {
        la.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
        lb.at(x, y) = 0.299 * gt.at(x, y, 0) + 0.587 * gt.at(x, y, 1) + 0.114 * gt.at(x, y, 2);
      }
    }
    double sq = 0.0;
    int valid = 0;
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
      if (gt_depth.data[i] > 0) {
        sq += (depth.data[i] - gt_depth.data[i]) * (depth.data[i] - gt_depth.data[i]);
        ++valid;
      }
    }
    const double ssim_term = 1.0 - reference_ssim(la, lb);
    EXPECT_NEAR(l.l1, l1, 1e-12);
    EXPECT_NEAR(l.ssim_term, ssim_term, 1e-9);
    EXPECT_NEAR(l.depth, sq / valid, 1e-12);
    EXPECT_NEAR(l.total, w.rgb * l1 + w.ssim * ssim_term + w.depth * sq / valid, 1e-9);
  }
}

TEST(ReconLoss, ShapeMismatchThrows) {
  const Image a(10, 8, 3), b(9, 8, 3), d(10, 8, 1);
  try {
    recon_loss(as_render(a, d), b, d, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(ReconLoss, WeightsValidate) {
  ReconLossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.rgb = -1;
  EXPECT_THROW(w.validate(), Error);
  ReconLossWeights zero{0, 0, 0};
  EXPECT_THROW(zero.validate(), Error);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
  Rng rng(32);
  const Image a = random_image(rng, 14, 12, 1), b = random_image(rng, 14, 12, 1);
  const Image g = ssim_gradient(a, b);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
  const auto f = [&](const Eigen::VectorXd& v) {
    Image p = a;
    for (Eigen::Index i = 0; i < v.size(); ++i) p.data[static_cast<std::size_t>(i)] = v[i];
    return ssim(p, b);
  };
  const Eigen::VectorXd analytic =
      Eigen::Map<const Eigen::VectorXd>(g.data.data(), static_cast<Eigen::Index>(g.data.size()));
  EXPECT_TRUE(test::gradients_match(analytic, test::numeric_gradient(f, x)));
}

// The scene fixtures keep every pixel away from the 1/255 skip threshold and
// the early-termination cutoff so the loss is smooth in the perturbed
// parameters.
struct AppearanceFixture {
  std::vector<Gaussian3D> gs;
  Camera cam;
  Image gt, gt_depth;
};

AppearanceFixture appearance_fixture(std::uint64_t seed) {
  Rng rng(seed);
  AppearanceFixture f;
  f.cam = small_camera(24, 20, 30.0);
  for (int i = 0; i < 6; ++i) {
    Gaussian3D g;
    g.mean = Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.6, 0.6), rng.uniform(2.0, 5.0));
    g.scale = Vec3::Constant(rng.uniform(0.4, 0.8));
    g.opacity = rng.uniform(0.3, 0.7);
    g.color = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
    f.gs.push_back(g);
  }
  f.gt = random_image(rng, 24, 20, 3);
  f.gt_depth = random_image(rng, 24, 20, 1);
  for (double& d : f.gt_depth.data) d *= 5.0;
  return f;
}

TEST(ReconGradients, ColorAndOpacityMatchFiniteDifferences) {
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    const AppearanceFixture f = appearance_fixture(seed);
    const ReconLossWeights w;
    const AppearanceGradients g = recon_gradients(f.gs, f.cam, f.gt, f.gt_depth, w);
    const std::size_t n = f.gs.size();
    Eigen::VectorXd x(4 * n), analytic(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
      x.segment<3>(4 * i) = f.gs[i].color;
      x[4 * i + 3] = f.gs[i].opacity;
      analytic.segment<3>(4 * i) = g.color[i];
      analytic[4 * i + 3] = g.opacity[i];
    }
    const auto loss = [&](const Eigen::VectorXd& v) {
      std::vector<Gaussian3D> gs = f.gs;
      for (std::size_t i = 0; i < n; ++i) {
        gs[i].color = v.segment<3>(4 * i);
        gs[i].opacity = v[4 * i + 3];
      }
      return recon_loss(render_gaussians(gs, f.cam), f.gt, f.gt_depth, w).total;
    };
    EXPECT_NEAR(g.loss.total, loss(x), 1e-12);
    EXPECT_TRUE(test::gradients_match(analytic, test::numeric_gradient(loss, x))) << "seed " << seed;
  }
}

Scene one_gaussian_scene(const Vec3& color) {
  Scene s;
  s.gaussians.push_back(splat_at(Vec3(0, 0, 3), 0.5, 0.9, color));
  return s;
}

TEST(Refine, ConvergedSceneBarelyMoves) {
  const Camera cam = small_camera(24, 20, 30.0);
  const Scene s = one_gaussian_scene(Vec3(0.3, 0.5, 0.7));
  const RenderOutput target = render_view(s, cam);
  const RefineResult r = refine_appearance(s, cam, target.color, target.depth, {}, 1, 1e-12);
  ASSERT_EQ(r.loss_history.size(), 2u);
  EXPECT_LE(std::abs(r.loss_history[1] - r.loss_history[0]), 1e-12);
}

TEST(Refine, WrongColorIsCorrected) {
  const Camera cam = small_camera(24, 20, 30.0);
  const RenderOutput target = render_view(one_gaussian_scene(Vec3(0.9, 0.2, 0.4)), cam);
  const RefineResult r =
      refine_appearance(one_gaussian_scene(Vec3(0.1, 0.8, 0.9)), cam, target.color, target.depth, {}, 100, 0.15);
  EXPECT_LE(r.loss_history.back(), 0.1 * r.loss_history.front());
  // Every increase of the loss is reported.
  std::size_t increases = 0;
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) increases += r.loss_history[i] > r.loss_history[i - 1] + 1e-12;
  EXPECT_EQ(increases, r.warnings.size());
  for (const auto& g : r.scene.gaussians) {
    EXPECT_GE(g.opacity, 0.001);
    EXPECT_LE(g.opacity, 0.999);
    EXPECT_GE(g.color.minCoeff(), 0.0);
    EXPECT_LE(g.color.maxCoeff(), 1.0);
  }
}

TEST(Refine, RejectsBadArguments) {
  const Camera cam = small_camera(24, 20, 30.0);
  const Scene s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
  const Image img(24, 20, 3), depth(24, 20, 1);
  EXPECT_THROW(refine_appearance(s, cam, img, depth, {}, 0, 0.1), Error);
  EXPECT_THROW(refine_appearance(s, cam, img, depth, {}, 1, 0.0), Error);
}

TEST(Refine, DivergenceIsReported) {
  const Camera cam = small_camera(24, 20, 30.0);
  Scene s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
  const RenderOutput target = render_view(s, cam);
  Image gt_color = target.color;
  gt_color.at(12, 10, 0) += 1e-3;  // tiny initial loss, then a huge step
  try {
    refine_appearance(s, cam, gt_color, target.depth, {}, 3, 1e6);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
  }
}

TEST(Gaussian, Validate) {
  Gaussian3D g;
  EXPECT_NO_THROW(g.validate());
  g.opacity = 1.5;
  EXPECT_THROW(g.validate(), Error);
  g.opacity = 0.5;
  g.scale[1] = 0.0;
  EXPECT_THROW(g.validate(), Error);
  g.scale[1] = 1.0;
  g.rotation = Eigen::Quaterniond(2, 0, 0, 0);
  EXPECT_THROW(g.validate(), Error);
}

}  // namespace
}  // namespace gsdrive
