#include <array>
#include <cmath>

#include "gsdrive/error.hpp"
#include "gsdrive/splat.hpp"

namespace gsdrive {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window() {
  static const std::array<double, kWindow> w = [] {
    std::array<double, kWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kHalf;
      k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Separable "same" Gaussian filter with zero padding. The kernel is symmetric,
// so this operator is self-adjoint.
Image filter(const Image& in) {
  const auto& k = window();
  Image tmp(in.width, in.height, 1, 0.0);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int xx = x + i - kHalf;
        if (xx >= 0 && xx < in.width) acc += k[i] * in.at(xx, y);
      }
      tmp.at(x, y) = acc;
    }
  }
  Image out(in.width, in.height, 1, 0.0);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int yy = y + i - kHalf;
        if (yy >= 0 && yy < in.height) acc += k[i] * tmp.at(x, yy);
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out(a.width, a.height, 1);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

struct SsimStats {
  Image mu_a, mu_b, e_aa, e_bb, e_ab;
};

SsimStats stats(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.channels != 1) {
    throw Error(ErrorCode::kShapeMismatch, "ssim inputs must be same-shape single-channel images");
  }
  return {filter(a), filter(b), filter(product(a, a)), filter(product(b, b)), filter(product(a, b))};
}

}  // namespace

Image to_luma(const Image& rgb) {
  if (rgb.channels != 3) throw Error(ErrorCode::kShapeMismatch, "luma needs a 3-channel image");
  Image out(rgb.width, rgb.height, 1);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      out.at(x, y) = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
    }
  }
  return out;
}

double ssim(const Image& a, const Image& b) {
  const SsimStats s = stats(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double ma = s.mu_a.data[i], mb = s.mu_b.data[i];
    const double va = s.e_aa.data[i] - ma * ma;
    const double vb = s.e_bb.data[i] - mb * mb;
    const double cov = s.e_ab.data[i] - ma * mb;
    sum += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
           ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return a.data.empty() ? 1.0 : sum / static_cast<double>(a.data.size());
}

Image ssim_gradient(const Image& a, const Image& b) {
  const SsimStats s = stats(a, b);
  const double inv_n = 1.0 / static_cast<double>(a.data.size());
  Image g_mu(a.width, a.height, 1), g_eaa(a.width, a.height, 1), g_eab(a.width, a.height, 1);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double ma = s.mu_a.data[i], mb = s.mu_b.data[i];
    const double a1 = 2.0 * ma * mb + kC1;
    const double a2 = 2.0 * (s.e_ab.data[i] - ma * mb) + kC2;
    const double b1 = ma * ma + mb * mb + kC1;
    const double b2 = (s.e_aa.data[i] - ma * ma) + (s.e_bb.data[i] - mb * mb) + kC2;
    const double v = (a1 * a2) / (b1 * b2);
    g_mu.data[i] = inv_n * (v / a1 * 2.0 * mb - v / a2 * 2.0 * mb - v / b1 * 2.0 * ma +
                            v / b2 * 2.0 * ma);
    g_eaa.data[i] = -inv_n * v / b2;
    g_eab.data[i] = inv_n * 2.0 * v / a2;
  }
  const Image f_mu = filter(g_mu);
  const Image f_eaa = filter(g_eaa);
  const Image f_eab = filter(g_eab);
  Image out(a.width, a.height, 1);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    out.data[i] = f_mu.data[i] + 2.0 * a.data[i] * f_eaa.data[i] + b.data[i] * f_eab.data[i];
  }
  return out;
}

}  // namespace gsdrive
