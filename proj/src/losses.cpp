#include "ivgf/losses.hpp"

#include <array>
#include <cmath>

namespace ivgf {

namespace {

Scalar sign0(Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

constexpr int kWin = 11;
constexpr Scalar kSsimC1 = 0.01 * 0.01;
constexpr Scalar kSsimC2 = 0.03 * 0.03;

std::array<Scalar, kWin> gaussian_window() {
  std::array<Scalar, kWin> k{};
  const Scalar sigma = 1.5;
  Scalar sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const Scalar d = i - (kWin - 1) / 2.0;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

using Plane = Eigen::ArrayXXd;  // (H, W) indexed (y, x)

Plane channel_plane(const ImageBuffer& img, int c) {
  Plane p(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) p(y, x) = img.at(x, y, c);
  return p;
}

// Separable valid correlation with the symmetric window: (H,W) -> (H-10, W-10).
Plane conv_valid(const Plane& in, const std::array<Scalar, kWin>& k) {
  const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  Plane tmp(h - kWin + 1, w);
  for (int y = 0; y <= h - kWin; ++y)
    for (int x = 0; x < w; ++x) {
      Scalar s = 0;
      for (int u = 0; u < kWin; ++u) s += k[u] * in(y + u, x);
      tmp(y, x) = s;
    }
  Plane out(h - kWin + 1, w - kWin + 1);
  for (int y = 0; y < tmp.rows(); ++y)
    for (int x = 0; x <= w - kWin; ++x) {
      Scalar s = 0;
      for (int u = 0; u < kWin; ++u) s += k[u] * tmp(y, x + u);
      out(y, x) = s;
    }
  return out;
}

// Adjoint of conv_valid: scatter (H-10, W-10) back to (H, W).
Plane conv_full(const Plane& in, const std::array<Scalar, kWin>& k, int h, int w) {
  Plane tmp = Plane::Zero(in.rows(), w);
  for (int y = 0; y < in.rows(); ++y)
    for (int x = 0; x < in.cols(); ++x)
      for (int u = 0; u < kWin; ++u) tmp(y, x + u) += k[u] * in(y, x);
  Plane out = Plane::Zero(h, w);
  for (int y = 0; y < in.rows(); ++y)
    for (int x = 0; x < w; ++x)
      for (int u = 0; u < kWin; ++u) out(y + u, x) += k[u] * tmp(y, x);
  return out;
}

}  // namespace

LossValue l1_loss(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_dims(b)) throw ShapeError("l1_loss: dimension mismatch");
  LossValue out;
  out.d_image = ImageBuffer(a.width(), a.height(), a.channels());
  const Scalar norm = 1.0 / static_cast<Scalar>(a.size());
  Scalar sum = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const Scalar d = a.data()[i] - b.data()[i];
    sum += std::abs(d);
    out.d_image.data()[i] = sign0(d) * norm;
  }
  out.value = sum * norm;
  return out;
}

SsimResult ssim(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_dims(b)) throw ShapeError("ssim: dimension mismatch");
  if (a.width() < kWin || a.height() < kWin)
    throw InvalidParameterError("ssim: image smaller than the 11x11 window");
  static const auto k = gaussian_window();
  const int h = a.height(), w = a.width(), ch = a.channels();

  SsimResult out;
  out.d_image = ImageBuffer(w, h, ch);
  const Scalar norm =
      1.0 / (static_cast<Scalar>(h - kWin + 1) * (w - kWin + 1) * ch);
  Scalar total = 0;

  for (int c = 0; c < ch; ++c) {
    const Plane pa = channel_plane(a, c), pb = channel_plane(b, c);
    const Plane mu_a = conv_valid(pa, k), mu_b = conv_valid(pb, k);
    const Plane e_aa = conv_valid(pa * pa, k), e_bb = conv_valid(pb * pb, k);
    const Plane e_ab = conv_valid(pa * pb, k);

    const Plane var_a = e_aa - mu_a * mu_a;
    const Plane var_b = e_bb - mu_b * mu_b;
    const Plane cov = e_ab - mu_a * mu_b;

    const Plane a1 = 2.0 * mu_a * mu_b + kSsimC1;
    const Plane a2 = 2.0 * cov + kSsimC2;
    const Plane b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
    const Plane b2 = var_a + var_b + kSsimC2;
    const Plane denom = b1 * b2;
    const Plane s = a1 * a2 / denom;
    total += s.sum();

    // Partials w.r.t. (μ_a, E[a²], E[ab]); σ terms fold in through the chain.
    const Plane d_cov = 2.0 * a1 / denom;        // ∂s/∂σ_ab
    const Plane d_var = -s / b2;                 // ∂s/∂σ_a²
    const Plane d_mu = 2.0 * mu_b * a2 / denom - 2.0 * mu_a * s / b1 - mu_b * d_cov -
                       2.0 * mu_a * d_var;
    const Plane g_mu = conv_full(d_mu * norm, k, h, w);
    const Plane g_e2 = conv_full(d_var * norm, k, h, w);
    const Plane g_ab = conv_full(d_cov * norm, k, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.d_image.at(x, y, c) = g_mu(y, x) + 2.0 * pa(y, x) * g_e2(y, x) +
                                  pb(y, x) * g_ab(y, x);
  }
  out.value = total * norm;
  return out;
}

Stage1Loss stage1_loss(const ImageBuffer& visible, const ImageBuffer& visible_render,
                       const ImageBuffer& infrared, const ImageBuffer& infrared_render,
                       Scalar gamma) {
  if (gamma < 0.0 || gamma > 1.0)
    throw InvalidParameterError("stage1_loss: gamma must lie in [0,1]");
  auto modality_term = [](const ImageBuffer& gt, const ImageBuffer& render, Scalar weight,
                          ImageBuffer* d_render) {
    const LossValue l1 = l1_loss(render, gt);
    const SsimResult ss = ssim(render, gt);
    *d_render = ImageBuffer(render.width(), render.height(), render.channels());
    for (size_t i = 0; i < d_render->size(); ++i)
      d_render->data()[i] = weight * (l1.d_image.data()[i] - ss.d_image.data()[i]);
    return weight * (l1.value + (1.0 - ss.value));
  };
  Stage1Loss out;
  out.value = modality_term(visible, visible_render, gamma, &out.d_visible_render) +
              modality_term(infrared, infrared_render, 1.0 - gamma, &out.d_infrared_render);
  return out;
}

LossValue fusion_intensity_loss(const ImageBuffer& fused, const FusionTargets& targets,
                                Scalar lambda1, Scalar lambda2) {
  if (lambda1 < 0 || lambda2 < 0)
    throw InvalidParameterError("fusion_intensity_loss: negative weights");
  const LossValue l1 = l1_loss(fused, targets.max_vt);
  const SsimResult ss_t = ssim(fused, targets.infrared);
  const SsimResult ss_v = ssim(fused, targets.visible);
  LossValue out;
  out.value = lambda1 * l1.value + lambda2 * ((1.0 - ss_t.value) + (1.0 - ss_v.value));
  out.d_image = ImageBuffer(fused.width(), fused.height(), fused.channels());
  for (size_t i = 0; i < out.d_image.size(); ++i)
    out.d_image.data()[i] = lambda1 * l1.d_image.data()[i] -
                            lambda2 * (ss_t.d_image.data()[i] + ss_v.d_image.data()[i]);
  return out;
}

void sobel(const ImageBuffer& img, ImageBuffer* gx, ImageBuffer* gy) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int h = img.height(), w = img.width(), ch = img.channels();
  *gx = ImageBuffer(w, h, ch);
  *gy = ImageBuffer(w, h, ch);
  auto clampx = [&](int x) { return std::clamp(x, 0, w - 1); };
  auto clampy = [&](int y) { return std::clamp(y, 0, h - 1); };
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        Scalar sx = 0, sy = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const Scalar v = img.at(clampx(x + dx), clampy(y + dy), c);
            sx += kx[dy + 1][dx + 1] * v;
            sy += kx[dx + 1][dy + 1] * v;  // Ky = Kxᵀ
          }
        gx->at(x, y, c) = sx;
        gy->at(x, y, c) = sy;
      }
}

LossValue fusion_gradient_loss(const ImageBuffer& fused, const FusionTargets& targets) {
  if (!fused.same_dims(targets.max_vt))
    throw ShapeError("fusion_gradient_loss: dimension mismatch");
  if (fused.width() < 3 || fused.height() < 3)
    throw InvalidParameterError("fusion_gradient_loss: image smaller than 3x3");
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  ImageBuffer fx, fy, mx, my;
  sobel(fused, &fx, &fy);
  sobel(targets.max_vt, &mx, &my);

  const int h = fused.height(), w = fused.width(), ch = fused.channels();
  const Scalar norm = 1.0 / (2.0 * static_cast<Scalar>(fused.size()));
  LossValue out;
  out.d_image = ImageBuffer(w, h, ch);
  Scalar sum = 0;
  auto clampx = [&](int x) { return std::clamp(x, 0, w - 1); };
  auto clampy = [&](int y) { return std::clamp(y, 0, h - 1); };
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Scalar dx_diff = fx.at(x, y, c) - mx.at(x, y, c);
        const Scalar dy_diff = fy.at(x, y, c) - my.at(x, y, c);
        sum += std::abs(dx_diff) + std::abs(dy_diff);
        const Scalar sx = sign0(dx_diff) * norm;
        const Scalar sy = sign0(dy_diff) * norm;
        // Adjoint of the padded Sobel: scatter onto the clamped source taps.
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            out.d_image.at(clampx(x + dx), clampy(y + dy), c) +=
                sx * kx[dy + 1][dx + 1] + sy * kx[dx + 1][dy + 1];
      }
  out.value = sum * norm;
  return out;
}

LossValue stage2_loss(const ImageBuffer& fused, const FusionTargets& targets, Scalar lambda1,
                      Scalar lambda2) {
  const LossValue intensity = fusion_intensity_loss(fused, targets, lambda1, lambda2);
  const LossValue gradient = fusion_gradient_loss(fused, targets);
  LossValue out;
  out.value = intensity.value + gradient.value;
  out.d_image = ImageBuffer(fused.width(), fused.height(), fused.channels());
  for (size_t i = 0; i < out.d_image.size(); ++i)
    out.d_image.data()[i] = intensity.d_image.data()[i] + gradient.d_image.data()[i];
  return out;
}

}  // namespace ivgf
