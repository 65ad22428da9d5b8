#pragma once

#include "ivgf/image.hpp"

namespace ivgf {

/// Scalar objective plus its gradient w.r.t. the rendered/fused image.
struct LossValue {
  Scalar value = 0;
  ImageBuffer d_image;
};

/// Ground-truth pair for the stage-2 fusion objective. Infrared targets are
/// already replicated to 3 channels at load time.
struct FusionTargets {
  ImageBuffer visible;
  ImageBuffer infrared;
  ImageBuffer max_vt;  // per-pixel, per-channel max(V,T)

  static FusionTargets make(const ImageBuffer& v, const ImageBuffer& t) {
    if (!v.same_dims(t)) throw ShapeError("FusionTargets: V/T dimension mismatch");
    return {v, t, ImageBuffer::max(v, t)};
  }
};

/// Mean absolute difference; subgradient at ties is zero.
LossValue l1_loss(const ImageBuffer& a, const ImageBuffer& b);

/// Mean local SSIM over valid 11x11 Gaussian windows (σ = 1.5,
/// C₁ = 0.01², C₂ = 0.03² on unit dynamic range), channels averaged.
/// d_image is the analytic gradient w.r.t. `a`.
struct SsimResult {
  Scalar value = 0;
  ImageBuffer d_image;
};
SsimResult ssim(const ImageBuffer& a, const ImageBuffer& b);

/// Stage-1 objective: γ·[L1 + (1−SSIM)](V) + (1−γ)·[L1 + (1−SSIM)](T).
/// Gradients are routed separately to the two rendered images.
struct Stage1Loss {
  Scalar value = 0;
  ImageBuffer d_visible_render;
  ImageBuffer d_infrared_render;
};
Stage1Loss stage1_loss(const ImageBuffer& visible, const ImageBuffer& visible_render,
                       const ImageBuffer& infrared, const ImageBuffer& infrared_render,
                       Scalar gamma);

/// λ₁·‖I − max(V,T)‖₁ + λ₂·[(1−SSIM(I,T)) + (1−SSIM(I,V))].
LossValue fusion_intensity_loss(const ImageBuffer& fused, const FusionTargets& targets,
                                Scalar lambda1, Scalar lambda2);

/// ‖∇I − ∇max(V,T)‖₁ with ∇ the 3x3 Sobel pair under replicate padding.
LossValue fusion_gradient_loss(const ImageBuffer& fused, const FusionTargets& targets);

/// Stage-2 total: intensity + gradient terms.
LossValue stage2_loss(const ImageBuffer& fused, const FusionTargets& targets, Scalar lambda1,
                      Scalar lambda2);

/// Sobel derivative planes (gx then gy per channel) with replicate padding;
/// exposed for the metrics/tests that inspect edges directly.
void sobel(const ImageBuffer& img, ImageBuffer* gx, ImageBuffer* gy);

}  // namespace ivgf
