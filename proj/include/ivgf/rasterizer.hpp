#pragma once

#include <vector>

#include "ivgf/image.hpp"
#include "ivgf/scene.hpp"

namespace ivgf {

/// Rendering knobs; the defaults follow standard splatting practice.
struct RenderOptions {
  int tile_size = 16;
  Scalar alpha_cutoff = 1.0 / 255.0;       // contributions below this are skipped
  Scalar transmittance_eps = 1e-4;          // early stop once T would fall below
  Scalar alpha_clamp = 0.99;                // per-contribution opacity ceiling
  Vec3 background = Vec3::Zero();
  bool with_geometry_gradients = false;     // stage-1 path: also emit mean/rot/scale grads
};

struct RenderOutput {
  ImageBuffer image;          // H x W x 3
  ImageBuffer transmittance;  // H x W x 1, T after the last committed contribution
  std::vector<int> contributor_count;  // per pixel, row-major
};

/// Per-primitive gradients from the backward pass, indexed by the global
/// (concatenated) order of the forward call. Culled/skipped primitives hold
/// exact zeros.
struct SplatGradients {
  MatX d_sh;             // P x d_c, channel-major flattening
  VecX d_opacity_logit;  // P
  VecX d_tau;            // P
  bool has_geometry = false;
  MatX d_mean2d;     // P x 2, screen-space positional gradient (densification signal)
  MatX d_mean;       // P x 3
  MatX d_quat;       // P x 4 (w,x,y,z of the raw stored quaternion)
  MatX d_log_scale;  // P x 3
};

/// Tile-bucketed primitive indices; list entries are positions into the
/// caller's projected-splat array, kept in depth-rank order.
struct TileBinning {
  int tile_size = 16;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> lists;  // tiles_y * tiles_x, row-major
};

/// Buckets circles (center, radius in pixels) into all tiles their bounding
/// box overlaps. Entries keep the input order within each tile.
TileBinning tile_bin(const std::vector<Vec2>& centers, const std::vector<Scalar>& radii,
                     int tile_size, int width, int height);

/// Standard single-set splatting: front-to-back over-compositing of the
/// depth-sorted primitives with effective opacity α·G(x).
RenderOutput render_single(const std::vector<GaussianPrimitive>& primitives, const Camera& cam,
                           const RenderOptions& opts = {});

/// Fused compositing: effective opacity is τ_k·α_k·G_k with τ given in the
/// concatenated [visible..., infrared...] order; depth sorting is global
/// across both modalities.
RenderOutput render_fused(const MultimodalScene& scene, const Camera& cam, const VecX& tau,
                          const RenderOptions& opts = {});

/// Reverse-mode of render_fused for a loss with per-pixel image gradient
/// d_image (H x W x 3). Inputs must match the forward call exactly.
SplatGradients render_fused_backward(const MultimodalScene& scene, const Camera& cam,
                                     const VecX& tau, const ImageBuffer& d_image,
                                     const RenderOptions& opts = {});

/// Backward over a single-set render (τ ≡ 1); used by stage-1 training.
SplatGradients render_single_backward(const std::vector<GaussianPrimitive>& primitives,
                                      const Camera& cam, const ImageBuffer& d_image,
                                      const RenderOptions& opts = {});

}  // namespace ivgf
