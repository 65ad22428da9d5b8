#include "ivgf/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ivgf/parallel.hpp"

namespace ivgf {

namespace {

// One projected, depth-sorted splat ready for per-pixel evaluation.
struct Prepared {
  Vec2 mean2d;
  Mat2 conic;        // inverse of the dilated 2D covariance
  Scalar depth = 0;
  Vec3 color;
  Scalar tau_alpha = 0;  // τ·sigmoid(opacity_logit)
  Scalar tau = 1, alpha = 0;
  Scalar radius = 0;  // pixel bound beyond which α' < cutoff
  int global_idx = -1;
  bool valid = false;
};

struct Frame {
  std::vector<Prepared> splats;  // depth-rank order
  TileBinning bins;
};

std::vector<const GaussianPrimitive*> gather(const MultimodalScene& scene) {
  std::vector<const GaussianPrimitive*> out;
  out.reserve(scene.total_count());
  for (const auto& [g, idx] : concat_modalities(scene)) {
    (void)idx;
    out.push_back(g);
  }
  return out;
}

Frame prepare_frame(const std::vector<const GaussianPrimitive*>& prims, const VecX& tau,
                    const Camera& cam, const RenderOptions& opts) {
  cam.validate();
  const int n = static_cast<int>(prims.size());
  if (tau.size() != n)
    throw ShapeError("rasterizer: tau length does not match primitive count");
  if (n > 0 && (tau.minCoeff() < 0.0 || tau.maxCoeff() > 1.0))
    throw InvalidParameterError("rasterizer: tau entries must lie in [0,1]");

  const Vec3 cam_pos = cam.position();
  std::vector<Prepared> all(n);
  parallel_for(n, [&](int i) {
    const GaussianPrimitive& g = *prims[i];
    Prepared& s = all[i];
    s.global_idx = i;
    s.tau = tau[i];
    s.alpha = g.opacity();
    s.tau_alpha = s.tau * s.alpha;
    if (s.tau_alpha < opts.alpha_cutoff) return;  // can never clear the cutoff
    const ProjectedGaussian p = project_gaussian(g.mean, g.covariance(), cam);
    if (p.culled) return;
    s.mean2d = p.mean2d;
    s.depth = p.depth;
    s.conic = p.cov2d.inverse();
    const Vec3 dir = (g.mean - cam_pos).normalized();
    s.color = sh_to_color(g.sh, dir);
    // λ_max of the 2x2 covariance bounds the Mahalanobis ellipse.
    const Scalar mid = 0.5 * p.cov2d.trace();
    const Scalar det = p.cov2d.determinant();
    const Scalar lmax = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    s.radius = std::sqrt(2.0 * std::log(s.tau_alpha / opts.alpha_cutoff) * lmax) + 1e-6;
    s.valid = true;
  });

  Frame frame;
  frame.splats.reserve(n);
  for (auto& s : all)
    if (s.valid) frame.splats.push_back(std::move(s));
  // Global front-to-back order; ties broken by global index for determinism.
  std::stable_sort(frame.splats.begin(), frame.splats.end(), [](const Prepared& a, const Prepared& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.global_idx < b.global_idx;
  });

  std::vector<Vec2> centers(frame.splats.size());
  std::vector<Scalar> radii(frame.splats.size());
  for (size_t i = 0; i < frame.splats.size(); ++i) {
    centers[i] = frame.splats[i].mean2d;
    radii[i] = frame.splats[i].radius;
  }
  frame.bins = tile_bin(centers, radii, opts.tile_size, cam.width, cam.height);
  return frame;
}

// Per-pixel compositing chain shared by forward and backward replay.
struct Contribution {
  int list_pos;       // index into the tile's splat list
  Scalar gauss;       // G(x)
  Scalar alpha_eff;   // min(clamp, τ·α·G)
  Scalar t_before;    // transmittance ahead of this contribution
  bool clamped;
};

template <typename Visitor>
void composite_pixel(const std::vector<Prepared>& splats, const std::vector<int>& list,
                     Scalar px, Scalar py, const RenderOptions& opts, Vec3* accum,
                     Scalar* t_final, int* count, Visitor&& visit) {
  Scalar T = 1.0;
  Vec3 c = Vec3::Zero();
  int cnt = 0;
  for (int pos : list) {
    const Prepared& s = splats[pos];
    const Vec2 d(px - s.mean2d.x(), py - s.mean2d.y());
    const Scalar q = d.x() * (s.conic(0, 0) * d.x() + s.conic(0, 1) * d.y()) +
                     d.y() * (s.conic(1, 0) * d.x() + s.conic(1, 1) * d.y());
    const Scalar g = std::exp(-0.5 * q);
    const Scalar raw = s.tau_alpha * g;
    const bool clamped = raw > opts.alpha_clamp;
    const Scalar a = clamped ? opts.alpha_clamp : raw;
    if (a < opts.alpha_cutoff) continue;
    const Scalar test_T = T * (1.0 - a);
    if (test_T < opts.transmittance_eps) break;
    visit(Contribution{pos, g, a, T, clamped});
    c += s.color * (a * T);
    ++cnt;
    T = test_T;
  }
  *accum = c + T * opts.background;
  *t_final = T;
  *count = cnt;
}

RenderOutput run_forward(const Frame& frame, const Camera& cam, const RenderOptions& opts) {
  RenderOutput out;
  out.image = ImageBuffer(cam.width, cam.height, 3);
  out.transmittance = ImageBuffer(cam.width, cam.height, 1);
  out.contributor_count.assign(static_cast<size_t>(cam.width) * cam.height, 0);

  const auto& bins = frame.bins;
  const int n_tiles = bins.tiles_x * bins.tiles_y;
  parallel_for(n_tiles, [&](int tile) {
    const int tx = tile % bins.tiles_x, ty = tile / bins.tiles_x;
    const int x0 = tx * bins.tile_size, y0 = ty * bins.tile_size;
    const int x1 = std::min(x0 + bins.tile_size, cam.width);
    const int y1 = std::min(y0 + bins.tile_size, cam.height);
    const auto& list = bins.lists[tile];
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        Vec3 acc;
        Scalar tf;
        int cnt;
        composite_pixel(frame.splats, list, static_cast<Scalar>(x), static_cast<Scalar>(y),
                        opts, &acc, &tf, &cnt, [](const Contribution&) {});
        for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = acc[c];
        out.transmittance.at(x, y, 0) = tf;
        out.contributor_count[static_cast<size_t>(y) * cam.width + x] = cnt;
      }
  });
  return out;
}

// Worker-local gradient accumulators over the depth-sorted splat array.
struct Accum {
  MatX d_color;   // S x 3
  VecX d_tau, d_logit;
  MatX d_mean2d;  // S x 2
  MatX d_conic;   // S x 3: (0,0), common off-diagonal, (1,1)
  void init(int s, bool geom) {
    d_color = MatX::Zero(s, 3);
    d_tau = VecX::Zero(s);
    d_logit = VecX::Zero(s);
    if (geom) {
      d_mean2d = MatX::Zero(s, 2);
      d_conic = MatX::Zero(s, 3);
    }
  }
};

SplatGradients run_backward(const std::vector<const GaussianPrimitive*>& prims,
                            const Frame& frame, const Camera& cam, const ImageBuffer& d_image,
                            const RenderOptions& opts) {
  if (d_image.width() != cam.width || d_image.height() != cam.height || d_image.channels() != 3)
    throw ShapeError("render backward: d_image shape does not match the camera");

  const int n = static_cast<int>(prims.size());
  const int s_count = static_cast<int>(frame.splats.size());
  const bool geom = opts.with_geometry_gradients;

  const auto& bins = frame.bins;
  const int n_tiles = bins.tiles_x * bins.tiles_y;
  const int workers = thread_count();
  std::vector<Accum> partial(workers);
  for (auto& a : partial) a.init(s_count, geom);

  parallel_for_workers(n_tiles, [&](int w, int tile) {
    Accum& acc = partial[w];
    const int tx = tile % bins.tiles_x, ty = tile / bins.tiles_x;
    const int x0 = tx * bins.tile_size, y0 = ty * bins.tile_size;
    const int x1 = std::min(x0 + bins.tile_size, cam.width);
    const int y1 = std::min(y0 + bins.tile_size, cam.height);
    const auto& list = bins.lists[tile];
    if (list.empty()) return;
    std::vector<Contribution> chain;
    chain.reserve(list.size());
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const Vec3 gpix(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
        chain.clear();
        Vec3 dummy;
        Scalar t_final;
        int cnt;
        composite_pixel(frame.splats, list, static_cast<Scalar>(x), static_cast<Scalar>(y),
                        opts, &dummy, &t_final, &cnt,
                        [&](const Contribution& c) { chain.push_back(c); });
        if (chain.empty()) continue;
        // Reverse sweep: S carries Σ_{j>k} c_j w_j + T_final·bg.
        Vec3 suffix = t_final * opts.background;
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
          const Prepared& s = frame.splats[it->list_pos];
          const Scalar w_k = it->alpha_eff * it->t_before;
          acc.d_color.row(it->list_pos) += (gpix * w_k).transpose();
          const Vec3 da_vec = s.color * it->t_before - suffix / (1.0 - it->alpha_eff);
          suffix += s.color * w_k;
          if (it->clamped) continue;  // flat region of the α ceiling
          const Scalar da = gpix.dot(da_vec);
          const Scalar g = it->gauss;
          acc.d_tau[it->list_pos] += da * s.alpha * g;
          acc.d_logit[it->list_pos] += da * s.tau * g * s.alpha * (1.0 - s.alpha);
          if (geom) {
            const Scalar dG = da * s.tau_alpha;
            const Vec2 d(static_cast<Scalar>(x) - s.mean2d.x(),
                         static_cast<Scalar>(y) - s.mean2d.y());
            const Vec2 Ad = s.conic * d;
            // ∂G/∂mean2d = G·A·d ; ∂G/∂A = -0.5·G·d·dᵀ
            acc.d_mean2d.row(it->list_pos) += (dG * g * Ad).transpose();
            acc.d_conic(it->list_pos, 0) += dG * g * (-0.5) * d.x() * d.x();
            acc.d_conic(it->list_pos, 1) += dG * g * (-0.5) * d.x() * d.y();
            acc.d_conic(it->list_pos, 2) += dG * g * (-0.5) * d.y() * d.y();
          }
        }
      }
  });

  // Deterministic reduction in worker order.
  Accum total = std::move(partial[0]);
  for (int w = 1; w < workers; ++w) {
    total.d_color += partial[w].d_color;
    total.d_tau += partial[w].d_tau;
    total.d_logit += partial[w].d_logit;
    if (geom) {
      total.d_mean2d += partial[w].d_mean2d;
      total.d_conic += partial[w].d_conic;
    }
  }

  const int dc = n > 0 ? static_cast<int>(prims[0]->sh.size()) : 0;
  SplatGradients out;
  out.d_sh = MatX::Zero(n, dc);
  out.d_opacity_logit = VecX::Zero(n);
  out.d_tau = VecX::Zero(n);
  out.has_geometry = geom;
  if (geom) {
    out.d_mean2d = MatX::Zero(n, 2);
    out.d_mean = MatX::Zero(n, 3);
    out.d_quat = MatX::Zero(n, 4);
    out.d_log_scale = MatX::Zero(n, 3);
  }

  const Vec3 cam_pos = cam.position();
  parallel_for(s_count, [&](int si) {
    const Prepared& s = frame.splats[si];
    const int gi = s.global_idx;
    const GaussianPrimitive& g = *prims[gi];
    out.d_opacity_logit[gi] = total.d_logit[si];
    out.d_tau[gi] = total.d_tau[si];

    const Vec3 d_color = total.d_color.row(si).transpose();
    const Vec3 v = g.mean - cam_pos;
    const Scalar r = v.norm();
    const Vec3 dir = v / r;
    MatX d_sh;
    Vec3 d_dir;
    sh_to_color_backward(g.sh, dir, d_color, &d_sh, &d_dir);
    const int basis = static_cast<int>(g.sh.cols());
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < basis; ++b) out.d_sh(gi, c * basis + b) = d_sh(c, b);

    if (geom) {
      Mat2 dA;
      dA << total.d_conic(si, 0), total.d_conic(si, 1), total.d_conic(si, 1),
          total.d_conic(si, 2);
      const Mat2 d_cov2d = -s.conic * dA * s.conic;  // A = C⁻¹
      Vec3 d_mean;
      Mat3 d_cov3;
      project_gaussian_backward(g.mean, g.covariance(), cam,
                                total.d_mean2d.row(si).transpose(), d_cov2d, 0.0, &d_mean,
                                &d_cov3);
      Vec4 d_quat;
      Vec3 d_ls;
      build_covariance_backward(g.rotation, g.log_scale, d_cov3, &d_quat, &d_ls);
      // View-direction dependence of the SH color.
      d_mean += (Mat3::Identity() - dir * dir.transpose()) / r * d_dir;
      out.d_mean2d.row(gi) = total.d_mean2d.row(si);
      out.d_mean.row(gi) = d_mean.transpose();
      out.d_quat.row(gi) = d_quat.transpose();
      out.d_log_scale.row(gi) = d_ls.transpose();
    }
  });
  return out;
}

}  // namespace

TileBinning tile_bin(const std::vector<Vec2>& centers, const std::vector<Scalar>& radii,
                     int tile_size, int width, int height) {
  if (tile_size <= 0) throw InvalidParameterError("tile_bin: tile_size must be positive");
  if (centers.size() != radii.size()) throw ShapeError("tile_bin: centers/radii size mismatch");
  TileBinning b;
  b.tile_size = tile_size;
  b.tiles_x = (width + tile_size - 1) / tile_size;
  b.tiles_y = (height + tile_size - 1) / tile_size;
  b.lists.assign(static_cast<size_t>(b.tiles_x) * b.tiles_y, {});
  for (int i = 0; i < static_cast<int>(centers.size()); ++i) {
    const Scalar r = radii[i];
    const int tx0 = std::clamp(static_cast<int>(std::floor((centers[i].x() - r) / tile_size)), 0,
                               b.tiles_x - 1);
    const int tx1 = std::clamp(static_cast<int>(std::floor((centers[i].x() + r) / tile_size)), 0,
                               b.tiles_x - 1);
    const int ty0 = std::clamp(static_cast<int>(std::floor((centers[i].y() - r) / tile_size)), 0,
                               b.tiles_y - 1);
    const int ty1 = std::clamp(static_cast<int>(std::floor((centers[i].y() + r) / tile_size)), 0,
                               b.tiles_y - 1);
    if (centers[i].x() + r < 0 || centers[i].x() - r > width - 1 || centers[i].y() + r < 0 ||
        centers[i].y() - r > height - 1)
      continue;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        b.lists[static_cast<size_t>(ty) * b.tiles_x + tx].push_back(i);
  }
  return b;
}

RenderOutput render_single(const std::vector<GaussianPrimitive>& primitives, const Camera& cam,
                           const RenderOptions& opts) {
  std::vector<const GaussianPrimitive*> ptrs;
  ptrs.reserve(primitives.size());
  for (const auto& g : primitives) ptrs.push_back(&g);
  const Frame frame = prepare_frame(ptrs, VecX::Ones(ptrs.size()), cam, opts);
  return run_forward(frame, cam, opts);
}

RenderOutput render_fused(const MultimodalScene& scene, const Camera& cam, const VecX& tau,
                          const RenderOptions& opts) {
  const auto ptrs = gather(scene);
  const Frame frame = prepare_frame(ptrs, tau, cam, opts);
  return run_forward(frame, cam, opts);
}

SplatGradients render_fused_backward(const MultimodalScene& scene, const Camera& cam,
                                     const VecX& tau, const ImageBuffer& d_image,
                                     const RenderOptions& opts) {
  const auto ptrs = gather(scene);
  const Frame frame = prepare_frame(ptrs, tau, cam, opts);
  return run_backward(ptrs, frame, cam, d_image, opts);
}

SplatGradients render_single_backward(const std::vector<GaussianPrimitive>& primitives,
                                      const Camera& cam, const ImageBuffer& d_image,
                                      const RenderOptions& opts) {
  std::vector<const GaussianPrimitive*> ptrs;
  ptrs.reserve(primitives.size());
  for (const auto& g : primitives) ptrs.push_back(&g);
  const Frame frame = prepare_frame(ptrs, VecX::Ones(ptrs.size()), cam, opts);
  return run_backward(ptrs, frame, cam, d_image, opts);
}

}  // namespace ivgf
