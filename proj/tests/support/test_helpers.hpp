#pragma once

#include <functional>
#include <random>

#include "ivgf/cma.hpp"
#include "ivgf/rasterizer.hpp"
#include "ivgf/scene.hpp"

namespace ivgf::testing {

/// Brute-force reference renderer: per pixel, loops over every primitive in
/// global depth order with the same cutoff/early-stop rules as the tiled
/// path, but without any binning. Independent of tile_bin and the tiled
/// compositing loop.
inline RenderOutput naive_render(const MultimodalScene& scene, const Camera& cam,
                                 const VecX& tau, const RenderOptions& opts = {}) {
  struct Splat {
    Vec2 mean2d;
    Mat2 conic;
    Scalar depth;
    Vec3 color;
    Scalar tau_alpha;
    int idx;
  };
  std::vector<Splat> splats;
  const Vec3 cam_pos = cam.position();
  for (const auto& [g, idx] : concat_modalities(scene)) {
    const Scalar ta = tau[idx] * g->opacity();
    const ProjectedGaussian p = project_gaussian(g->mean, g->covariance(), cam);
    if (p.culled) continue;
    Splat s;
    s.mean2d = p.mean2d;
    s.conic = p.cov2d.inverse();
    s.depth = p.depth;
    s.color = sh_to_color(g->sh, (g->mean - cam_pos).normalized());
    s.tau_alpha = ta;
    s.idx = idx;
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.idx < b.idx;
  });

  RenderOutput out;
  out.image = ImageBuffer(cam.width, cam.height, 3);
  out.transmittance = ImageBuffer(cam.width, cam.height, 1);
  out.contributor_count.assign(static_cast<size_t>(cam.width) * cam.height, 0);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Scalar T = 1.0;
      Vec3 acc = Vec3::Zero();
      int cnt = 0;
      for (const auto& s : splats) {
        const Vec2 d(x - s.mean2d.x(), y - s.mean2d.y());
        const Scalar q = d.dot(s.conic * d);
        const Scalar raw = s.tau_alpha * std::exp(-0.5 * q);
        const Scalar a = std::min(raw, opts.alpha_clamp);
        if (a < opts.alpha_cutoff) continue;
        const Scalar test_T = T * (1.0 - a);
        if (test_T < opts.transmittance_eps) break;
        acc += s.color * (a * T);
        ++cnt;
        T = test_T;
      }
      acc += T * opts.background;
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = acc[c];
      out.transmittance.at(x, y, 0) = T;
      out.contributor_count[static_cast<size_t>(y) * cam.width + x] = cnt;
    }
  return out;
}

inline Camera test_camera(int w = 32, int h = 32, Scalar f = 40.0) {
  Camera cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = f;
  cam.cx = 0.5 * w;
  cam.cy = 0.5 * h;
  cam.world_to_camera.setIdentity();
  return cam;
}

/// Random scene in front of a +z-looking camera at the origin.
inline MultimodalScene random_scene(uint64_t seed, int n_visible, int n_infrared,
                                    int sh_degree = 1, Scalar opacity_max = 0.9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  const int basis = sh_basis_size(sh_degree);
  auto make = [&](Modality m) {
    GaussianPrimitive g;
    g.mean = Vec3(u(rng) * 1.6 - 0.8, u(rng) * 1.6 - 0.8, 2.0 + 2.0 * u(rng));
    g.rotation = Quat(u(rng) * 2 - 1, u(rng) * 2 - 1, u(rng) * 2 - 1, u(rng) * 2 - 1);
    if (g.rotation.norm() < 1e-3) g.rotation = Quat::Identity();
    g.log_scale = Vec3(std::log(0.05 + 0.2 * u(rng)), std::log(0.05 + 0.2 * u(rng)),
                       std::log(0.05 + 0.2 * u(rng)));
    g.opacity_logit = logit(0.05 + (opacity_max - 0.05) * u(rng));
    g.modality = m;
    g.sh = MatX::Zero(3, basis);
    for (int c = 0; c < 3; ++c) {
      g.sh(c, 0) = (u(rng) - 0.5) / 0.28209479177387814;
      for (int b = 1; b < basis; ++b) g.sh(c, b) = 0.2 * (u(rng) - 0.5);
    }
    return g;
  };
  MultimodalScene scene;
  scene.sh_degree = sh_degree;
  for (int i = 0; i < n_visible; ++i) scene.visible.push_back(make(Modality::Visible));
  for (int i = 0; i < n_infrared; ++i) scene.infrared.push_back(make(Modality::Infrared));
  return scene;
}

inline VecX random_tau(uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(0.05, 0.95);
  VecX tau(n);
  for (int i = 0; i < n; ++i) tau[i] = u(rng);
  return tau;
}

/// Central finite difference of a scalar functional.
inline Scalar central_diff(const std::function<Scalar(Scalar)>& f, Scalar x, Scalar eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

inline ImageBuffer random_image(uint64_t seed, int w, int h, int c = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  ImageBuffer img(w, h, c);
  for (size_t i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  return img;
}

}  // namespace ivgf::testing
