#include "ivgf/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ivgf/metrics.hpp"

namespace ivgf {

void AdamState::remap(const std::vector<int>& kept, int stride) {
  VecX nm = VecX::Zero(static_cast<long>(kept.size()) * stride);
  VecX nv = VecX::Zero(static_cast<long>(kept.size()) * stride);
  for (size_t i = 0; i < kept.size(); ++i)
    if (kept[i] >= 0) {
      nm.segment(i * stride, stride) = m.segment(static_cast<long>(kept[i]) * stride, stride);
      nv.segment(i * stride, stride) = v.segment(static_cast<long>(kept[i]) * stride, stride);
    }
  m = std::move(nm);
  v = std::move(nv);
}

void adam_step(Eigen::Ref<VecX> params, const VecX& grads, AdamState& state, Scalar lr,
               Scalar beta1, Scalar beta2, Scalar eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state size mismatch");
  state.step += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
  const Scalar bc1 = 1.0 - std::pow(beta1, static_cast<Scalar>(state.step));
  const Scalar bc2 = 1.0 - std::pow(beta2, static_cast<Scalar>(state.step));
  params -= (lr / bc1) * state.m.cwiseQuotient(((state.v / bc2).cwiseSqrt().array() + eps).matrix());
}

void TrainConfig::validate() const {
  if (stage1_iters <= 0 || stage2_iters <= 0)
    throw InvalidParameterError("TrainConfig: iteration counts must be positive");
  if (lambda1 < 0 || lambda2 < 0)
    throw InvalidParameterError("TrainConfig: loss weights must be non-negative");
  if (lr.position <= 0 || lr.sh <= 0 || lr.opacity <= 0 || lr.scale <= 0 || lr.rotation <= 0 ||
      lr.cma <= 0)
    throw InvalidParameterError("TrainConfig: learning rates must be positive");
  if (gamma_override > 1.0)
    throw InvalidParameterError("TrainConfig: gamma_override must lie in [0,1] or be negative");
}

DensifyResult densify_and_prune(std::vector<GaussianPrimitive>& prims, const DensifyStats& stats,
                                const DensifyConfig& cfg, Scalar scene_extent,
                                std::mt19937_64& rng) {
  if (stats.grad_norm_sum.size() != static_cast<long>(prims.size()))
    throw ShapeError("densify_and_prune: stats size mismatch");
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  std::vector<GaussianPrimitive> out;
  DensifyResult res;
  out.reserve(prims.size() + prims.size() / 4);

  for (size_t i = 0; i < prims.size(); ++i) {
    GaussianPrimitive& g = prims[i];
    if (g.opacity() < cfg.prune_alpha) {
      ++res.pruned;
      continue;
    }
    const Scalar mean_grad =
        stats.count[i] > 0 ? stats.grad_norm_sum[i] / stats.count[i] : 0.0;
    const Scalar max_scale = std::exp(g.log_scale.maxCoeff());
    if (mean_grad <= cfg.grad_threshold) {
      res.new_from_old.push_back(static_cast<int>(i));
      out.push_back(std::move(g));
      continue;
    }
    if (max_scale <= cfg.percent_dense * scene_extent) {
      // Clone: keep the original, add a jittered copy.
      GaussianPrimitive copy = g;
      const Scalar jitter = 0.1 * max_scale;
      copy.mean += jitter * Vec3(normal(rng), normal(rng), normal(rng));
      res.new_from_old.push_back(static_cast<int>(i));
      out.push_back(std::move(g));
      res.new_from_old.push_back(-1);
      out.push_back(std::move(copy));
      ++res.cloned;
    } else {
      // Split: two samples from the Gaussian, scales shrunk.
      const Mat3 R = g.rotation.normalized().toRotationMatrix();
      const Vec3 s = g.log_scale.array().exp();
      for (int k = 0; k < 2; ++k) {
        GaussianPrimitive child = g;
        const Vec3 sample(normal(rng), normal(rng), normal(rng));
        child.mean = g.mean + R * s.cwiseProduct(sample);
        child.log_scale = g.log_scale.array() - std::log(cfg.split_scale_shrink);
        res.new_from_old.push_back(-1);
        out.push_back(std::move(child));
      }
      ++res.split;
    }
  }
  prims = std::move(out);
  return res;
}

std::vector<TrainView> load_train_views(const DatasetIndex& dataset) {
  std::vector<TrainView> views;
  for (const DatasetEntry* e : dataset.train_entries()) {
    TrainView v;
    v.name = e->name;
    v.camera = e->camera;
    v.visible = read_image(e->visible_path);
    v.infrared = read_image(e->infrared_path);
    views.push_back(std::move(v));
  }
  if (views.empty()) throw InvalidParameterError("training: dataset has no train views");
  return views;
}

std::vector<GaussianPrimitive> initialize_modality(const std::vector<TrainView>& views,
                                                   Modality modality, int count, int sh_degree,
                                                   Scalar extent, std::mt19937_64& rng) {
  Vec3 mean_color = Vec3::Zero();
  size_t n_px = 0;
  for (const auto& v : views) {
    const ImageBuffer& img = modality == Modality::Visible ? v.visible : v.infrared;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        mean_color += Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    n_px += static_cast<size_t>(img.width()) * img.height();
  }
  mean_color /= static_cast<Scalar>(n_px);

  std::uniform_real_distribution<Scalar> unit(-0.5 * extent, 0.5 * extent);
  std::vector<Vec3> positions(count);
  for (auto& p : positions) p = Vec3(unit(rng), unit(rng), unit(rng));

  Scalar nn_sum = 0;
  for (int i = 0; i < count; ++i) {
    Scalar best = std::numeric_limits<Scalar>::max();
    for (int j = 0; j < count; ++j)
      if (j != i) best = std::min(best, (positions[i] - positions[j]).norm());
    nn_sum += best;
  }
  const Scalar iso_scale = std::max(1e-3, nn_sum / count);

  const int basis = sh_basis_size(sh_degree);
  std::vector<GaussianPrimitive> prims(count);
  for (int i = 0; i < count; ++i) {
    GaussianPrimitive& g = prims[i];
    g.mean = positions[i];
    g.rotation = Quat::Identity();
    g.log_scale = Vec3::Constant(std::log(iso_scale));
    g.opacity_logit = logit(0.1);
    g.modality = modality;
    g.sh = MatX::Zero(3, basis);
    g.sh.col(0) = (mean_color - Vec3::Constant(0.5)) / 0.28209479177387814;
  }
  return prims;
}

namespace {

// Adam (or SGD) state for one modality's parameter groups.
struct GroupStates {
  AdamState pos, rot, scale, opa, sh;
  void init(int n, int dc) {
    pos.init(n * 3);
    rot.init(n * 4);
    scale.init(n * 3);
    opa.init(n);
    sh.init(n * dc);
  }
  void remap(const std::vector<int>& kept, int dc) {
    pos.remap(kept, 3);
    rot.remap(kept, 4);
    scale.remap(kept, 3);
    opa.remap(kept, 1);
    sh.remap(kept, dc);
  }
};

template <typename Extract>
void step_group(std::vector<GaussianPrimitive>& prims, const MatX& grads, AdamState& state,
                Scalar lr, int dim, bool plain_sgd, Extract&& field) {
  const int n = static_cast<int>(prims.size());
  VecX p(n * dim), g(n * dim);
  for (int i = 0; i < n; ++i) {
    Scalar* fp = field(prims[i]);
    for (int d = 0; d < dim; ++d) {
      p[i * dim + d] = fp[d];
      g[i * dim + d] = grads(i, d);
    }
  }
  if (plain_sgd)
    p -= lr * g;
  else
    adam_step(p, g, state, lr);
  for (int i = 0; i < n; ++i) {
    Scalar* fp = field(prims[i]);
    for (int d = 0; d < dim; ++d) fp[d] = p[i * dim + d];
  }
}

void apply_modality_step(std::vector<GaussianPrimitive>& prims, const SplatGradients& grads,
                         GroupStates& st, const LearningRates& lr, Scalar lr_pos_now,
                         bool plain_sgd, int dc) {
  step_group(prims, grads.d_mean, st.pos, lr_pos_now, 3, plain_sgd,
             [](GaussianPrimitive& g) { return g.mean.data(); });
  step_group(prims, grads.d_quat, st.rot, lr.rotation, 4, plain_sgd,
             [](GaussianPrimitive& g) { return g.rotation.coeffs().data(); });
  step_group(prims, grads.d_log_scale, st.scale, lr.scale, 3, plain_sgd,
             [](GaussianPrimitive& g) { return g.log_scale.data(); });
  step_group(prims, MatX(grads.d_opacity_logit), st.opa, lr.opacity, 1, plain_sgd,
             [](GaussianPrimitive& g) { return &g.opacity_logit; });
  step_group(prims, grads.d_sh, st.sh, lr.sh, dc, plain_sgd, [](GaussianPrimitive& g) {
    return g.sh.data();
  });
}

// Eigen quaternion stores (x,y,z,w); gradients come as (w,x,y,z). Reorder once.
MatX reorder_quat_grads(const MatX& d_quat_wxyz) {
  MatX out(d_quat_wxyz.rows(), 4);
  out.col(0) = d_quat_wxyz.col(1);  // x
  out.col(1) = d_quat_wxyz.col(2);  // y
  out.col(2) = d_quat_wxyz.col(3);  // z
  out.col(3) = d_quat_wxyz.col(0);  // w
  return out;
}

// SH gradients arrive channel-major per row; GaussianPrimitive::sh is a
// column-major Eigen 3xB matrix whose raw layout is (channel fastest).
MatX sh_grads_to_storage(const MatX& d_sh, int basis) {
  MatX out(d_sh.rows(), d_sh.cols());
  for (int i = 0; i < d_sh.rows(); ++i)
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < basis; ++b) out(i, b * 3 + c) = d_sh(i, c * basis + b);
  return out;
}

struct EpochSampler {
  std::vector<int> order;
  size_t pos = 0;
  std::mt19937_64 rng;
  explicit EpochSampler(int n, uint64_t seed) : rng(seed) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  int next() {
    if (pos >= order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }
    return order[pos++];
  }
};

}  // namespace

Stage1Result train_stage1(const DatasetIndex& dataset, const TrainConfig& config) {
  return train_stage1(load_train_views(dataset), config);
}

Stage1Result train_stage1(const std::vector<TrainView>& views, const TrainConfig& config) {
  config.validate();
  if (views.empty()) throw InvalidParameterError("train_stage1: empty dataset");

  std::mt19937_64 rng(config.seed);
  Stage1Result res;
  res.scene.sh_degree = config.sh_degree;
  res.scene.visible = initialize_modality(views, Modality::Visible, config.init_gaussians,
                                          config.sh_degree, config.scene_extent, rng);
  res.scene.infrared = initialize_modality(views, Modality::Infrared, config.init_gaussians,
                                           config.sh_degree, config.scene_extent, rng);
  const int dc = res.scene.coeff_count();
  const int basis = sh_basis_size(config.sh_degree);

  GroupStates st_vis, st_ir;
  st_vis.init(config.init_gaussians, dc);
  st_ir.init(config.init_gaussians, dc);
  DensifyStats stats_vis, stats_ir;
  stats_vis.init(config.init_gaussians);
  stats_ir.init(config.init_gaussians);

  RenderOptions ropts;
  ropts.with_geometry_gradients = true;
  EpochSampler sampler(static_cast<int>(views.size()), config.seed ^ 0x9e3779b97f4a7c15ull);

  const Scalar lr_pos_init = config.lr.position * config.scene_extent;
  const Scalar lr_pos_final = config.lr.position_final * config.scene_extent;

  for (int iter = 0; iter < config.stage1_iters; ++iter) {
    const TrainView& view = views[sampler.next()];
    const Scalar gamma = config.gamma_override >= 0.0 ? config.gamma_override
                                                      : gaussian_count_ratio(res.scene);

    const RenderOutput out_vis = render_single(res.scene.visible, view.camera, ropts);
    const RenderOutput out_ir = render_single(res.scene.infrared, view.camera, ropts);
    const Stage1Loss loss = stage1_loss(view.visible, out_vis.image, view.infrared,
                                        out_ir.image, gamma);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train_stage1: non-finite loss at iteration " +
                               std::to_string(iter));
    res.loss_curve.push_back(loss.value);
    res.psnr_visible.push_back(psnr(out_vis.image, view.visible));
    res.psnr_infrared.push_back(psnr(out_ir.image, view.infrared));

    const SplatGradients g_vis =
        render_single_backward(res.scene.visible, view.camera, loss.d_visible_render, ropts);
    const SplatGradients g_ir =
        render_single_backward(res.scene.infrared, view.camera, loss.d_infrared_render, ropts);

    const Scalar decay = static_cast<Scalar>(iter) / config.stage1_iters;
    const Scalar lr_pos = lr_pos_init * std::pow(lr_pos_final / lr_pos_init, decay);

    SplatGradients gv = g_vis, gi = g_ir;
    gv.d_quat = reorder_quat_grads(gv.d_quat);
    gi.d_quat = reorder_quat_grads(gi.d_quat);
    gv.d_sh = sh_grads_to_storage(gv.d_sh, basis);
    gi.d_sh = sh_grads_to_storage(gi.d_sh, basis);
    apply_modality_step(res.scene.visible, gv, st_vis, config.lr, lr_pos, config.plain_sgd, dc);
    apply_modality_step(res.scene.infrared, gi, st_ir, config.lr, lr_pos, config.plain_sgd, dc);

    for (int i = 0; i < g_vis.d_mean2d.rows(); ++i) {
      const Scalar n2 = g_vis.d_mean2d.row(i).norm();
      if (n2 > 0) {
        stats_vis.grad_norm_sum[i] += n2;
        stats_vis.count[i] += 1;
      }
    }
    for (int i = 0; i < g_ir.d_mean2d.rows(); ++i) {
      const Scalar n2 = g_ir.d_mean2d.row(i).norm();
      if (n2 > 0) {
        stats_ir.grad_norm_sum[i] += n2;
        stats_ir.count[i] += 1;
      }
    }

    const auto& dcfg = config.densify;
    if (config.densify_enabled && iter >= dcfg.start_iter && iter < dcfg.stop_iter &&
        (iter - dcfg.start_iter) % dcfg.interval == 0 && iter > dcfg.start_iter) {
      const DensifyResult rv =
          densify_and_prune(res.scene.visible, stats_vis, dcfg, config.scene_extent, rng);
      st_vis.remap(rv.new_from_old, dc);
      stats_vis.init(res.scene.visible_count());
      const DensifyResult ri =
          densify_and_prune(res.scene.infrared, stats_ir, dcfg, config.scene_extent, rng);
      st_ir.remap(ri.new_from_old, dc);
      stats_ir.init(res.scene.infrared_count());
    }
  }
  res.scene.validate();
  return res;
}

Stage2Result train_stage2(const MultimodalScene& scene, const DatasetIndex& dataset,
                          const TrainConfig& config) {
  return train_stage2(scene, load_train_views(dataset), config);
}

Stage2Result train_stage2(const MultimodalScene& scene, const std::vector<TrainView>& views,
                          const TrainConfig& config) {
  config.validate();
  scene.validate();
  if (views.empty()) throw InvalidParameterError("train_stage2: empty dataset");
  if (scene.total_count() == 0) throw InvalidParameterError("train_stage2: empty scene");

  Stage2Result res;
  res.cma = cma_init(config.seed, scene.coeff_count(), config.cma_hidden1, config.cma_hidden2);
  const MatX features = scene_feature_matrix(scene);  // scene frozen during stage 2

  std::vector<FusionTargets> targets;
  targets.reserve(views.size());
  for (const auto& v : views) targets.push_back(FusionTargets::make(v.visible, v.infrared));

  AdamState adam;
  adam.init(res.cma.parameter_count());
  EpochSampler sampler(static_cast<int>(views.size()), config.seed ^ 0x6a09e667f3bcc909ull);
  RenderOptions ropts;  // no geometry gradients: Gaussians are frozen

  for (int iter = 0; iter < config.stage2_iters; ++iter) {
    const int vi = sampler.next();
    const TrainView& view = views[vi];

    const VecX tau = cma_forward(res.cma, features);
    const RenderOutput out = render_fused(scene, view.camera, tau, ropts);
    const LossValue loss =
        stage2_loss(out.image, targets[vi], config.lambda1, config.lambda2);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train_stage2: non-finite loss at iteration " +
                               std::to_string(iter));
    res.loss_curve.push_back(loss.value);

    const SplatGradients g =
        render_fused_backward(scene, view.camera, tau, loss.d_image, ropts);
    const CmaGradients cg = cma_backward(res.cma, features, g.d_tau);

    VecX flat = res.cma.flatten();
    if (config.plain_sgd)
      flat -= config.lr.cma * cg.flatten();
    else
      adam_step(flat, cg.flatten(), adam, config.lr.cma);
    res.cma.unflatten(flat);
  }
  return res;
}

}  // namespace ivgf
