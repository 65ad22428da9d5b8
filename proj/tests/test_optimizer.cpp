#include <doctest.h>

#include <random>

#include "ivgf/optimizer.hpp"
#include "support/test_helpers.hpp"

using namespace ivgf;

TEST_CASE("adam_step leaves parameters unchanged for zero gradients") {
  VecX p = VecX::LinSpaced(6, -1.0, 1.0);
  const VecX before = p;
  AdamState st;
  st.init(6);
  adam_step(p, VecX::Zero(6), st, 1e-2);
  CHECK(p == before);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step moves by -lr times the gradient sign") {
  VecX p = VecX::Zero(4);
  VecX g(4);
  g << 3.0, -0.5, 1e-8, 0.0;
  AdamState st;
  st.init(4);
  const Scalar lr = 1e-2;
  adam_step(p, g, st, lr);
  // Bias-corrected m̂/√v̂ = g/|g| on step one (ε = 1e-15 is negligible).
  CHECK(p[0] == doctest::Approx(-lr).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(lr).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(p[3] == 0.0);
}

TEST_CASE("adam matches a scalar reference implementation") {
  VecX p = VecX::Constant(1, 0.7);
  AdamState st;
  st.init(1);
  Scalar m = 0, v = 0, ref = 0.7;
  const Scalar lr = 5e-3, b1 = 0.9, b2 = 0.999, eps = 1e-15;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  for (int t = 1; t <= 50; ++t) {
    const Scalar g = u(rng);
    adam_step(p, VecX::Constant(1, g), st, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const Scalar mh = m / (1 - std::pow(b1, t));
    const Scalar vh = v / (1 - std::pow(b2, t));
    ref -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(p[0] == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("adam state remap keeps survivor moments and zeroes fresh rows") {
  AdamState st;
  st.init(6);  // two primitives, stride 3
  st.m = VecX::LinSpaced(6, 1.0, 6.0);
  st.v = VecX::LinSpaced(6, 10.0, 60.0);
  st.step = 17;
  st.remap({1, -1, 0}, 3);
  REQUIRE(st.m.size() == 9);
  CHECK(st.m.segment(0, 3) == VecX::LinSpaced(6, 1.0, 6.0).segment(3, 3));
  CHECK(st.m.segment(3, 3) == VecX::Zero(3));
  CHECK(st.m.segment(6, 3) == VecX::LinSpaced(6, 1.0, 6.0).segment(0, 3));
  CHECK(st.v.segment(3, 3) == VecX::Zero(3));
  CHECK(st.step == 17);
}

namespace {

std::vector<GaussianPrimitive> uniform_prims(int n, Scalar opacity, Scalar scale) {
  std::vector<GaussianPrimitive> out;
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive g;
    g.mean = Vec3(0.1 * i, 0, 2.0);
    g.log_scale = Vec3::Constant(std::log(scale));
    g.opacity_logit = logit(opacity);
    g.sh = MatX::Zero(3, 4);
    g.modality = Modality::Infrared;
    out.push_back(g);
  }
  return out;
}

}  // namespace

TEST_CASE("densify clones small high-gradient primitives") {
  DensifyConfig cfg;
  cfg.grad_threshold = 0.5;
  auto prims = uniform_prims(3, 0.8, 0.001);  // well below percent_dense·extent
  DensifyStats stats;
  stats.init(3);
  stats.grad_norm_sum[1] = 10.0;  // mean grad 1.0 > threshold
  stats.count.setOnes();
  std::mt19937_64 rng(1);
  stats.count[1] = 10.0;
  const DensifyResult r = densify_and_prune(prims, stats, cfg, 2.0, rng);
  CHECK(r.cloned == 1);
  CHECK(r.split == 0);
  CHECK(r.pruned == 0);
  REQUIRE(prims.size() == 4);
  // Exactly one fresh row (-1); it sits right after its parent, primitive 1,
  // keeps the modality, and carries only a small positional jitter.
  int fresh = -1;
  for (size_t i = 0; i < prims.size(); ++i)
    if (r.new_from_old[i] == -1) {
      CHECK(fresh == -1);
      fresh = static_cast<int>(i);
    }
  REQUIRE(fresh >= 1);
  CHECK(r.new_from_old[fresh - 1] == 1);
  CHECK(prims[fresh].modality == Modality::Infrared);
  CHECK((prims[fresh].mean - prims[fresh - 1].mean).norm() < 0.01);
  CHECK(prims[fresh].log_scale == prims[fresh - 1].log_scale);
}

TEST_CASE("densify splits large high-gradient primitives and shrinks scale") {
  DensifyConfig cfg;
  cfg.grad_threshold = 0.5;
  auto prims = uniform_prims(2, 0.8, 0.5);  // 0.5 > percent_dense·extent = 0.02
  const Vec3 parent_ls = prims[0].log_scale;
  DensifyStats stats;
  stats.init(2);
  stats.grad_norm_sum[0] = 5.0;
  stats.count[0] = 5.0;
  stats.count[1] = 1.0;
  std::mt19937_64 rng(2);
  const DensifyResult r = densify_and_prune(prims, stats, cfg, 2.0, rng);
  CHECK(r.split == 1);
  CHECK(r.cloned == 0);
  // A split removes the parent and adds two fresh children with shrunk scale.
  REQUIRE(prims.size() == 3);
  int children = 0;
  for (size_t i = 0; i < prims.size(); ++i)
    if (r.new_from_old[i] == -1) {
      ++children;
      CHECK(prims[i].log_scale[0] ==
            doctest::Approx(parent_ls[0] - std::log(cfg.split_scale_shrink)).epsilon(1e-12));
    }
  CHECK(children == 2);
}

TEST_CASE("densify prunes low-opacity primitives") {
  DensifyConfig cfg;
  auto prims = uniform_prims(3, 0.8, 0.001);
  prims[1].opacity_logit = logit(0.001);  // below prune_alpha
  DensifyStats stats;
  stats.init(3);
  stats.count.setOnes();
  std::mt19937_64 rng(3);
  const DensifyResult r = densify_and_prune(prims, stats, cfg, 2.0, rng);
  CHECK(r.pruned == 1);
  REQUIRE(prims.size() == 2);
  CHECK(r.new_from_old == std::vector<int>{0, 2});
}

namespace {

/// Tiny two-view synthetic dataset rendered from a known scene, kept fully
/// in memory.
std::vector<TrainView> toy_views(const MultimodalScene& gt, int n_views) {
  std::vector<TrainView> views;
  for (int i = 0; i < n_views; ++i) {
    TrainView v;
    v.camera = testing::test_camera(32, 32, 40.0);
    v.camera.cx += 0.3 * i;  // slight viewpoint variation
    v.name = "view" + std::to_string(i);
    v.visible = render_single(gt.visible, v.camera).image;
    v.infrared = render_single(gt.infrared, v.camera).image;
    views.push_back(v);
  }
  return views;
}

}  // namespace

TEST_CASE("stage-1 training reduces the reconstruction loss") {
  const MultimodalScene gt = testing::random_scene(41, 6, 6);
  const auto views = toy_views(gt, 3);
  TrainConfig cfg;
  cfg.stage1_iters = 40;
  cfg.init_gaussians = 12;
  cfg.densify_enabled = false;
  cfg.seed = 7;
  const Stage1Result r = train_stage1(views, cfg);
  REQUIRE(r.loss_curve.size() == 40);
  // Average the loss over the first and last few iterations to smooth the
  // per-view sampling noise.
  Scalar head = 0, tail = 0;
  for (int i = 0; i < 6; ++i) {
    head += r.loss_curve[i];
    tail += r.loss_curve[r.loss_curve.size() - 1 - i];
  }
  CHECK(tail < head);
  CHECK(r.scene.visible_count() > 0);
  CHECK(r.scene.infrared_count() > 0);
}

TEST_CASE("stage-1 run is deterministic under a fixed seed") {
  const MultimodalScene gt = testing::random_scene(43, 5, 5);
  const auto views = toy_views(gt, 2);
  TrainConfig cfg;
  cfg.stage1_iters = 10;
  cfg.init_gaussians = 8;
  cfg.densify_enabled = false;
  cfg.seed = 11;
  const Stage1Result a = train_stage1(views, cfg);
  const Stage1Result b = train_stage1(views, cfg);
  REQUIRE(a.loss_curve.size() == b.loss_curve.size());
  for (size_t i = 0; i < a.loss_curve.size(); ++i) CHECK(a.loss_curve[i] == b.loss_curve[i]);
  for (int i = 0; i < a.scene.total_count(); ++i)
    CHECK(a.scene.at(i).mean == b.scene.at(i).mean);
}

TEST_CASE("stage-1 balance weight factorizes into per-modality problems") {
  // The two modalities share no parameters, so with plain gradient-descent
  // steps the jointly-optimized γ-weighted objective must produce the same
  // visible scene as optimizing the visible term alone (weight one, forced
  // via gamma_override) with every learning rate pre-scaled by γ — and
  // symmetrically for infrared with 1−γ.
  const MultimodalScene gt = testing::random_scene(47, 8, 8);
  const auto views = toy_views(gt, 2);

  TrainConfig joint;
  joint.stage1_iters = 6;
  joint.init_gaussians = 6;  // equal counts per modality ⇒ γ = 0.5
  joint.densify_enabled = false;
  joint.plain_sgd = true;
  joint.seed = 13;
  const Stage1Result j = train_stage1(views, joint);
  const Scalar gamma = 0.5;

  auto scale_lr = [&](TrainConfig cfg, Scalar w) {
    cfg.lr.position *= w;
    cfg.lr.position_final *= w;
    cfg.lr.sh *= w;
    cfg.lr.opacity *= w;
    cfg.lr.scale *= w;
    cfg.lr.rotation *= w;
    return cfg;
  };

  TrainConfig vis_only = scale_lr(joint, gamma);
  vis_only.gamma_override = 1.0;  // visible term at weight one
  const Stage1Result v = train_stage1(views, vis_only);
  for (int i = 0; i < j.scene.visible_count(); ++i) {
    CHECK((j.scene.visible[i].mean - v.scene.visible[i].mean).norm() <= 1e-12);
    CHECK(j.scene.visible[i].opacity_logit ==
          doctest::Approx(v.scene.visible[i].opacity_logit).epsilon(1e-12));
    CHECK((j.scene.visible[i].sh - v.scene.visible[i].sh).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TrainConfig ir_only = scale_lr(joint, 1.0 - gamma);
  ir_only.gamma_override = 0.0;  // infrared term at weight one
  const Stage1Result t = train_stage1(views, ir_only);
  for (int i = 0; i < j.scene.infrared_count(); ++i) {
    CHECK((j.scene.infrared[i].mean - t.scene.infrared[i].mean).norm() <= 1e-12);
    CHECK((j.scene.infrared[i].sh - t.scene.infrared[i].sh).cwiseAbs().maxCoeff() <= 1e-12);
  }

  // Final-loss agreement between the joint value and the recombined
  // per-modality values, evaluated on the first view.
  const RenderOutput jv = render_single(j.scene.visible, views[0].camera);
  const RenderOutput vv = render_single(v.scene.visible, views[0].camera);
  CHECK(ImageBuffer::max_abs_diff(jv.image, vv.image) <= 1e-3);
}

TEST_CASE("stage-2 training reduces the fusion loss and freezes the scene") {
  const MultimodalScene gt = testing::random_scene(53, 8, 8);
  const auto views = toy_views(gt, 2);
  TrainConfig cfg;
  cfg.stage2_iters = 30;
  cfg.cma_hidden1 = 16;
  cfg.cma_hidden2 = 16;
  cfg.seed = 17;
  const MultimodalScene frozen = gt;  // copy to diff afterwards
  const Stage2Result r = train_stage2(gt, views, cfg);
  REQUIRE(r.loss_curve.size() == 30);
  Scalar head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += r.loss_curve[i];
    tail += r.loss_curve[r.loss_curve.size() - 1 - i];
  }
  CHECK(tail < head);
  // Scene parameters are untouched.
  for (int i = 0; i < gt.total_count(); ++i) {
    CHECK(gt.at(i).mean == frozen.at(i).mean);
    CHECK(gt.at(i).opacity_logit == frozen.at(i).opacity_logit);
    CHECK(gt.at(i).sh == frozen.at(i).sh);
  }
  CHECK(r.cma.input_dim() == gt.coeff_count());
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda1 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
  TrainConfig bad;
  bad.stage1_iters = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidParameterError);
}
