#pragma once

#include <random>
#include <string>
#include <vector>

#include "ivgf/cma.hpp"
#include "ivgf/dataio.hpp"
#include "ivgf/losses.hpp"
#include "ivgf/rasterizer.hpp"
#include "ivgf/scene.hpp"

namespace ivgf {

/// First/second moment accumulators for one flat parameter group.
struct AdamState {
  VecX m, v;
  long step = 0;

  void init(int n) {
    m = VecX::Zero(n);
    v = VecX::Zero(n);
    step = 0;
  }
  /// Rebuilds moments after densification: kept[i] is the old row feeding
  /// new row i (or -1 for a fresh primitive), with `stride` values per row.
  void remap(const std::vector<int>& kept, int stride);
};

/// Standard Adam with bias correction; β = (0.9, 0.999), ε = 1e-15.
void adam_step(Eigen::Ref<VecX> params, const VecX& grads, AdamState& state, Scalar lr,
               Scalar beta1 = 0.9, Scalar beta2 = 0.999, Scalar eps = 1e-15);

struct LearningRates {
  Scalar position = 1.6e-4;        // scaled by scene extent, exponential decay
  Scalar position_final = 1.6e-6;
  Scalar sh = 2.5e-3;
  Scalar opacity = 5e-2;
  Scalar scale = 5e-3;
  Scalar rotation = 1e-3;
  Scalar cma = 1e-3;
};

struct DensifyConfig {
  int interval = 100;
  int start_iter = 300;
  int stop_iter = 2000;
  Scalar grad_threshold = 1e-4;   // mean per-step 2D positional gradient norm (pixels)
  Scalar percent_dense = 0.01;    // scale fraction of extent separating clone vs split
  Scalar prune_alpha = 0.005;
  Scalar split_scale_shrink = 1.6;
};

struct TrainConfig {
  int stage1_iters = 15000;
  int stage2_iters = 15000;
  Scalar lambda1 = 1.0;
  Scalar lambda2 = 2.0;
  LearningRates lr;
  DensifyConfig densify;
  uint64_t seed = 0;
  int init_gaussians = 400;    // per modality
  Scalar scene_extent = 2.0;   // world bound used for init and densify scaling
  int cma_hidden1 = 64;
  int cma_hidden2 = 64;
  int sh_degree = 1;
  bool plain_sgd = false;      // gradient-descent steps instead of Adam (oracle tests)
  bool densify_enabled = true;
  Scalar gamma_override = -1.0;  // fix the stage-1 balance weight; <0 = from counts

  void validate() const;
};

/// Per-primitive positional-gradient statistics accumulated between
/// densification rounds.
struct DensifyStats {
  VecX grad_norm_sum;  // Σ‖d_mean2d‖ per primitive
  VecX count;          // steps the primitive was visible
  void init(int n) {
    grad_norm_sum = VecX::Zero(n);
    count = VecX::Zero(n);
  }
};

/// Index map from a densify/prune round: new_from_old[i] is the old index of
/// surviving primitive i, or -1 for freshly created clones/split children
/// (whose optimizer moments restart at zero).
struct DensifyResult {
  std::vector<int> new_from_old;
  int cloned = 0, split = 0, pruned = 0;
};

/// Adaptive density control over one modality list: clone small
/// high-gradient primitives, split large ones (scale/1.6, 2 samples), prune
/// low-opacity ones. Modality tags are preserved.
DensifyResult densify_and_prune(std::vector<GaussianPrimitive>& prims, const DensifyStats& stats,
                                const DensifyConfig& cfg, Scalar scene_extent,
                                std::mt19937_64& rng);

/// Posed target pair kept in memory during training.
struct TrainView {
  Camera camera;
  ImageBuffer visible;
  ImageBuffer infrared;
  std::string name;
};

std::vector<TrainView> load_train_views(const DatasetIndex& dataset);

/// Random point-cloud initialization for one modality: uniform positions in
/// the scene bounds, isotropic scale from the mean nearest-neighbor
/// distance, α = 0.1, SH degree-0 set to the mean target color.
std::vector<GaussianPrimitive> initialize_modality(const std::vector<TrainView>& views,
                                                   Modality modality, int count, int sh_degree,
                                                   Scalar extent, std::mt19937_64& rng);

struct Stage1Result {
  MultimodalScene scene;
  std::vector<Scalar> loss_curve;          // per iteration
  std::vector<Scalar> psnr_visible;        // training-view PSNR per iteration
  std::vector<Scalar> psnr_infrared;
};

/// Stage-1 per-modality reconstruction: Adam on the γ-balanced L1+(1−SSIM)
/// objective with adaptive density control.
Stage1Result train_stage1(const DatasetIndex& dataset, const TrainConfig& config);
Stage1Result train_stage1(const std::vector<TrainView>& views, const TrainConfig& config);

struct Stage2Result {
  CmaParameters cma;
  std::vector<Scalar> loss_curve;
};

/// Stage-2 CMA optimization against the fusion loss; Gaussian parameters
/// are frozen throughout.
Stage2Result train_stage2(const MultimodalScene& scene, const DatasetIndex& dataset,
                          const TrainConfig& config);
Stage2Result train_stage2(const MultimodalScene& scene, const std::vector<TrainView>& views,
                          const TrainConfig& config);

}  // namespace ivgf
