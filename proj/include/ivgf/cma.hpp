#pragma once

#include <string>

#include "ivgf/scene.hpp"

namespace ivgf {

/// Cross-modal adjustment MLP weights: two LeakyReLU+LayerNorm blocks and a
/// bias-free scalar head squashed by a sigmoid.
struct CmaParameters {
  MatX w1;                   // d_c x h1
  VecX b1, ln1_gain, ln1_bias;  // h1
  MatX w2;                   // h1 x h2
  VecX b2, ln2_gain, ln2_bias;  // h2
  VecX w3;                   // h2 (final projection, no bias)

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int hidden1() const { return static_cast<int>(w1.cols()); }
  int hidden2() const { return static_cast<int>(w2.cols()); }

  /// Flat parameter vector (optimizer/checkpoint order, fixed).
  VecX flatten() const;
  void unflatten(const VecX& v);
  int parameter_count() const;
};

/// Parameter-shaped gradients; same layout as CmaParameters.
using CmaGradients = CmaParameters;

inline constexpr Scalar kLeakySlope = 0.01;
inline constexpr Scalar kLayerNormEps = 1e-5;

/// Xavier-uniform weights, zero biases, identity layer norms. Deterministic
/// under the seed.
CmaParameters cma_init(uint64_t seed, int d_c, int h1, int h2);

/// Row-stacked SH features over the concatenated scene: row i holds the
/// channel-major flattened coefficients of global primitive i, (N+M) x d_c.
MatX scene_feature_matrix(const MultimodalScene& scene);

/// τ_i = sigmoid(LayerNorm(LeakyReLU(·W₂+b₂)) of LayerNorm(LeakyReLU(x_i W₁+b₁)) · W₃),
/// applied independently per row. Every entry is strictly inside (0,1).
VecX cma_forward(const CmaParameters& params, const MatX& features);
VecX cma_forward(const CmaParameters& params, const MultimodalScene& scene);

/// Exact reverse-mode gradients through sigmoid, both layer norms, LeakyReLU
/// and the affine maps. d_features (optional) receives d_c gradients per row.
CmaGradients cma_backward(const CmaParameters& params, const MatX& features, const VecX& d_tau,
                          MatX* d_features = nullptr);

/// Versioned binary checkpoint (header carries d_c, h1, h2); byte-exact
/// round trip.
void save_cma(const CmaParameters& params, const std::string& path);
CmaParameters load_cma(const std::string& path);

}  // namespace ivgf
