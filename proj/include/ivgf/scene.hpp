#pragma once

#include <string>
#include <vector>

#include "ivgf/geometry.hpp"
#include "ivgf/sh.hpp"

namespace ivgf {

enum class Modality : uint8_t { Visible = 0, Infrared = 1 };

/// One anisotropic 3D Gaussian. Scales are stored as logarithms and opacity
/// as a logit; activations happen at use sites so every field is a free
/// optimization variable.
struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 log_scale = Vec3::Zero();
  Scalar opacity_logit = 0.0;
  MatX sh;  // 3 x (L+1)², channel rows
  Modality modality = Modality::Visible;

  Scalar opacity() const { return sigmoid(opacity_logit); }
  Mat3 covariance() const { return build_covariance(rotation, log_scale); }
};

/// Two disjoint per-modality primitive sets. The concatenated view used by
/// fused rendering and the CMA is always [visible..., infrared...].
struct MultimodalScene {
  std::vector<GaussianPrimitive> visible;
  std::vector<GaussianPrimitive> infrared;
  int sh_degree = 1;

  int visible_count() const { return static_cast<int>(visible.size()); }
  int infrared_count() const { return static_cast<int>(infrared.size()); }
  int total_count() const { return visible_count() + infrared_count(); }
  int coeff_count() const { return sh_coeff_count(sh_degree); }

  /// Primitive at a global (concatenated) index.
  const GaussianPrimitive& at(int global_index) const {
    return global_index < visible_count() ? visible[global_index]
                                          : infrared[global_index - visible_count()];
  }
  GaussianPrimitive& at(int global_index) {
    return global_index < visible_count() ? visible[global_index]
                                          : infrared[global_index - visible_count()];
  }

  /// Checks modality tags match their containers and SH shapes agree.
  void validate() const;
};

/// Stable concatenated view: pointers into the scene paired with their
/// global indices, visible first then infrared.
std::vector<std::pair<const GaussianPrimitive*, int>> concat_modalities(
    const MultimodalScene& scene);

/// Stage-1 balance coefficient γ = M/(N+M) with M the infrared count.
Scalar gaussian_count_ratio(const MultimodalScene& scene);

/// Binary little-endian PLY with per-vertex double properties
/// (x,y,z, rot_w..rot_z, log_scale_0..2, opacity_logit, sh_0..sh_{d_c-1})
/// plus a modality uchar. Round trips are byte-exact.
void save_scene(const MultimodalScene& scene, const std::string& path);
MultimodalScene load_scene(const std::string& path);

}  // namespace ivgf
