#pragma once

#include "ivgf/types.hpp"

namespace ivgf {

/// Pinhole camera with a rigid world-to-camera transform. The camera looks
/// down +z in its own frame; poses are row-major 4x4 with the rotation block
/// orthonormal.
struct Camera {
  Scalar fx = 0, fy = 0;
  Scalar cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat4 world_to_camera = Mat4::Identity();
  Scalar znear = 0.01, zfar = 100.0;

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  /// Camera center in world coordinates.
  Vec3 position() const { return -rotation().transpose() * translation(); }
  Vec3 to_camera(const Vec3& p_world) const { return rotation() * p_world + translation(); }

  /// Checks intrinsics, near/far ordering and rotation orthonormality
  /// (RᵀR = I within 1e-5). Throws InvalidParameterError on violation.
  void validate() const;
};

/// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)). Symmetric PSD by
/// construction; eigenvalues are exp(2·log_scale) up to permutation.
Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale);

/// Result of projecting one 3D Gaussian into a camera. `culled` is set for
/// points at or behind the near plane; the other fields are then unspecified.
struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();  // pixels
  Mat2 cov2d = Mat2::Zero();   // pixels², includes the +0.3·I low-pass dilation
  Scalar depth = 0;            // camera-space z
  bool culled = false;
};

/// Per-pixel covariance floor added to the projected 2D covariance before
/// inversion; guarantees eigenvalues >= 0.3 px².
inline constexpr Scalar kCov2dDilation = 0.3;

/// EWA projection: cov2d = J W Σ Wᵀ Jᵀ + 0.3·I with W the pose rotation and
/// J the perspective Jacobian at the mean.
ProjectedGaussian project_gaussian(const Vec3& mean, const Mat3& cov, const Camera& cam);

namespace detail {
/// Intermediates shared by the forward projection and its reverse pass.
struct ProjectionCache {
  Vec3 t;                    // camera-space mean
  Eigen::Matrix<Scalar, 2, 3> J;
};
ProjectionCache projection_cache(const Vec3& mean, const Camera& cam);
}  // namespace detail

/// Reverse-mode of project_gaussian: given upstream gradients w.r.t. mean2d
/// and cov2d (symmetric), returns gradients w.r.t. the world-space mean and
/// the 3D covariance. d_depth folds the depth output's gradient in.
void project_gaussian_backward(const Vec3& mean, const Mat3& cov, const Camera& cam,
                               const Vec2& d_mean2d, const Mat2& d_cov2d, Scalar d_depth,
                               Vec3* d_mean, Mat3* d_cov);

/// Reverse-mode of build_covariance: maps a symmetric d_cov back to the raw
/// (unnormalized) quaternion and the log-scales.
void build_covariance_backward(const Quat& rotation, const Vec3& log_scale, const Mat3& d_cov,
                               Vec4* d_quat_wxyz, Vec3* d_log_scale);

}  // namespace ivgf
