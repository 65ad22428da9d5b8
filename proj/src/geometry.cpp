#include "ivgf/geometry.hpp"

#include <cmath>

namespace ivgf {

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw InvalidParameterError("Camera: width*height must be positive");
  if (!(fx > 0) || !(fy > 0))
    throw InvalidParameterError("Camera: focal lengths must be positive");
  if (!(znear > 0) || !(znear < zfar))
    throw InvalidParameterError("Camera: require 0 < znear < zfar");
  if (!world_to_camera.allFinite())
    throw InvalidParameterError("Camera: non-finite pose");
  const Mat3 R = rotation();
  if (((R.transpose() * R) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-5)
    throw InvalidParameterError("Camera: rotation block is not orthonormal");
}

Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale) {
  if (!log_scale.allFinite() || !rotation.coeffs().allFinite())
    throw InvalidParameterError("build_covariance: non-finite input");
  if (rotation.norm() == 0.0)
    throw InvalidParameterError("build_covariance: zero quaternion");
  const Mat3 R = rotation.normalized().toRotationMatrix();
  const Vec3 s = log_scale.array().exp();
  const Mat3 M = R * s.asDiagonal();
  return M * M.transpose();
}

ProjectedGaussian project_gaussian(const Vec3& mean, const Mat3& cov, const Camera& cam) {
  ProjectedGaussian out;
  const Vec3 t = cam.to_camera(mean);
  if (t.z() <= cam.znear) {
    out.culled = true;
    return out;
  }
  const Scalar iz = 1.0 / t.z();
  out.depth = t.z();
  out.mean2d = Vec2(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);

  Eigen::Matrix<Scalar, 2, 3> J;
  J << cam.fx * iz, 0, -cam.fx * t.x() * iz * iz,
       0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  const Eigen::Matrix<Scalar, 2, 3> T2 = J * cam.rotation();
  out.cov2d = T2 * cov * T2.transpose() + kCov2dDilation * Mat2::Identity();
  return out;
}

namespace detail {
ProjectionCache projection_cache(const Vec3& mean, const Camera& cam) {
  ProjectionCache c;
  c.t = cam.to_camera(mean);
  const Scalar iz = 1.0 / c.t.z();
  c.J << cam.fx * iz, 0, -cam.fx * c.t.x() * iz * iz,
         0, cam.fy * iz, -cam.fy * c.t.y() * iz * iz;
  return c;
}
}  // namespace detail

void project_gaussian_backward(const Vec3& mean, const Mat3& cov, const Camera& cam,
                               const Vec2& d_mean2d, const Mat2& d_cov2d, Scalar d_depth,
                               Vec3* d_mean, Mat3* d_cov) {
  const auto cache = detail::projection_cache(mean, cam);
  const Vec3& t = cache.t;
  const Mat3 W = cam.rotation();
  const Eigen::Matrix<Scalar, 2, 3> T2 = cache.J * W;
  const Scalar iz = 1.0 / t.z();
  const Scalar iz2 = iz * iz;
  const Scalar iz3 = iz2 * iz;

  // cov2d = T2 Σ T2ᵀ + const; symmetric upstream gradient assumed.
  if (d_cov) *d_cov = T2.transpose() * d_cov2d * T2;
  const Eigen::Matrix<Scalar, 2, 3> d_T2 = 2.0 * d_cov2d * T2 * cov;
  const Eigen::Matrix<Scalar, 2, 3> d_J = d_T2 * W.transpose();

  Vec3 d_t = cache.J.transpose() * d_mean2d;  // dmean2d/dt is J itself
  d_t.x() += d_J(0, 2) * (-cam.fx * iz2);
  d_t.y() += d_J(1, 2) * (-cam.fy * iz2);
  d_t.z() += d_J(0, 0) * (-cam.fx * iz2) + d_J(1, 1) * (-cam.fy * iz2) +
             d_J(0, 2) * (2.0 * cam.fx * t.x() * iz3) +
             d_J(1, 2) * (2.0 * cam.fy * t.y() * iz3);
  d_t.z() += d_depth;
  if (d_mean) *d_mean = W.transpose() * d_t;
}

namespace {

// dR/dq for a unit quaternion q = (w,x,y,z); returns the contraction
// sum_ij d_R(i,j) * dR(i,j)/dq_k.
Vec4 contract_rotation_gradient(const Quat& q, const Mat3& d_R) {
  const Scalar w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 dRdw, dRdx, dRdy, dRdz;
  dRdw << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  dRdx << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  dRdy << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  dRdz << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return Vec4(d_R.cwiseProduct(dRdw).sum(), d_R.cwiseProduct(dRdx).sum(),
              d_R.cwiseProduct(dRdy).sum(), d_R.cwiseProduct(dRdz).sum());
}

}  // namespace

void build_covariance_backward(const Quat& rotation, const Vec3& log_scale, const Mat3& d_cov,
                               Vec4* d_quat_wxyz, Vec3* d_log_scale) {
  const Scalar qn = rotation.norm();
  const Quat qu = rotation.normalized();
  const Mat3 R = qu.toRotationMatrix();
  const Vec3 s2 = (2.0 * log_scale).array().exp();  // diag of D = S Sᵀ

  // Σ = R D Rᵀ.  dD = Rᵀ G R (diagonal part), dR = 2 G R D for symmetric G.
  const Mat3 G = 0.5 * (d_cov + d_cov.transpose());
  const Vec3 dD = (R.transpose() * G * R).diagonal();
  if (d_log_scale) *d_log_scale = 2.0 * dD.cwiseProduct(s2);

  if (d_quat_wxyz) {
    const Mat3 d_R = 2.0 * G * R * s2.asDiagonal();
    const Vec4 d_unit = contract_rotation_gradient(qu, d_R);
    // Through normalization: q_unit = q/‖q‖, J = (I - q_unit q_unitᵀ)/‖q‖.
    const Vec4 u(qu.w(), qu.x(), qu.y(), qu.z());
    *d_quat_wxyz = (d_unit - u * u.dot(d_unit)) / qn;
  }
}

}  // namespace ivgf
