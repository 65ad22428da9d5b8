#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace ivgf {

using Scalar = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

/// Thrown when an operation receives inputs whose shapes disagree
/// (SH coefficient counts, image dimensions, tau vector length, ...).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown on non-finite or otherwise invalid numeric parameters.
struct InvalidParameterError : std::runtime_error {
  explicit InvalidParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown when a file cannot be parsed (PLY, PNG, manifest, checkpoint).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Logistic function clamped into the open unit interval so downstream
/// open-range contracts (opacity, τ) hold even for saturating inputs.
inline Scalar sigmoid(Scalar x) {
  const Scalar s = 1.0 / (1.0 + std::exp(-x));
  return std::clamp(s, std::numeric_limits<Scalar>::min(), std::nextafter(Scalar(1), Scalar(0)));
}
inline Scalar logit(Scalar p) { return std::log(p / (1.0 - p)); }

}  // namespace ivgf
