#pragma once

#include "ivgf/types.hpp"

namespace ivgf {

/// Number of real SH basis functions for a given degree: (L+1)².
inline int sh_basis_size(int degree) { return (degree + 1) * (degree + 1); }

/// Coefficient count per primitive (3 channels): d_c = 3·(L+1)².
inline int sh_coeff_count(int degree) { return 3 * sh_basis_size(degree); }

/// Real spherical-harmonics basis at a unit direction, degrees 0..3.
VecX sh_basis(int degree, const Vec3& dir);

/// Basis plus its Jacobian w.r.t. the (unnormalized-polynomial) direction.
/// Callers projecting through normalize(v) must apply (I - d dᵀ)/‖v‖.
void sh_basis_and_grad(int degree, const Vec3& dir, VecX* basis,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, 3>* dbasis);

/// View-dependent color: per channel, max(0, 0.5 + Σ_b basis_b · sh(c,b)).
/// `sh` is 3 x (L+1)²; degree is inferred from the column count.
Vec3 sh_to_color(const MatX& sh, const Vec3& view_dir);

/// Reverse-mode of sh_to_color. d_sh gets the per-coefficient gradient and
/// d_dir the gradient w.r.t. the unit view direction; channels clamped to
/// zero in the forward pass contribute nothing.
void sh_to_color_backward(const MatX& sh, const Vec3& view_dir, const Vec3& d_color,
                          MatX* d_sh, Vec3* d_dir);

}  // namespace ivgf
