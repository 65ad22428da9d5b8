#include "ivgf/sh.hpp"

namespace ivgf {

namespace {

constexpr Scalar kC0 = 0.28209479177387814;
constexpr Scalar kC1 = 0.4886025119029199;
constexpr Scalar kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr Scalar kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

void check_degree(int degree) {
  if (degree < 0 || degree > 3)
    throw InvalidParameterError("sh: degree must be in [0,3]");
}

int degree_from_basis(int basis) {
  for (int l = 0; l <= 3; ++l)
    if (sh_basis_size(l) == basis) return l;
  throw ShapeError("sh: coefficient count is not 3·(L+1)² for L in [0,3]");
}

}  // namespace

VecX sh_basis(int degree, const Vec3& dir) {
  check_degree(degree);
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  VecX b(sh_basis_size(degree));
  b[0] = kC0;
  if (degree >= 1) {
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
  }
  if (degree >= 2) {
    const Scalar xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
  }
  if (degree >= 3) {
    const Scalar xx = x * x, yy = y * y, zz = z * z;
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
  }
  return b;
}

void sh_basis_and_grad(int degree, const Vec3& dir, VecX* basis,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, 3>* dbasis) {
  check_degree(degree);
  *basis = sh_basis(degree, dir);
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  auto& g = *dbasis;
  g.setZero(sh_basis_size(degree), 3);
  if (degree >= 1) {
    g(1, 1) = -kC1;
    g(2, 2) = kC1;
    g(3, 0) = -kC1;
  }
  if (degree >= 2) {
    g.row(4) = kC2[0] * Vec3(y, x, 0).transpose();
    g.row(5) = kC2[1] * Vec3(0, z, y).transpose();
    g.row(6) = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z).transpose();
    g.row(7) = kC2[3] * Vec3(z, 0, x).transpose();
    g.row(8) = kC2[4] * Vec3(2 * x, -2 * y, 0).transpose();
  }
  if (degree >= 3) {
    const Scalar xx = x * x, yy = y * y, zz = z * z;
    g.row(9) = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0).transpose();
    g.row(10) = kC3[1] * Vec3(y * z, x * z, x * y).transpose();
    g.row(11) = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z).transpose();
    g.row(12) = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy).transpose();
    g.row(13) = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z).transpose();
    g.row(14) = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy).transpose();
    g.row(15) = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0).transpose();
  }
}

Vec3 sh_to_color(const MatX& sh, const Vec3& view_dir) {
  if (sh.rows() != 3) throw ShapeError("sh_to_color: expected 3 channel rows");
  const int degree = degree_from_basis(static_cast<int>(sh.cols()));
  const VecX b = sh_basis(degree, view_dir);
  Vec3 c = sh * b + Vec3::Constant(0.5);
  return c.cwiseMax(0.0);
}

void sh_to_color_backward(const MatX& sh, const Vec3& view_dir, const Vec3& d_color,
                          MatX* d_sh, Vec3* d_dir) {
  if (sh.rows() != 3) throw ShapeError("sh_to_color_backward: expected 3 channel rows");
  const int degree = degree_from_basis(static_cast<int>(sh.cols()));
  VecX b;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> g;
  sh_basis_and_grad(degree, view_dir, &b, &g);
  const Vec3 raw = sh * b + Vec3::Constant(0.5);
  const Vec3 gate = (raw.array() > 0.0).cast<Scalar>();
  const Vec3 dc = d_color.cwiseProduct(gate);
  if (d_sh) *d_sh = dc * b.transpose();
  if (d_dir) *d_dir = g.transpose() * (sh.transpose() * dc);
}

}  // namespace ivgf
