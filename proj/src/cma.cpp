#include "ivgf/cma.hpp"

#include <fstream>
#include <random>

namespace ivgf {

namespace {

void check_shapes(const CmaParameters& p) {
  const int h1 = p.hidden1(), h2 = p.hidden2();
  if (p.b1.size() != h1 || p.ln1_gain.size() != h1 || p.ln1_bias.size() != h1 ||
      p.w2.rows() != h1 || p.b2.size() != h2 || p.ln2_gain.size() != h2 ||
      p.ln2_bias.size() != h2 || p.w3.size() != h2)
    throw ShapeError("cma: inconsistent parameter shapes");
}

MatX leaky(const MatX& z) {
  return z.cwiseMax(0.0) + kLeakySlope * z.cwiseMin(0.0);
}

MatX leaky_grad(const MatX& z) {
  return (z.array() > 0.0).select(MatX::Ones(z.rows(), z.cols()),
                                  MatX::Constant(z.rows(), z.cols(), kLeakySlope));
}

struct LnCache {
  MatX xhat;     // normalized pre-gain activations
  VecX inv_std;  // per row
};

MatX layer_norm(const MatX& x, const VecX& gain, const VecX& bias, LnCache* cache) {
  const auto n = static_cast<Scalar>(x.cols());
  const VecX mu = x.rowwise().mean();
  const VecX var = (x.colwise() - mu).array().square().rowwise().mean();
  const VecX inv_std = (var.array() + kLayerNormEps).sqrt().inverse();
  MatX xhat =
      ((x.colwise() - mu).array().colwise() * inv_std.array()).matrix();
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
  }
  (void)n;
  return ((xhat.array().rowwise() * gain.transpose().array()).rowwise() +
          bias.transpose().array())
      .matrix();
}

// Reverse of layer_norm w.r.t. its input; accumulates gain/bias gradients.
MatX layer_norm_backward(const MatX& dy, const VecX& gain, const LnCache& cache,
                         VecX* d_gain, VecX* d_bias) {
  const auto n = static_cast<Scalar>(dy.cols());
  *d_gain = (dy.array() * cache.xhat.array()).colwise().sum();
  *d_bias = dy.colwise().sum();
  const MatX dxhat = (dy.array().rowwise() * gain.transpose().array()).matrix();
  const VecX sum_dxhat = dxhat.rowwise().sum();
  const VecX sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
  Eigen::ArrayXXd dx = n * dxhat.array();
  dx.colwise() -= sum_dxhat.array();
  dx -= cache.xhat.array().colwise() * sum_dxhat_xhat.array();
  dx.colwise() *= (cache.inv_std.array() / n);
  return dx.matrix();
}

struct ForwardCache {
  MatX z1, l1_in, l1, z2, l2_in, l2;
  LnCache ln1, ln2;
  VecX tau;
};

ForwardCache forward_impl(const CmaParameters& p, const MatX& x) {
  check_shapes(p);
  if (x.cols() != p.input_dim())
    throw ShapeError("cma_forward: feature dimension does not match d_c");
  ForwardCache c;
  c.z1 = (x * p.w1).rowwise() + p.b1.transpose();
  c.l1_in = leaky(c.z1);
  c.l1 = layer_norm(c.l1_in, p.ln1_gain, p.ln1_bias, &c.ln1);
  c.z2 = (c.l1 * p.w2).rowwise() + p.b2.transpose();
  c.l2_in = leaky(c.z2);
  c.l2 = layer_norm(c.l2_in, p.ln2_gain, p.ln2_bias, &c.ln2);
  const VecX logits = c.l2 * p.w3;
  c.tau = logits.unaryExpr([](Scalar v) { return sigmoid(v); });
  return c;
}

}  // namespace

VecX CmaParameters::flatten() const {
  VecX v(parameter_count());
  int o = 0;
  auto put = [&](const auto& m) {
    Eigen::Map<const VecX> flat(m.data(), m.size());
    v.segment(o, m.size()) = flat;
    o += static_cast<int>(m.size());
  };
  put(w1); put(b1); put(ln1_gain); put(ln1_bias);
  put(w2); put(b2); put(ln2_gain); put(ln2_bias);
  put(w3);
  return v;
}

void CmaParameters::unflatten(const VecX& v) {
  if (v.size() != parameter_count())
    throw ShapeError("CmaParameters::unflatten: size mismatch");
  int o = 0;
  auto take = [&](auto& m) {
    Eigen::Map<VecX> flat(m.data(), m.size());
    flat = v.segment(o, m.size());
    o += static_cast<int>(m.size());
  };
  take(w1); take(b1); take(ln1_gain); take(ln1_bias);
  take(w2); take(b2); take(ln2_gain); take(ln2_bias);
  take(w3);
}

int CmaParameters::parameter_count() const {
  return static_cast<int>(w1.size() + b1.size() + ln1_gain.size() + ln1_bias.size() +
                          w2.size() + b2.size() + ln2_gain.size() + ln2_bias.size() +
                          w3.size());
}

CmaParameters cma_init(uint64_t seed, int d_c, int h1, int h2) {
  if (d_c <= 0 || h1 <= 0 || h2 <= 0)
    throw InvalidParameterError("cma_init: dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto xavier = [&](int rows, int cols) {
    const Scalar bound = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    MatX m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
  };
  CmaParameters p;
  p.w1 = xavier(d_c, h1);
  p.b1 = VecX::Zero(h1);
  p.ln1_gain = VecX::Ones(h1);
  p.ln1_bias = VecX::Zero(h1);
  p.w2 = xavier(h1, h2);
  p.b2 = VecX::Zero(h2);
  p.ln2_gain = VecX::Ones(h2);
  p.ln2_bias = VecX::Zero(h2);
  p.w3 = xavier(h2, 1).col(0);
  return p;
}

MatX scene_feature_matrix(const MultimodalScene& scene) {
  const int dc = scene.coeff_count();
  const int basis = sh_basis_size(scene.sh_degree);
  MatX x(scene.total_count(), dc);
  for (const auto& [g, idx] : concat_modalities(scene)) {
    if (g->sh.cols() != basis) throw ShapeError("scene_feature_matrix: SH shape mismatch");
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < basis; ++b) x(idx, c * basis + b) = g->sh(c, b);
  }
  return x;
}

VecX cma_forward(const CmaParameters& params, const MatX& features) {
  return forward_impl(params, features).tau;
}

VecX cma_forward(const CmaParameters& params, const MultimodalScene& scene) {
  return cma_forward(params, scene_feature_matrix(scene));
}

CmaGradients cma_backward(const CmaParameters& p, const MatX& x, const VecX& d_tau,
                          MatX* d_features) {
  const ForwardCache c = forward_impl(p, x);
  if (d_tau.size() != x.rows())
    throw ShapeError("cma_backward: d_tau length does not match row count");

  CmaGradients g;
  const VecX d_logits =
      d_tau.array() * c.tau.array() * (1.0 - c.tau.array());
  g.w3 = c.l2.transpose() * d_logits;
  const MatX d_l2 = d_logits * p.w3.transpose();

  const MatX d_l2_in =
      layer_norm_backward(d_l2, p.ln2_gain, c.ln2, &g.ln2_gain, &g.ln2_bias);
  const MatX d_z2 = d_l2_in.cwiseProduct(leaky_grad(c.z2));
  g.w2 = c.l1.transpose() * d_z2;
  g.b2 = d_z2.colwise().sum();
  const MatX d_l1 = d_z2 * p.w2.transpose();

  const MatX d_l1_in =
      layer_norm_backward(d_l1, p.ln1_gain, c.ln1, &g.ln1_gain, &g.ln1_bias);
  const MatX d_z1 = d_l1_in.cwiseProduct(leaky_grad(c.z1));
  g.w1 = x.transpose() * d_z1;
  g.b1 = d_z1.colwise().sum();
  if (d_features) *d_features = d_z1 * p.w1.transpose();
  return g;
}

namespace {
constexpr char kCmaMagic[8] = {'I', 'V', 'G', 'F', 'C', 'M', 'A', '1'};
}

void save_cma(const CmaParameters& params, const std::string& path) {
  check_shapes(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_cma: cannot open " + path);
  f.write(kCmaMagic, sizeof(kCmaMagic));
  const int32_t dims[3] = {params.input_dim(), params.hidden1(), params.hidden2()};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const VecX flat = params.flatten();
  f.write(reinterpret_cast<const char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(Scalar)));
  if (!f) throw std::runtime_error("save_cma: write failed for " + path);
}

CmaParameters load_cma(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_cma: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (f.gcount() != sizeof(magic) || std::memcmp(magic, kCmaMagic, sizeof(magic)) != 0)
    throw ParseError("load_cma: bad or unsupported checkpoint header");
  int32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (f.gcount() != sizeof(dims) || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw ParseError("load_cma: corrupt dimension header");

  CmaParameters p = cma_init(0, dims[0], dims[1], dims[2]);
  VecX flat(p.parameter_count());
  f.read(reinterpret_cast<char*>(flat.data()),
         static_cast<std::streamsize>(flat.size() * sizeof(Scalar)));
  if (f.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(Scalar)))
    throw ParseError("load_cma: truncated parameter block");
  p.unflatten(flat);
  return p;
}

}  // namespace ivgf
