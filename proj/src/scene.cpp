#include "ivgf/scene.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ivgf {

void MultimodalScene::validate() const {
  const int dc = coeff_count();
  auto check = [&](const std::vector<GaussianPrimitive>& v, Modality m, const char* name) {
    for (const auto& g : v) {
      if (g.modality != m)
        throw InvalidParameterError(std::string("scene: modality tag mismatch in ") + name);
      if (3 * g.sh.cols() != dc || g.sh.rows() != 3)
        throw ShapeError("scene: SH coefficient count inconsistent with sh_degree");
    }
  };
  check(visible, Modality::Visible, "visible");
  check(infrared, Modality::Infrared, "infrared");
}

std::vector<std::pair<const GaussianPrimitive*, int>> concat_modalities(
    const MultimodalScene& scene) {
  std::vector<std::pair<const GaussianPrimitive*, int>> out;
  out.reserve(scene.total_count());
  int idx = 0;
  for (const auto& g : scene.visible) out.emplace_back(&g, idx++);
  for (const auto& g : scene.infrared) out.emplace_back(&g, idx++);
  return out;
}

Scalar gaussian_count_ratio(const MultimodalScene& scene) {
  const int n = scene.visible_count(), m = scene.infrared_count();
  if (n + m == 0)
    throw InvalidParameterError("gaussian_count_ratio: empty scene");
  return static_cast<Scalar>(m) / static_cast<Scalar>(n + m);
}

namespace {

// Flat layout per vertex, all float64 then one uchar:
// x y z | rot_w rot_x rot_y rot_z | log_scale_0..2 | opacity_logit | sh_0..sh_{dc-1} | modality
// SH flattening is channel-major: sh_{c*B + b} = sh(c, b).
constexpr int kFixedDoubles = 11;

void flatten(const GaussianPrimitive& g, std::vector<double>& buf) {
  buf.clear();
  buf.insert(buf.end(), {g.mean.x(), g.mean.y(), g.mean.z(), g.rotation.w(), g.rotation.x(),
                         g.rotation.y(), g.rotation.z(), g.log_scale.x(), g.log_scale.y(),
                         g.log_scale.z(), g.opacity_logit});
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < g.sh.cols(); ++b) buf.push_back(g.sh(c, b));
}

}  // namespace

void save_scene(const MultimodalScene& scene, const std::string& path) {
  scene.validate();
  const int dc = scene.coeff_count();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_scene: cannot open " + path);

  std::ostringstream hdr;
  hdr << "ply\nformat binary_little_endian 1.0\n";
  hdr << "comment ivgf multimodal gaussian scene\n";
  hdr << "comment sh_degree " << scene.sh_degree << "\n";
  hdr << "element vertex " << scene.total_count() << "\n";
  const char* fixed[kFixedDoubles] = {"x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z",
                                      "log_scale_0", "log_scale_1", "log_scale_2",
                                      "opacity_logit"};
  for (const char* p : fixed) hdr << "property double " << p << "\n";
  for (int i = 0; i < dc; ++i) hdr << "property double sh_" << i << "\n";
  hdr << "property uchar modality\nend_header\n";
  f << hdr.str();

  std::vector<double> buf;
  for (const auto& [g, idx] : concat_modalities(scene)) {
    (void)idx;
    flatten(*g, buf);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    const uint8_t m = static_cast<uint8_t>(g->modality);
    f.write(reinterpret_cast<const char*>(&m), 1);
  }
  if (!f) throw std::runtime_error("save_scene: write failed for " + path);
}

MultimodalScene load_scene(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_scene: cannot open " + path);

  std::string line;
  long vertex_count = -1;
  int sh_degree = -1;
  std::vector<std::string> props;
  bool binary_le = false;
  if (!std::getline(f, line) || line != "ply")
    throw ParseError("load_scene: missing 'ply' magic at offset 0");
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "comment") {
      std::string key;
      ls >> key;
      if (key == "sh_degree") ls >> sh_degree;
    } else if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex") throw ParseError("load_scene: unexpected element '" + name + "'");
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw ParseError("load_scene: expected binary_little_endian format");
  if (vertex_count < 0) throw ParseError("load_scene: missing vertex element");
  if (sh_degree < 0 || sh_degree > 3)
    throw ParseError("load_scene: missing or invalid sh_degree comment");

  const int dc = sh_coeff_count(sh_degree);
  const int basis = sh_basis_size(sh_degree);
  const size_t expected_props = static_cast<size_t>(kFixedDoubles + dc + 1);
  if (props.size() != expected_props)
    throw ShapeError("load_scene: property count does not match sh_degree (d_c mismatch)");

  MultimodalScene scene;
  scene.sh_degree = sh_degree;
  const size_t record = (kFixedDoubles + dc) * sizeof(double) + 1;
  std::vector<char> raw(record);
  for (long v = 0; v < vertex_count; ++v) {
    const auto offset = f.tellg();
    f.read(raw.data(), static_cast<std::streamsize>(record));
    if (f.gcount() != static_cast<std::streamsize>(record))
      throw ParseError("load_scene: truncated record " + std::to_string(v) + " at offset " +
                       std::to_string(static_cast<long>(offset)));
    const double* d = reinterpret_cast<const double*>(raw.data());
    GaussianPrimitive g;
    g.mean = Vec3(d[0], d[1], d[2]);
    g.rotation = Quat(d[3], d[4], d[5], d[6]);
    g.log_scale = Vec3(d[7], d[8], d[9]);
    g.opacity_logit = d[10];
    g.sh.resize(3, basis);
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < basis; ++b) g.sh(c, b) = d[kFixedDoubles + c * basis + b];
    const uint8_t m = static_cast<uint8_t>(raw[record - 1]);
    if (m > 1)
      throw ParseError("load_scene: unknown modality value " + std::to_string(m) +
                       " in record " + std::to_string(v));
    g.modality = static_cast<Modality>(m);
    (g.modality == Modality::Visible ? scene.visible : scene.infrared).push_back(std::move(g));
  }
  return scene;
}

}  // namespace ivgf
