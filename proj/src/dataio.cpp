#include "ivgf/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ivgf/rasterizer.hpp"

namespace ivgf {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const DatasetEntry*> DatasetIndex::train_entries() const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (!e.is_test) out.push_back(&e);
  return out;
}

std::vector<const DatasetEntry*> DatasetIndex::test_entries() const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (e.is_test) out.push_back(&e);
  return out;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageBuffer read_image(const std::string& path, bool replicate_gray) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_image: cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw ParseError("read_image: not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_image: libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("read_image: corrupt or truncated PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int width = png_get_image_width(png, info);
  const int height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (bit_depth != 8 && bit_depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("read_image: unsupported bit depth " + std::to_string(bit_depth) + " in " +
                     path);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // little-endian host reads
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3)
    throw ParseError("read_image: unsupported channel count " + std::to_string(channels) +
                     " in " + path);

  const int out_ch = (channels == 1 && replicate_gray) ? 3 : channels;
  ImageBuffer out(width, height, out_ch);
  const Scalar maxval = bit_depth == 8 ? 255.0 : 65535.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < out_ch; ++c) {
        const int src_c = channels == 1 ? 0 : c;
        Scalar v;
        if (bit_depth == 8) {
          v = pixels[y * rowbytes + x * channels + src_c];
        } else {
          const uint16_t* row16 = reinterpret_cast<const uint16_t*>(pixels.data() + y * rowbytes);
          v = row16[x * channels + src_c];
        }
        out.at(x, y, c) = v / maxval;
      }
  return out;
}

void write_image(const ImageBuffer& img, const std::string& path, int bit_depth) {
  if (img.channels() != 1 && img.channels() != 3)
    throw InvalidParameterError("write_image: channels must be 1 or 3");
  if (bit_depth != 8 && bit_depth != 16)
    throw InvalidParameterError("write_image: bit depth must be 8 or 16");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_image: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_image: encode failed for " + path);
  }
  png_init_io(png, fp.get());
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const Scalar maxval = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<png_byte> row(static_cast<size_t>(img.width()) * img.channels() *
                            (bit_depth / 8));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const Scalar v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        const auto q = static_cast<uint32_t>(std::floor(v * maxval + 0.5));
        const size_t i = static_cast<size_t>(x) * img.channels() + c;
        if (bit_depth == 8)
          row[i] = static_cast<png_byte>(q);
        else
          reinterpret_cast<uint16_t*>(row.data())[i] = static_cast<uint16_t>(q);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

Mat4 pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("cameras.json: pose must be a 4x4 array");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4)
      throw ParseError("cameras.json: pose must be a 4x4 array");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<Scalar>();
  }
  return m;
}

json pose_to_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

DatasetIndex load_dataset(const std::string& root) {
  const fs::path rootp(root);
  const fs::path manifest = rootp / "cameras.json";
  std::ifstream f(manifest);
  if (!f) throw std::runtime_error("load_dataset: missing manifest " + manifest.string());
  json doc;
  try {
    f >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError("load_dataset: " + manifest.string() + ": " + e.what());
  }

  DatasetIndex index;
  index.root = root;
  for (const auto& v : doc.at("views")) {
    DatasetEntry e;
    e.name = v.at("name").get<std::string>();
    e.camera.fx = v.at("fx").get<Scalar>();
    e.camera.fy = v.at("fy").get<Scalar>();
    e.camera.cx = v.at("cx").get<Scalar>();
    e.camera.cy = v.at("cy").get<Scalar>();
    e.camera.width = v.at("width").get<int>();
    e.camera.height = v.at("height").get<int>();
    e.camera.world_to_camera = pose_from_json(v.at("world_to_camera"));
    if (v.contains("znear")) e.camera.znear = v.at("znear").get<Scalar>();
    if (v.contains("zfar")) e.camera.zfar = v.at("zfar").get<Scalar>();
    e.camera.validate();
    e.is_test = v.value("split", "train") == std::string("test");
    e.visible_path = (rootp / "visible" / (e.name + ".png")).string();
    e.infrared_path = (rootp / "infrared" / (e.name + ".png")).string();
    if (!fs::exists(e.visible_path))
      throw std::runtime_error("load_dataset: missing visible image for view '" + e.name + "'");
    if (!fs::exists(e.infrared_path))
      throw std::runtime_error("load_dataset: visible image '" + e.name +
                               "' has no infrared twin");
    index.entries.push_back(std::move(e));
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.name < b.name; });

  for (const auto& e : index.entries) {
    const ImageBuffer v = read_image(e.visible_path);
    if (v.width() != e.camera.width || v.height() != e.camera.height)
      throw InvalidParameterError("load_dataset: image dims of '" + e.name +
                                  "' disagree with the manifest");
    const ImageBuffer t = read_image(e.infrared_path);
    if (t.width() != e.camera.width || t.height() != e.camera.height)
      throw InvalidParameterError("load_dataset: infrared dims of '" + e.name +
                                  "' disagree with the manifest");
  }
  return index;
}

Camera ring_camera(int index, int n_views, int width, int height, Scalar radius,
                   Scalar height_offset, const Vec3& target) {
  const Scalar angle = 2.0 * M_PI * index / std::max(1, n_views);
  const Vec3 pos(radius * std::cos(angle), height_offset, radius * std::sin(angle));
  const Vec3 forward = (target - pos).normalized();
  Vec3 up_hint(0, 1, 0);
  Vec3 right = up_hint.cross(forward).normalized();
  const Vec3 up = forward.cross(right);

  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = static_cast<Scalar>(std::min(width, height));
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  Mat3 rot;
  rot.row(0) = right.transpose();
  rot.row(1) = up.transpose();
  rot.row(2) = forward.transpose();
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = rot;
  cam.world_to_camera.topRightCorner<3, 1>() = -rot * pos;
  return cam;
}

SyntheticScene generate_synthetic(const std::string& root, uint64_t seed,
                                  const SyntheticOptions& opts) {
  if (opts.n_views < 2)
    throw InvalidParameterError("generate_synthetic: need at least 2 views");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);

  const int basis = sh_basis_size(opts.sh_degree);
  SyntheticScene synth;
  synth.ground_truth.sh_degree = opts.sh_degree;
  synth.hot_center = Vec3(0.35, 0.1, 0.25);
  synth.hot_radius = 0.55;

  std::vector<Vec3> positions(opts.n_gaussians);
  for (auto& p : positions)
    p = Vec3(unit(rng) * 1.6 - 0.8, unit(rng) * 1.6 - 0.8, unit(rng) * 1.6 - 0.8);

  // Isotropic scale from the mean nearest-neighbor distance.
  Scalar nn_sum = 0;
  for (int i = 0; i < opts.n_gaussians; ++i) {
    Scalar best = std::numeric_limits<Scalar>::max();
    for (int j = 0; j < opts.n_gaussians; ++j)
      if (j != i) best = std::min(best, (positions[i] - positions[j]).norm());
    nn_sum += best;
  }
  const Scalar scale = std::max(0.02, 0.6 * nn_sum / opts.n_gaussians);

  auto set_color = [&](GaussianPrimitive& g, const Vec3& color) {
    g.sh = MatX::Zero(3, basis);
    g.sh.col(0) = (color - Vec3::Constant(0.5)) / 0.28209479177387814;
  };

  for (int i = 0; i < opts.n_gaussians; ++i) {
    const bool hot = (positions[i] - synth.hot_center).norm() < synth.hot_radius;
    if (hot) synth.hot_indices.push_back(i);

    GaussianPrimitive vis;
    vis.mean = positions[i];
    vis.rotation = Quat::Identity();
    vis.log_scale = Vec3::Constant(std::log(scale));
    vis.opacity_logit = logit(0.75);
    vis.modality = Modality::Visible;
    const Vec3 texture(0.25 + 0.7 * unit(rng), 0.25 + 0.7 * unit(rng), 0.25 + 0.7 * unit(rng));
    set_color(vis, hot ? Vec3(0.15, 0.15, 0.18) : texture);

    GaussianPrimitive ir = vis;
    ir.modality = Modality::Infrared;
    const Scalar ambient = 0.15 + 0.1 * unit(rng);
    const Scalar heat = hot ? 0.95 : ambient;
    set_color(ir, Vec3::Constant(heat));

    synth.ground_truth.visible.push_back(std::move(vis));
    synth.ground_truth.infrared.push_back(std::move(ir));
  }

  const fs::path rootp(root);
  fs::create_directories(rootp / "visible");
  fs::create_directories(rootp / "infrared");

  json views = json::array();
  for (int v = 0; v < opts.n_views; ++v) {
    const Camera cam = ring_camera(v, opts.n_views, opts.width, opts.height);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", v);
    const bool is_test = (v % 4 == 3);

    const RenderOutput vis = render_single(synth.ground_truth.visible, cam);
    const RenderOutput ir = render_single(synth.ground_truth.infrared, cam);
    write_image(vis.image, (rootp / "visible" / (std::string(name) + ".png")).string());
    ImageBuffer gray(opts.width, opts.height, 1);
    for (int y = 0; y < opts.height; ++y)
      for (int x = 0; x < opts.width; ++x) gray.at(x, y, 0) = ir.image.at(x, y, 0);
    write_image(gray, (rootp / "infrared" / (std::string(name) + ".png")).string());

    views.push_back({{"name", name},
                     {"fx", cam.fx},
                     {"fy", cam.fy},
                     {"cx", cam.cx},
                     {"cy", cam.cy},
                     {"width", cam.width},
                     {"height", cam.height},
                     {"znear", cam.znear},
                     {"zfar", cam.zfar},
                     {"world_to_camera", pose_to_json(cam.world_to_camera)},
                     {"split", is_test ? "test" : "train"}});
  }
  std::ofstream mf(rootp / "cameras.json", std::ios::trunc);
  mf << json{{"views", views}}.dump(2) << "\n";
  if (!mf) throw std::runtime_error("generate_synthetic: manifest write failed");
  return synth;
}

}  // namespace ivgf
