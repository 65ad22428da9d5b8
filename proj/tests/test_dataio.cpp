#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ivgf/dataio.hpp"
#include "ivgf/rasterizer.hpp"
#include "support/test_helpers.hpp"

using namespace ivgf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (size_t i = 0; i < img.size(); ++i) {
    const Scalar v = std::clamp(img.data()[i], 0.0, 1.0);
    out.data()[i] = std::floor(v * 255.0 + 0.5) / 255.0;
  }
  return out;
}

}  // namespace

TEST_CASE("png round trip error stays below half a quantization step") {
  TempDir dir("ivgf_png_roundtrip");
  const ImageBuffer img = testing::random_image(1, 17, 13);
  const auto path = (dir.path / "img.png").string();
  write_image(img, path);
  const ImageBuffer back = read_image(path);
  CHECK(ImageBuffer::max_abs_diff(img, back) <= 1.0 / 510.0 + 1e-12);

  // 16-bit is far tighter.
  write_image(img, path, 16);
  const ImageBuffer back16 = read_image(path);
  CHECK(ImageBuffer::max_abs_diff(img, back16) <= 1.0 / 131070.0 + 1e-12);
}

TEST_CASE("quantized values round trip exactly") {
  TempDir dir("ivgf_png_exact");
  const ImageBuffer img = quantize8(testing::random_image(2, 9, 9));
  const auto path = (dir.path / "img.png").string();
  write_image(img, path);
  CHECK(read_image(path) == img);
}

TEST_CASE("grayscale PNG replicates to three channels on load") {
  TempDir dir("ivgf_png_gray");
  ImageBuffer gray(6, 5, 1);
  for (size_t i = 0; i < gray.size(); ++i) gray.data()[i] = (i % 7) / 7.0;
  const auto path = (dir.path / "gray.png").string();
  write_image(gray, path);

  const ImageBuffer rgb = read_image(path);
  REQUIRE(rgb.channels() == 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      CHECK(rgb.at(x, y, 0) == rgb.at(x, y, 1));
      CHECK(rgb.at(x, y, 1) == rgb.at(x, y, 2));
    }
  const ImageBuffer raw = read_image(path, /*replicate_gray=*/false);
  CHECK(raw.channels() == 1);
  CHECK(raw.at(3, 2, 0) == rgb.at(3, 2, 0));

  // 16-bit grayscale follows the same path.
  write_image(gray, path, 16);
  const ImageBuffer rgb16 = read_image(path);
  REQUIRE(rgb16.channels() == 3);
  CHECK(std::abs(rgb16.at(3, 2, 0) - gray.at(3, 2, 0)) <= 1.0 / 131070.0 + 1e-12);
}

TEST_CASE("truncated PNG raises a parse error") {
  TempDir dir("ivgf_png_trunc");
  const auto path = (dir.path / "img.png").string();
  write_image(testing::random_image(3, 32, 32), path);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  CHECK_THROWS_AS(read_image(path), ParseError);

  const auto missing = (dir.path / "nope.png").string();
  CHECK_THROWS(read_image(missing));
}

TEST_CASE("ring cameras are valid and orbit the target") {
  for (int i = 0; i < 8; ++i) {
    const Camera cam = ring_camera(i, 8, 64, 48);
    CHECK_NOTHROW(cam.validate());
    // The target projects near the principal point and in front of the camera.
    const Vec4 h = cam.world_to_camera * Vec4(0, 0, 0, 1);
    CHECK(h.z() > 0);
    const Scalar px = cam.fx * h.x() / h.z() + cam.cx;
    const Scalar py = cam.fy * h.y() / h.z() + cam.cy;
    CHECK(px == doctest::Approx(cam.cx).epsilon(1e-6));
    CHECK(py == doctest::Approx(cam.cy).epsilon(1e-6));
  }
}

TEST_CASE("synthetic dataset is self-consistent with its ground truth") {
  TempDir dir("ivgf_synth");
  SyntheticOptions opts;
  opts.n_views = 6;
  opts.n_gaussians = 12;
  opts.width = 48;
  opts.height = 48;
  const SyntheticScene synth = generate_synthetic(dir.path.string(), 5, opts);

  const DatasetIndex index = load_dataset(dir.path.string());
  REQUIRE(index.entries.size() == 6);
  // Every fourth view (index 3) lands in the test split.
  CHECK(index.test_entries().size() == 1);
  CHECK(index.train_entries().size() == 5);

  // Re-rendering the ground truth and quantizing reproduces the files
  // bit-exactly.
  for (const auto& e : index.entries) {
    const ImageBuffer vis_file = read_image(e.visible_path);
    const RenderOutput vis = render_single(synth.ground_truth.visible, e.camera);
    CHECK(quantize8(vis.image) == vis_file);

    const ImageBuffer ir_file = read_image(e.infrared_path);
    const RenderOutput ir = render_single(synth.ground_truth.infrared, e.camera);
    for (int y = 0; y < opts.height; ++y)
      for (int x = 0; x < opts.width; ++x)
        CHECK(quantize8(ir.image).at(x, y, 0) == ir_file.at(x, y, 0));
  }
}

TEST_CASE("hot region separates the modalities by a margin") {
  TempDir dir("ivgf_synth_hot");
  SyntheticOptions opts;
  opts.n_views = 4;
  opts.n_gaussians = 30;
  opts.width = 64;
  opts.height = 64;
  const SyntheticScene synth = generate_synthetic(dir.path.string(), 11, opts);
  REQUIRE_FALSE(synth.hot_indices.empty());
  for (int i : synth.hot_indices) {
    const Vec3 ir = sh_to_color(synth.ground_truth.infrared[i].sh, Vec3::UnitZ());
    const Vec3 vis = sh_to_color(synth.ground_truth.visible[i].sh, Vec3::UnitZ());
    CHECK(ir.mean() - vis.mean() >= 0.2);
    // Shared geometry across modalities for the same index.
    CHECK(synth.ground_truth.infrared[i].mean == synth.ground_truth.visible[i].mean);
  }
}

TEST_CASE("synthetic generation is deterministic under the seed") {
  TempDir a("ivgf_synth_a"), b("ivgf_synth_b");
  SyntheticOptions opts;
  opts.n_views = 3;
  opts.n_gaussians = 8;
  opts.width = 32;
  opts.height = 32;
  const SyntheticScene sa = generate_synthetic(a.path.string(), 99, opts);
  const SyntheticScene sb = generate_synthetic(b.path.string(), 99, opts);
  REQUIRE(sa.ground_truth.total_count() == sb.ground_truth.total_count());
  for (int i = 0; i < sa.ground_truth.total_count(); ++i) {
    CHECK(sa.ground_truth.at(i).mean == sb.ground_truth.at(i).mean);
    CHECK(sa.ground_truth.at(i).sh == sb.ground_truth.at(i).sh);
  }
  for (int v = 0; v < 3; ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", v);
    const ImageBuffer ia = read_image((a.path / "visible" / (std::string(name) + ".png")).string());
    const ImageBuffer ib = read_image((b.path / "visible" / (std::string(name) + ".png")).string());
    CHECK(ia == ib);
  }
}

TEST_CASE("missing infrared twin is reported by view name") {
  TempDir dir("ivgf_missing_twin");
  SyntheticOptions opts;
  opts.n_views = 3;
  opts.n_gaussians = 5;
  opts.width = 32;
  opts.height = 32;
  generate_synthetic(dir.path.string(), 1, opts);
  fs::remove(dir.path / "infrared" / "view_001.png");
  try {
    load_dataset(dir.path.string());
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("view_001") != std::string::npos);
  }
}

TEST_CASE("manifest dimension mismatch is reported") {
  TempDir dir("ivgf_dim_mismatch");
  SyntheticOptions opts;
  opts.n_views = 2;
  opts.n_gaussians = 5;
  opts.width = 32;
  opts.height = 32;
  generate_synthetic(dir.path.string(), 2, opts);
  // Overwrite one image at the wrong size.
  write_image(testing::random_image(4, 16, 16), (dir.path / "visible" / "view_000.png").string());
  CHECK_THROWS_AS(load_dataset(dir.path.string()), InvalidParameterError);
}

TEST_CASE("corrupt manifest raises a parse error") {
  TempDir dir("ivgf_bad_manifest");
  std::ofstream f(dir.path / "cameras.json");
  f << "{not json";
  f.close();
  CHECK_THROWS_AS(load_dataset(dir.path.string()), ParseError);
}
