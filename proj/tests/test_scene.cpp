#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ivgf/scene.hpp"
#include "support/test_helpers.hpp"

using namespace ivgf;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("concat ordering is visible first, infrared second") {
  MultimodalScene s = testing::random_scene(1, 3, 2);
  const auto cat = concat_modalities(s);
  REQUIRE(cat.size() == 5);
  for (int i = 0; i < 3; ++i) {
    CHECK(cat[i].second == i);
    CHECK(cat[i].first->modality == Modality::Visible);
  }
  for (int i = 3; i < 5; ++i) {
    CHECK(cat[i].second == i);
    CHECK(cat[i].first->modality == Modality::Infrared);
  }
}

TEST_CASE("concat with an empty modality") {
  MultimodalScene s = testing::random_scene(2, 0, 1);
  s.visible.clear();
  s.infrared = testing::random_scene(2, 0, 5).infrared;
  const auto cat = concat_modalities(s);
  REQUIRE(cat.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(cat[i].second == i);
    CHECK(cat[i].first->modality == Modality::Infrared);
  }
}

TEST_CASE("gaussian_count_ratio") {
  MultimodalScene s = testing::random_scene(3, 300, 100);
  CHECK(gaussian_count_ratio(s) == doctest::Approx(0.25));
  MultimodalScene eq = testing::random_scene(4, 10, 10);
  CHECK(gaussian_count_ratio(eq) == doctest::Approx(0.5));
  MultimodalScene ir_only = testing::random_scene(5, 0, 7);
  CHECK(gaussian_count_ratio(ir_only) == doctest::Approx(1.0));
  MultimodalScene empty;
  CHECK_THROWS_AS(gaussian_count_ratio(empty), InvalidParameterError);
}

TEST_CASE("scene PLY round trip is exact") {
  const MultimodalScene s = testing::random_scene(17, 60, 40, 2);
  const auto path = temp_file("ivgf_scene_roundtrip.ply");
  save_scene(s, path.string());
  const MultimodalScene r = load_scene(path.string());

  REQUIRE(r.visible_count() == s.visible_count());
  REQUIRE(r.infrared_count() == s.infrared_count());
  CHECK(r.sh_degree == s.sh_degree);
  for (int i = 0; i < s.total_count(); ++i) {
    const auto& a = s.at(i);
    const auto& b = r.at(i);
    CHECK(a.mean == b.mean);
    CHECK(a.rotation.coeffs() == b.rotation.coeffs());
    CHECK(a.log_scale == b.log_scale);
    CHECK(a.opacity_logit == b.opacity_logit);
    CHECK(a.sh == b.sh);
    CHECK(a.modality == b.modality);
  }
  fs::remove(path);
}

TEST_CASE("truncated scene file fails to parse") {
  const MultimodalScene s = testing::random_scene(19, 10, 10);
  const auto path = temp_file("ivgf_scene_trunc.ply");
  save_scene(s, path.string());
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 37);  // cut mid-record
  CHECK_THROWS_AS(load_scene(path.string()), ParseError);
  fs::remove(path);
}

TEST_CASE("unknown modality byte is rejected") {
  const MultimodalScene s = testing::random_scene(21, 1, 0);
  const auto path = temp_file("ivgf_scene_badmod.ply");
  save_scene(s, path.string());
  // The modality byte is the last byte of the (single-record) file.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-1, std::ios::end);
  const char bad = 7;
  f.write(&bad, 1);
  f.close();
  CHECK_THROWS_AS(load_scene(path.string()), ParseError);
  fs::remove(path);
}

TEST_CASE("activated opacity stays inside (0,1)") {
  for (Scalar logit_val : {-50.0, -3.0, 0.0, 3.0, 50.0}) {
    GaussianPrimitive g;
    g.opacity_logit = logit_val;
    CHECK(g.opacity() > 0.0);
    CHECK(g.opacity() < 1.0);
  }
}

TEST_CASE("scene validation catches tag mismatches") {
  MultimodalScene s = testing::random_scene(23, 2, 2);
  CHECK_NOTHROW(s.validate());
  s.visible[0].modality = Modality::Infrared;
  CHECK_THROWS_AS(s.validate(), InvalidParameterError);
}
