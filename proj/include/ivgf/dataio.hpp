#pragma once

#include <string>
#include <vector>

#include "ivgf/image.hpp"
#include "ivgf/scene.hpp"

namespace ivgf {

/// One posed image pair of the dataset.
struct DatasetEntry {
  std::string name;  // basename shared by both modality images
  Camera camera;
  std::string visible_path;
  std::string infrared_path;
  bool is_test = false;
};

struct DatasetIndex {
  std::string root;
  std::vector<DatasetEntry> entries;  // deterministic basename order

  std::vector<const DatasetEntry*> train_entries() const;
  std::vector<const DatasetEntry*> test_entries() const;
};

/// Decodes an 8- or 16-bit grayscale/RGB PNG to [0,1] floats (value/maxval).
/// Grayscale decodes to a 3-channel buffer when replicate_gray is set,
/// matching the loss convention for infrared targets.
ImageBuffer read_image(const std::string& path, bool replicate_gray = true);

/// Encodes to PNG with round-half-up quantization. channels must be 1 or 3.
void write_image(const ImageBuffer& img, const std::string& path, int bit_depth = 8);

/// Parses root/cameras.json and pairs root/visible/<name>.png with
/// root/infrared/<name>.png. Missing twins and manifest/image dimension
/// disagreements are reported by name.
DatasetIndex load_dataset(const std::string& root);

/// Ground truth behind a generated dataset: the exact Gaussian scene the
/// images were rendered from, plus which primitives form the emissive hot
/// region (infrared-bright, visible-dark).
struct SyntheticScene {
  MultimodalScene ground_truth;
  std::vector<int> hot_indices;       // into the per-modality lists (shared positions)
  Vec3 hot_center = Vec3::Zero();
  Scalar hot_radius = 0;
};

struct SyntheticOptions {
  int n_views = 12;
  int n_gaussians = 30;
  int width = 128;
  int height = 128;
  int sh_degree = 1;
};

/// Renders a ring of views of a random two-modality Gaussian scene into
/// `root` (images + cameras.json) and returns the generating scene so tests
/// can compare against an exact oracle. Deterministic under the seed.
SyntheticScene generate_synthetic(const std::string& root, uint64_t seed,
                                  const SyntheticOptions& opts = {});

/// Ring camera used by the generator and by render-pose specs.
Camera ring_camera(int index, int n_views, int width, int height, Scalar radius = 3.2,
                   Scalar height_offset = 0.8, const Vec3& target = Vec3::Zero());

}  // namespace ivgf
