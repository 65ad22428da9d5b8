#pragma once

#include <vector>

#include "ivgf/types.hpp"

namespace ivgf {

/// Dense H x W x C image, row-major with interleaved channels.
/// Pixel values for targets/renders live in [0,1]; gradient buffers
/// reuse the same container without the range contract.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, Scalar fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {
    if (width <= 0 || height <= 0 || channels <= 0)
      throw InvalidParameterError("ImageBuffer: non-positive dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar& at(int x, int y, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  Scalar at(int x, int y, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  bool same_dims(const ImageBuffer& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  /// Elementwise max of two same-shaped images.
  static ImageBuffer max(const ImageBuffer& a, const ImageBuffer& b);

  /// Largest absolute elementwise difference.
  static Scalar max_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

  /// Mean absolute elementwise difference.
  static Scalar mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

  /// Largest absolute value in the buffer (0 for an empty image).
  Scalar max_abs() const {
    Scalar m = 0.0;
    for (const Scalar v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool operator==(const ImageBuffer& o) const {
    return same_dims(o) && data_ == o.data_;
  }

 private:
  int width_ = 0, height_ = 0, channels_ = 0;
  std::vector<Scalar> data_;
};

inline ImageBuffer ImageBuffer::max(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_dims(b)) throw ShapeError("ImageBuffer::max: dimension mismatch");
  ImageBuffer out(a.width(), a.height(), a.channels());
  for (size_t i = 0; i < a.size(); ++i)
    out.data()[i] = std::max(a.data()[i], b.data()[i]);
  return out;
}

inline Scalar ImageBuffer::max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_dims(b)) throw ShapeError("ImageBuffer::max_abs_diff: dimension mismatch");
  Scalar m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline Scalar ImageBuffer::mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_dims(b)) throw ShapeError("ImageBuffer::mean_abs_diff: dimension mismatch");
  Scalar s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<Scalar>(a.size());
}

}  // namespace ivgf
