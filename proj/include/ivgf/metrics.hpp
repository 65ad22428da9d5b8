#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ivgf/image.hpp"

namespace ivgf {

/// 10·log10(peak²/MSE). Identical images return the +infinity sentinel
/// (serialized as null in reports).
Scalar psnr(const ImageBuffer& a, const ImageBuffer& b, Scalar peak = 1.0);

/// Fusion evaluation protocol: each metric computed against both source
/// images and averaged.
struct FusedScore {
  std::string scene;
  std::string view;
  Scalar psnr_vs_v = 0, psnr_vs_t = 0, psnr_avg = 0;  // may be +inf
  Scalar ssim_vs_v = 0, ssim_vs_t = 0, ssim_avg = 0;
};

/// Optional 8-bit quantization before measuring, for parity with pipelines
/// that evaluate encoded files.
struct EvaluateOptions {
  bool quantize_8bit = false;
};

FusedScore evaluate_fused(const ImageBuffer& fused, const ImageBuffer& visible,
                          const ImageBuffer& infrared, const EvaluateOptions& opts = {});

/// Writes scores as machine-readable JSON (path) and an aligned text table
/// (path + ".txt") with per-scene means. LPIPS is reported as unavailable.
void write_report(const std::vector<FusedScore>& scores, const std::string& json_path);

/// Round trip of a JSON report written by write_report.
std::vector<FusedScore> read_report(const std::string& json_path);

}  // namespace ivgf
