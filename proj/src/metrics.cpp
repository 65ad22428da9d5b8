#include "ivgf/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ivgf/losses.hpp"

namespace ivgf {

namespace {

using nlohmann::json;

json metric_to_json(Scalar v) {
  if (std::isinf(v)) return nullptr;  // MSE == 0 sentinel
  return v;
}

Scalar metric_from_json(const json& j) {
  return j.is_null() ? std::numeric_limits<Scalar>::infinity() : j.get<Scalar>();
}

ImageBuffer quantize(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (size_t i = 0; i < img.size(); ++i) {
    const Scalar v = std::clamp(img.data()[i], 0.0, 1.0);
    out.data()[i] = std::floor(v * 255.0 + 0.5) / 255.0;
  }
  return out;
}

Scalar finite_mean(const std::vector<Scalar>& v) {
  // Infinite PSNR entries (perfect matches) are excluded from the mean.
  Scalar sum = 0;
  int n = 0;
  for (Scalar x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n > 0 ? sum / n : std::numeric_limits<Scalar>::infinity();
}

}  // namespace

Scalar psnr(const ImageBuffer& a, const ImageBuffer& b, Scalar peak) {
  if (!a.same_dims(b)) throw ShapeError("psnr: dimension mismatch");
  Scalar mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const Scalar d = a.data()[i] - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<Scalar>(a.size());
  if (mse == 0.0) return std::numeric_limits<Scalar>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

FusedScore evaluate_fused(const ImageBuffer& fused, const ImageBuffer& visible,
                          const ImageBuffer& infrared, const EvaluateOptions& opts) {
  if (!fused.same_dims(visible) || !fused.same_dims(infrared))
    throw ShapeError("evaluate_fused: dimension mismatch");
  const ImageBuffer f = opts.quantize_8bit ? quantize(fused) : fused;
  const ImageBuffer v = opts.quantize_8bit ? quantize(visible) : visible;
  const ImageBuffer t = opts.quantize_8bit ? quantize(infrared) : infrared;
  FusedScore s;
  s.psnr_vs_v = psnr(f, v);
  s.psnr_vs_t = psnr(f, t);
  s.psnr_avg = 0.5 * (s.psnr_vs_v + s.psnr_vs_t);
  s.ssim_vs_v = ssim(f, v).value;
  s.ssim_vs_t = ssim(f, t).value;
  s.ssim_avg = 0.5 * (s.ssim_vs_v + s.ssim_vs_t);
  return s;
}

void write_report(const std::vector<FusedScore>& scores, const std::string& json_path) {
  if (scores.empty()) throw InvalidParameterError("write_report: no scores");
  json views = json::array();
  std::map<std::string, std::map<std::string, std::vector<Scalar>>> per_scene;
  for (const auto& s : scores) {
    views.push_back({{"scene", s.scene},
                     {"view", s.view},
                     {"psnr_vs_V", metric_to_json(s.psnr_vs_v)},
                     {"psnr_vs_T", metric_to_json(s.psnr_vs_t)},
                     {"psnr_avg", metric_to_json(s.psnr_avg)},
                     {"ssim_vs_V", s.ssim_vs_v},
                     {"ssim_vs_T", s.ssim_vs_t},
                     {"ssim_avg", s.ssim_avg},
                     {"lpips", nullptr}});
    auto& m = per_scene[s.scene];
    m["psnr_avg"].push_back(s.psnr_avg);
    m["ssim_avg"].push_back(s.ssim_avg);
  }
  json scene_means = json::object();
  for (const auto& [scene, metrics] : per_scene) {
    scene_means[scene] = {{"psnr_avg", metric_to_json(finite_mean(metrics.at("psnr_avg")))},
                          {"ssim_avg", metric_to_json(finite_mean(metrics.at("ssim_avg")))},
                          {"lpips", nullptr}};
  }
  json root = {{"views", views}, {"scene_means", scene_means}, {"lpips", "unavailable"}};

  {
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_report: cannot open " + json_path);
    f << root.dump(2) << "\n";
    if (!f) throw std::runtime_error("write_report: write failed for " + json_path);
  }

  std::ofstream t(json_path + ".txt", std::ios::trunc);
  if (!t) throw std::runtime_error("write_report: cannot open " + json_path + ".txt");
  t << std::left << std::setw(20) << "scene" << std::right << std::setw(12) << "psnr_avg"
    << std::setw(12) << "ssim_avg" << std::setw(10) << "lpips" << "\n";
  for (const auto& [scene, metrics] : per_scene) {
    const Scalar pm = finite_mean(metrics.at("psnr_avg"));
    const Scalar sm = finite_mean(metrics.at("ssim_avg"));
    t << std::left << std::setw(20) << scene << std::right << std::setw(12) << std::fixed
      << std::setprecision(4);
    if (std::isfinite(pm))
      t << pm;
    else
      t << "inf";
    t << std::setw(12) << sm << std::setw(10) << "n/a" << "\n";
  }
}

std::vector<FusedScore> read_report(const std::string& json_path) {
  std::ifstream f(json_path);
  if (!f) throw std::runtime_error("read_report: cannot open " + json_path);
  json root;
  try {
    f >> root;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("read_report: ") + e.what());
  }
  std::vector<FusedScore> out;
  for (const auto& v : root.at("views")) {
    FusedScore s;
    s.scene = v.at("scene").get<std::string>();
    s.view = v.at("view").get<std::string>();
    s.psnr_vs_v = metric_from_json(v.at("psnr_vs_V"));
    s.psnr_vs_t = metric_from_json(v.at("psnr_vs_T"));
    s.psnr_avg = metric_from_json(v.at("psnr_avg"));
    s.ssim_vs_v = v.at("ssim_vs_V").get<Scalar>();
    s.ssim_vs_t = v.at("ssim_vs_T").get<Scalar>();
    s.ssim_avg = v.at("ssim_avg").get<Scalar>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ivgf
