// ivgf: multimodal Gaussian-splatting pipeline driver.
//
// Subcommands: synth, train-stage1, train-stage2, render, evaluate.
// Exit codes: 0 success, 1 runtime failure, 2 usage/input error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivgf/cma.hpp"
#include "ivgf/dataio.hpp"
#include "ivgf/metrics.hpp"
#include "ivgf/optimizer.hpp"
#include "ivgf/parallel.hpp"
#include "ivgf/rasterizer.hpp"
#include "ivgf/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ivgf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Input/precondition problems (missing files, bad arguments) exit with 2;
/// anything else during execution exits with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_dataset(const std::string& root) {
  if (!fs::exists(fs::path(root) / "cameras.json"))
    throw UsageError("dataset not found: no cameras.json under '" + root + "'");
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: '" + path + "'");
}

/// Writes through a temp file + rename so interrupted runs never leave a
/// half-written artifact under the final name.
template <typename WriteFn>
void atomic_write(const std::string& path, WriteFn&& writer) {
  const std::string tmp = path + ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

void write_json(const std::string& path, const json& doc) {
  atomic_write(path, [&](const std::string& tmp) {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp);
    f << doc.dump(2) << "\n";
    if (!f) throw std::runtime_error("write failed for " + tmp);
  });
}

struct CommonOpts {
  uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--seed", c.seed, "Deterministic RNG seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (0 = hardware default)")
      ->capture_default_str();
}

VecX tau_for(const MultimodalScene& scene, const std::string& cma_path, double tau_override) {
  if (tau_override >= 0.0) return VecX::Constant(scene.total_count(), tau_override);
  require_file(cma_path, "CMA checkpoint");
  const CmaParameters cma = load_cma(cma_path);
  if (cma.input_dim() != scene.coeff_count())
    throw ShapeError("CMA checkpoint expects " + std::to_string(cma.input_dim()) +
                     " SH features but the scene provides " +
                     std::to_string(scene.coeff_count()));
  return cma_forward(cma, scene);
}

ImageBuffer render_by_modality(const MultimodalScene& scene, const Camera& cam,
                               const std::string& modality, const VecX& tau) {
  if (modality == "visible") return render_single(scene.visible, cam).image;
  if (modality == "infrared") return render_single(scene.infrared, cam).image;
  return render_fused(scene, cam, tau).image;
}

// ------------------------------------------------------------------ synth
int cmd_synth(const std::string& root, uint64_t seed, const SyntheticOptions& opts) {
  const SyntheticScene synth = generate_synthetic(root, seed, opts);
  std::printf("wrote %d views (%dx%d) and %d-primitive-per-modality ground truth to %s\n",
              opts.n_views, opts.width, opts.height, synth.ground_truth.visible_count(),
              root.c_str());
  return kExitOk;
}

// ----------------------------------------------------------- train-stage1
int cmd_train_stage1(const std::string& dataset, const std::string& out, TrainConfig cfg) {
  require_dataset(dataset);
  fs::create_directories(out);
  const DatasetIndex ds = load_dataset(dataset);

  const Stage1Result r = train_stage1(ds, cfg);

  atomic_write((fs::path(out) / "scene.ply").string(),
               [&](const std::string& tmp) { save_scene(r.scene, tmp); });
  write_json((fs::path(out) / "stage1_log.json").string(),
             {{"iterations", cfg.stage1_iters},
              {"seed", cfg.seed},
              {"final_visible_count", r.scene.visible_count()},
              {"final_infrared_count", r.scene.infrared_count()},
              {"loss_curve", r.loss_curve},
              {"psnr_visible", r.psnr_visible},
              {"psnr_infrared", r.psnr_infrared}});
  std::printf("stage 1 done: %d + %d primitives, final loss %.5f -> %s\n",
              r.scene.visible_count(), r.scene.infrared_count(), r.loss_curve.back(),
              out.c_str());
  return kExitOk;
}

// ----------------------------------------------------------- train-stage2
int cmd_train_stage2(const std::string& dataset, const std::string& checkpoint,
                     TrainConfig cfg) {
  require_dataset(dataset);
  const std::string scene_path = (fs::path(checkpoint) / "scene.ply").string();
  require_file(scene_path, "stage-1 scene checkpoint");
  const MultimodalScene scene = load_scene(scene_path);
  const DatasetIndex ds = load_dataset(dataset);

  const Stage2Result r = train_stage2(scene, ds, cfg);

  atomic_write((fs::path(checkpoint) / "cma.bin").string(),
               [&](const std::string& tmp) { save_cma(r.cma, tmp); });
  write_json((fs::path(checkpoint) / "stage2_log.json").string(),
             {{"iterations", cfg.stage2_iters},
              {"seed", cfg.seed},
              {"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"loss_curve", r.loss_curve}});
  std::printf("stage 2 done: final loss %.5f -> %s\n", r.loss_curve.back(),
              checkpoint.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ render
int cmd_render(const std::string& dataset, const std::string& checkpoint,
               const std::string& out, const std::string& modality, double tau_override,
               const std::string& split) {
  require_dataset(dataset);
  const std::string scene_path = (fs::path(checkpoint) / "scene.ply").string();
  require_file(scene_path, "scene checkpoint");
  const MultimodalScene scene = load_scene(scene_path);
  const DatasetIndex ds = load_dataset(dataset);
  fs::create_directories(out);

  VecX tau = VecX::Ones(scene.total_count());
  if (modality == "fused")
    tau = tau_for(scene, (fs::path(checkpoint) / "cma.bin").string(), tau_override);

  int count = 0;
  for (const DatasetEntry& e : ds.entries) {
    if (split == "train" && e.is_test) continue;
    if (split == "test" && !e.is_test) continue;
    const ImageBuffer img = render_by_modality(scene, e.camera, modality, tau);
    atomic_write((fs::path(out) / (e.name + ".png")).string(),
                 [&](const std::string& tmp) { write_image(img, tmp); });
    ++count;
  }
  if (count == 0) throw UsageError("no views matched split '" + split + "'");
  std::printf("rendered %d %s view(s) to %s\n", count, modality.c_str(), out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate
int cmd_evaluate(const std::string& dataset, const std::string& checkpoint,
                 const std::string& report_path, const std::string& modality,
                 double tau_override, const std::string& split, bool quantize) {
  require_dataset(dataset);
  const std::string scene_path = (fs::path(checkpoint) / "scene.ply").string();
  require_file(scene_path, "scene checkpoint");
  const MultimodalScene scene = load_scene(scene_path);
  const DatasetIndex ds = load_dataset(dataset);

  VecX tau = VecX::Ones(scene.total_count());
  if (modality == "fused")
    tau = tau_for(scene, (fs::path(checkpoint) / "cma.bin").string(), tau_override);

  EvaluateOptions eopts;
  eopts.quantize_8bit = quantize;
  std::vector<FusedScore> scores;
  for (const DatasetEntry& e : ds.entries) {
    if (split == "train" && e.is_test) continue;
    if (split == "test" && !e.is_test) continue;
    const ImageBuffer V = read_image(e.visible_path);
    const ImageBuffer T = read_image(e.infrared_path);
    FusedScore s = evaluate_fused(render_by_modality(scene, e.camera, modality, tau), V, T,
                                  eopts);
    s.scene = fs::path(dataset).filename().string();
    s.view = e.name;
    scores.push_back(std::move(s));
  }
  if (scores.empty()) throw UsageError("no views matched split '" + split + "'");
  atomic_write(report_path, [&](const std::string& tmp) { write_report(scores, tmp); });
  // write_report also emits <path>.txt; move it alongside the report.
  fs::rename(report_path + ".tmp.txt", report_path + ".txt");

  Scalar psnr_sum = 0, ssim_sum = 0;
  int finite = 0;
  for (const auto& s : scores) {
    if (std::isfinite(s.psnr_avg)) {
      psnr_sum += s.psnr_avg;
      ++finite;
    }
    ssim_sum += s.ssim_avg;
  }
  std::printf("evaluated %zu view(s): mean psnr_avg %.2f dB, mean ssim_avg %.4f -> %s\n",
              scores.size(), finite ? psnr_sum / finite : 0.0,
              ssim_sum / static_cast<Scalar>(scores.size()), report_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable multimodal Gaussian-splatting engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-modality dataset");
  std::string synth_root;
  CommonOpts synth_common;
  SyntheticOptions sopts;
  synth->add_option("--root", synth_root, "Output dataset directory")->required();
  synth->add_option("--views", sopts.n_views, "Number of ring views")->capture_default_str();
  synth->add_option("--gaussians", sopts.n_gaussians, "Ground-truth primitives per modality")
      ->capture_default_str();
  synth->add_option("--width", sopts.width, "Image width")->capture_default_str();
  synth->add_option("--height", sopts.height, "Image height")->capture_default_str();
  synth->add_option("--sh-degree", sopts.sh_degree, "SH degree of the ground truth")
      ->capture_default_str();
  add_common(synth, synth_common);

  // shared training options
  std::string dataset, out_dir, checkpoint;
  TrainConfig cfg;
  CommonOpts train_common;

  auto* s1 = app.add_subcommand("train-stage1", "Per-modality scene reconstruction");
  s1->add_option("--dataset", dataset, "Dataset root (cameras.json + images)")->required();
  s1->add_option("--out", out_dir, "Checkpoint directory to create")->required();
  s1->add_option("--iters", cfg.stage1_iters, "Stage-1 iterations")->capture_default_str();
  s1->add_option("--init-gaussians", cfg.init_gaussians, "Initial primitives per modality")
      ->capture_default_str();
  s1->add_option("--sh-degree", cfg.sh_degree, "SH degree")->capture_default_str();
  s1->add_option("--scene-extent", cfg.scene_extent, "World bound for init and densify")
      ->capture_default_str();
  s1->add_flag_callback("--no-densify", [&] { cfg.densify_enabled = false; },
                        "Disable adaptive density control");
  add_common(s1, train_common);

  auto* s2 = app.add_subcommand("train-stage2", "Cross-modal adjustment training");
  s2->add_option("--dataset", dataset, "Dataset root")->required();
  s2->add_option("--checkpoint", checkpoint, "Directory holding scene.ply; cma.bin is added")
      ->required();
  s2->add_option("--iters", cfg.stage2_iters, "Stage-2 iterations")->capture_default_str();
  s2->add_option("--lambda1", cfg.lambda1, "Intensity L1 weight")->capture_default_str();
  s2->add_option("--lambda2", cfg.lambda2, "SSIM term weight")->capture_default_str();
  s2->add_option("--lr-cma", cfg.lr.cma, "CMA learning rate")->capture_default_str();
  s2->add_option("--hidden1", cfg.cma_hidden1, "First hidden width")->capture_default_str();
  s2->add_option("--hidden2", cfg.cma_hidden2, "Second hidden width")->capture_default_str();
  add_common(s2, train_common);

  // render / evaluate
  std::string modality = "fused", split = "test", report_path;
  double tau_override = -1.0;
  bool quantize = false;
  CommonOpts re_common;

  auto* render = app.add_subcommand("render", "Render checkpoint views to PNG");
  render->add_option("--dataset", dataset, "Dataset root providing the poses")->required();
  render->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  render->add_option("--out", out_dir, "Output image directory")->required();
  render->add_option("--modality", modality, "fused | visible | infrared")
      ->check(CLI::IsMember({"fused", "visible", "infrared"}))
      ->capture_default_str();
  render->add_option("--tau-override", tau_override,
                     "Constant tau instead of the CMA (e.g. 1.0 for plain multimodal)")
      ->check(CLI::Range(0.0, 1.0));
  render->add_option("--split", split, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  add_common(render, re_common);

  auto* eval = app.add_subcommand("evaluate", "Score renders against both sources");
  eval->add_option("--dataset", dataset, "Dataset root")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--report", report_path, "Output JSON report path")->required();
  eval->add_option("--modality", modality, "fused | visible | infrared")
      ->check(CLI::IsMember({"fused", "visible", "infrared"}))
      ->capture_default_str();
  eval->add_option("--tau-override", tau_override, "Constant tau instead of the CMA")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--split", split, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  eval->add_flag("--quantize-8bit", quantize, "Quantize to 8 bits before scoring");
  add_common(eval, re_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      set_thread_count(synth_common.threads);
      return cmd_synth(synth_root, synth_common.seed, sopts);
    }
    set_thread_count(train_common.threads ? train_common.threads : re_common.threads);
    cfg.seed = train_common.seed;
    if (s1->parsed()) return cmd_train_stage1(dataset, out_dir, cfg);
    if (s2->parsed()) return cmd_train_stage2(dataset, checkpoint, cfg);
    if (render->parsed())
      return cmd_render(dataset, checkpoint, out_dir, modality, tau_override, split);
    if (eval->parsed())
      return cmd_evaluate(dataset, checkpoint, report_path, modality, tau_override, split,
                          quantize);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
