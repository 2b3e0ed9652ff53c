// Command-line front end: toy scene generation, training, fine-tuning,
// rendering, evaluation and fly-through sequences.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "u2nerf/checkpoint.hpp"
#include "u2nerf/config.hpp"
#include "u2nerf/data_io.hpp"
#include "u2nerf/evaluation.hpp"
#include "u2nerf/trainer.hpp"

namespace fs = std::filesystem;
using namespace u2nerf;

namespace {

constexpr const char* kGroundTruthFile = "ground_truth.bin";

void save_ground_truth(const ToyScene& scene, const fs::path& dir) {
  Checkpoint gt;
  std::ostringstream os;
  os.precision(17);
  const auto& p = scene.params;
  os << "beta_d = " << p.beta_d[0] << "," << p.beta_d[1] << "," << p.beta_d[2] << '\n'
     << "beta_b = " << p.beta_b[0] << "," << p.beta_b[1] << "," << p.beta_b[2] << '\n'
     << "ambient = " << p.ambient[0] << "," << p.ambient[1] << "," << p.ambient[2] << '\n';
  gt.config_text = os.str();
  for (size_t v = 0; v < scene.clean.size(); ++v) {
    gt.set("clean." + scene.dataset.view_ids[v], scene.clean[v]);
    gt.set("depth." + scene.dataset.view_ids[v], scene.depth[v]);
  }
  save_checkpoint(gt, dir / kGroundTruthFile);
}

// Clean images per view when the scene ships ground truth.
std::optional<std::vector<torch::Tensor>> load_clean(const fs::path& scene_dir, const SceneDataset& ds) {
  const auto path = scene_dir / kGroundTruthFile;
  if (!fs::exists(path)) return std::nullopt;
  const auto gt = load_checkpoint(path);
  std::vector<torch::Tensor> clean;
  for (const auto& id : ds.view_ids) clean.push_back(gt.at("clean." + id));
  return clean;
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, "--set expects key=value, got '", item, "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

size_t resolve_view(const SceneDataset& ds, const std::string& id) {
  for (size_t i = 0; i < ds.size(); ++i) {
    if (ds.view_ids[i] == id) return i;
  }
  try {
    const auto index = std::stoul(id);
    require(index < ds.size(), "pose id ", index, " out of range (", ds.size(), " views)");
    return index;
  } catch (const std::logic_error&) {
    fail("unknown pose id '", id, "'");
  }
}

int source_count(const RunConfig& cfg, const SceneDataset& ds) {
  return std::min<int>(cfg.train.n_max, static_cast<int>(ds.size()) - 1);
}

void train_loop(Trainer& trainer, const fs::path& out) {
  fs::create_directories(out);
  const auto& cfg = trainer.config();
  {
    std::ofstream snapshot(out / "config.cfg");
    snapshot << cfg.to_text();
  }
  const auto every = cfg.train.checkpoint_every;
  trainer.run(out / "train_log.jsonl", [&](int64_t step, const LossReport& r) {
    if (cfg.train.log_every > 0 && step % cfg.train.log_every == 0) {
      std::printf("step %lld  total %.6f  rec %.6f\n", static_cast<long long>(step), r.total, r.rec);
      std::fflush(stdout);
    }
    if (every > 0 && step % every == 0) save_checkpoint(trainer.checkpoint(), out / "checkpoint.bin");
    return true;
  });
  save_checkpoint(trainer.checkpoint(), out / "checkpoint.bin");
  std::printf("wrote %s\n", (out / "checkpoint.bin").string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater radiance field restoration"};
  app.require_subcommand(1);

  // make-toy
  ToySceneConfig toy;
  std::string toy_out;
  auto* make_toy = app.add_subcommand("make-toy", "Write a synthetic underwater toy scene");
  make_toy->add_option("--views", toy.views, "Number of views")->capture_default_str();
  make_toy->add_option("--size", toy.size, "Image side in pixels")->capture_default_str();
  make_toy->add_option("--seed", toy.seed, "Texture seed")->capture_default_str();
  make_toy->add_option("--out", toy_out, "Output scene directory")->required();

  // train / finetune
  std::string scene_dir, config_file, out_dir, ckpt_file, preset = "full";
  std::vector<std::string> overrides;
  bool deterministic = false;
  std::optional<int64_t> steps;
  std::optional<uint64_t> seed;
  const auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--scene", scene_dir, "Scene directory")->required();
    cmd->add_option("--config", config_file, "key = value config file");
    cmd->add_option("--out", out_dir, "Output directory")->required();
    cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
    cmd->add_option("--steps", steps, "Override steps");
    cmd->add_option("--seed", seed, "Override seed");
    cmd->add_flag("--deterministic", deterministic, "Single-threaded, deterministic kernels");
  };
  auto* train = app.add_subcommand("train", "Train on one scene");
  add_train_flags(train);
  train->add_option("--preset", preset, "Base config: full or tiny")->check(CLI::IsMember({"full", "tiny"}));
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint");
  add_train_flags(finetune_cmd);
  finetune_cmd->add_option("--ckpt", ckpt_file, "Pretrained checkpoint")->required();

  // render / eval / sequence
  std::string pose_id, report_path, lpips_file;
  bool sixteen_bit = false;
  int frames = 30;
  auto* render = app.add_subcommand("render", "Render components of one view");
  render->add_option("--ckpt", ckpt_file)->required();
  render->add_option("--scene", scene_dir)->required();
  render->add_option("--pose-id", pose_id, "View name or index")->required();
  render->add_option("--out", out_dir)->required();
  render->add_flag("--sixteen-bit", sixteen_bit, "Write 16-bit PNGs");
  auto* eval = app.add_subcommand("eval", "Evaluate every view of a scene");
  eval->add_option("--ckpt", ckpt_file)->required();
  eval->add_option("--scene", scene_dir)->required();
  eval->add_option("--out", report_path, "Report file (.jsonl)")->required();
  eval->add_option("--lpips", lpips_file, "External 'view_id score' file to merge");
  auto* sequence = app.add_subcommand("sequence", "Render a fly-through along the camera path");
  sequence->add_option("--ckpt", ckpt_file)->required();
  sequence->add_option("--scene", scene_dir)->required();
  sequence->add_option("--frames", frames)->capture_default_str();
  sequence->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_toy) {
      const auto scene = make_toy_scene(toy);
      write_scene(scene.dataset, toy_out);
      save_ground_truth(scene, toy_out);
      std::printf("wrote %zu views to %s\n", scene.dataset.size(), toy_out.c_str());
      return 0;
    }

    if (*train || *finetune_cmd) {
      std::optional<Checkpoint> pretrained;
      RunConfig cfg = preset == "tiny" ? RunConfig::tiny() : RunConfig::full();
      if (*finetune_cmd) {
        pretrained = load_checkpoint(ckpt_file);
        cfg = finetune_defaults(RunConfig::from_text(pretrained->config_text));
      }
      if (!config_file.empty()) cfg = RunConfig::from_file(config_file, cfg);
      cfg.apply(parse_overrides(overrides));
      if (steps) cfg.train.steps = *steps;
      if (seed) cfg.train.seed = *seed;
      if (deterministic) cfg.train.deterministic = true;
      const auto dataset = load_scene(scene_dir);
      Trainer trainer(cfg, dataset);
      if (pretrained) trainer.load_weights(*pretrained);
      train_loop(trainer, out_dir);
      return 0;
    }

    const auto ckpt = load_checkpoint(ckpt_file);
    const auto cfg = RunConfig::from_text(ckpt.config_text);
    auto model = model_from_checkpoint(ckpt);
    const auto dataset = load_scene(scene_dir);
    const int n = source_count(cfg, dataset);

    if (*render) {
      const auto view = resolve_view(dataset, pose_id);
      const auto result = render_view(model, dataset, dataset.cameras[view], n, view);
      fs::path stem = dataset.view_ids[view];
      write_components(result, out_dir, stem.stem().string(), sixteen_bit);
      std::printf("wrote components of %s to %s\n", dataset.view_ids[view].c_str(), out_dir.c_str());
    } else if (*eval) {
      const auto clean = load_clean(scene_dir, dataset);
      std::map<std::string, double> lpips;
      if (!lpips_file.empty()) lpips = read_score_file(lpips_file);
      std::vector<size_t> views(dataset.size());
      std::iota(views.begin(), views.end(), 0);
      auto report = evaluate_views(dataset, views, model_provider(model, dataset, n),
                                   clean ? &*clean : nullptr, lpips_file.empty() ? nullptr : &lpips);
      report.scene_id = fs::path(scene_dir).filename().string();
      report.config_hash = config_hash(ckpt.config_text);
      write_report(report, report_path);
      std::printf("wrote %s\n", report_path.c_str());
    } else if (*sequence) {
      render_sequence(model, dataset, frames, n, out_dir);
      std::printf("wrote %d frames to %s\n", frames, out_dir.c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
