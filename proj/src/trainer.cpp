#include "u2nerf/trainer.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "u2nerf/geometry.hpp"

namespace u2nerf {
namespace {

const std::set<std::string> kModelKeys = {
    "encoder",      "feature_width",      "dim",                "view_heads",
    "ray_heads",    "ff_hidden",          "depth",              "samples_per_ray",
    "patch_size",   "decoder_width",      "position_encoding",  "vae_encoder_widths",
    "vae_decoder_widths", "latent_dim",   "precision"};

bool is_backbone(const std::string& name) { return name.rfind("backbone.", 0) == 0; }

}  // namespace

Batch build_batch(const SceneDataset& dataset, const TrainConfig& config, int patch_size,
                  Rng& rng) {
  require(dataset.size() >= static_cast<size_t>(config.n_max) + 1, "dataset has ", dataset.size(),
          " views; training needs at least ", config.n_max + 1, " (N_max + 1)");
  Batch batch;
  batch.target = static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(dataset.size()) - 1));
  batch.k = static_cast<int>(uniform_int(rng, config.k_min, config.k_max));
  batch.n = static_cast<int>(uniform_int(rng, config.n_min, config.n_max));
  std::vector<Pose> poses;
  for (const auto& cam : dataset.cameras) poses.push_back(cam.pose);
  batch.sources = select_source_views(poses[batch.target], poses, batch.k, batch.n, rng, batch.target);

  const auto& image = dataset.images[batch.target];
  const int64_t gx = image.size(1) / patch_size;
  const int64_t gy = image.size(0) / patch_size;
  const int64_t cells = gx * gy;
  const int64_t count = config.rays_per_batch / (patch_size * patch_size);
  require(count <= cells, "batch asks for ", count, " patches but the image holds only ", cells);
  std::vector<int64_t> order(static_cast<size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  for (int64_t i = 0; i < count; ++i) {
    std::swap(order[i], order[uniform_int(rng, i, cells - 1)]);
    batch.origins.push_back({static_cast<int>((order[i] % gx) * patch_size),
                             static_cast<int>((order[i] / gx) * patch_size)});
  }
  batch.target_patches = crop_patches(image, batch.origins, patch_size);
  return batch;
}

LossTerms evaluate_batch(U2NerfModel& model, const SceneDataset& dataset, const Batch& batch,
                         bool stratified, Rng& rng, PatchRender* render) {
  const auto& target = dataset.cameras.at(batch.target);
  const auto ctx = prepare_sources(model, dataset, batch.sources);
  const auto light = estimate_light(model, dataset, target.pose, batch.sources, LatentMode::kTrain, rng);
  auto r = render_patches(model, ctx, light, target, batch.origins, dataset.near, dataset.far,
                          stratified, rng);
  LossTerms terms;
  terms.rec = l_rec(r.composed, batch.target_patches.to(model->options()));
  terms.con = l_con(r.components.radiance);
  terms.col = l_col(r.components.radiance);
  terms.kl = l_kl(light.mu, light.log_var);
  terms.trans = l_trans(r.components.backscatter_transmission);
  terms.glob = l_glob(light.ambient);
  if (render) *render = std::move(r);
  return terms;
}

std::array<double, 2> learning_rates(const TrainConfig& config, int64_t step) {
  return {config.learning_rate(config.lr_backbone, step), config.learning_rate(config.lr_model, step)};
}

std::vector<NamedTensor> model_arrays(U2NerfModel& model) {
  std::vector<NamedTensor> out;
  for (const auto& item : model->named_parameters()) out.push_back({item.key(), item.value()});
  for (const auto& item : model->named_buffers()) out.push_back({item.key(), item.value()});
  return out;
}

void load_model_arrays(U2NerfModel& model, const Checkpoint& checkpoint) {
  std::vector<std::string> problems;
  const auto arrays = model_arrays(model);
  for (const auto& [name, value] : arrays) {
    if (!checkpoint.contains(name)) {
      problems.push_back(name + " (missing)");
      continue;
    }
    const auto& stored = checkpoint.at(name);
    if (stored.sizes() != value.sizes()) {
      std::ostringstream os;
      os << name << " (checkpoint " << stored.sizes() << ", model " << value.sizes() << ")";
      problems.push_back(os.str());
    }
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "checkpoint does not fit the model; mismatched entries:";
    for (const auto& p : problems) os << "\n  " << p;
    fail(os.str());
  }
  torch::NoGradGuard guard;
  for (const auto& [name, value] : arrays) value.copy_(checkpoint.at(name));
}

U2NerfModel model_from_checkpoint(const Checkpoint& checkpoint) {
  const auto config = RunConfig::from_text(checkpoint.config_text);
  U2NerfModel model(config.model);
  load_model_arrays(model, checkpoint);
  model->eval();
  return model;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  require(!in.fail(), "invalid rng state");
}

std::string model_config_text(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& [key, value] : parse_key_values(config.to_text())) {
    if (kModelKeys.count(key)) os << key << " = " << value << '\n';
  }
  return os.str();
}

void check_compatible(const ModelConfig& expected, const ModelConfig& actual) {
  RunConfig a, b;
  a.model = expected;
  b.model = actual;
  const auto ka = parse_key_values(model_config_text(a));
  const auto kb = parse_key_values(model_config_text(b));
  std::vector<std::string> diffs;
  for (const auto& [key, value] : ka) {
    if (kb.at(key) != value) diffs.push_back(key + ": checkpoint " + value + ", requested " + kb.at(key));
  }
  if (!diffs.empty()) {
    std::ostringstream os;
    os << "model config does not match the checkpoint:";
    for (const auto& d : diffs) os << "\n  " << d;
    fail(os.str());
  }
}

Trainer::Trainer(const RunConfig& config, SceneDataset dataset)
    : config_(config), dataset_(std::move(dataset)), rng_(config.train.seed) {
  config_.model.validate();
  config_.train.validate(config_.model);
  dataset_.validate();
  if (config_.train.deterministic) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
  torch::manual_seed(config_.train.seed);
  model_ = U2NerfModel(config_.model);
  for (auto& img : dataset_.images) img = img.to(model_->options());
  for (const auto& item : model_->named_parameters()) named_params_.emplace_back(item.key(), item.value());
  reset_optimizer();
}

void Trainer::reset_optimizer() {
  std::vector<torch::Tensor> backbone, rest;
  for (const auto& [name, p] : named_params_) (is_backbone(name) ? backbone : rest).push_back(p);
  const auto lr = learning_rates(config_.train, step_);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(backbone, std::make_unique<torch::optim::AdamOptions>(lr[0]));
  groups.emplace_back(rest, std::make_unique<torch::optim::AdamOptions>(lr[1]));
  optimizer_ = std::make_unique<torch::optim::Adam>(
      std::move(groups), torch::optim::AdamOptions(config_.train.lr_model).betas({0.9, 0.999}).eps(1e-8));
}

LossReport Trainer::train_step(const Batch& batch) {
  const auto lr = learning_rates(config_.train, step_);
  for (size_t g = 0; g < 2; ++g) {
    static_cast<torch::optim::AdamOptions&>(optimizer_->param_groups()[g].options()).lr(lr[g]);
  }
  model_->train();
  optimizer_->zero_grad();
  const auto terms = evaluate_batch(model_, dataset_, batch, config_.train.stratified, rng_);
  const auto total = weighted_total(terms, config_.train.weights);
  const auto report = make_report(terms, config_.train.weights);
  total.backward();
  for (const auto& [name, p] : named_params_) {
    if (p.grad().defined()) require(all_finite(p.grad()), "non-finite gradient in ", name, " at step ", step_);
  }
  optimizer_->step();
  ++step_;
  return report;
}

LossReport Trainer::step() {
  const auto batch = build_batch(dataset_, config_.train, config_.model.transformer.patch_size, rng_);
  return train_step(batch);
}

void Trainer::run(const std::optional<std::filesystem::path>& log_path,
                  const std::function<bool(int64_t, const LossReport&)>& callback) {
  std::ofstream log;
  if (log_path) {
    if (log_path->has_parent_path()) std::filesystem::create_directories(log_path->parent_path());
    log.open(*log_path, std::ios::app);
    require(log.good(), "cannot open training log ", log_path->string());
  }
  while (step_ < config_.train.steps) {
    const auto lr = learning_rates(config_.train, step_);
    const auto report = step();
    const bool last = step_ == config_.train.steps;
    if (log.is_open() && (last || (config_.train.log_every > 0 && step_ % config_.train.log_every == 0))) {
      nlohmann::json rec = {{"step", step_},
                            {"rec", report.rec},
                            {"con", report.con},
                            {"col", report.col},
                            {"kl", report.kl},
                            {"trans", report.trans},
                            {"glob", report.glob},
                            {"total", report.total},
                            {"lr_backbone", lr[0]},
                            {"lr_model", lr[1]}};
      log << rec.dump() << '\n' << std::flush;
    }
    if (callback && !callback(step_, report)) break;
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config_text = config_.to_text();
  auto& model = const_cast<U2NerfModel&>(model_);
  ckpt.arrays = model_arrays(model);
  for (auto& a : ckpt.arrays) a.value = a.value.detach().clone();
  const auto& state = optimizer_->state();
  for (const auto& [name, p] : named_params_) {
    const auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ckpt.set("adam." + name + ".exp_avg", s.exp_avg().clone());
    ckpt.set("adam." + name + ".exp_avg_sq", s.exp_avg_sq().clone());
    ckpt.set("adam." + name + ".step", torch::tensor({s.step()}, torch::kLong));
  }
  ckpt.set("trainer.step", torch::tensor({step_}, torch::kLong));
  const auto rs = rng_state(rng_);
  ckpt.set("trainer.rng", torch::from_blob(const_cast<char*>(rs.data()),
                                           {static_cast<int64_t>(rs.size())}, torch::kUInt8)
                              .clone());
  return ckpt;
}

void Trainer::load_weights(const Checkpoint& checkpoint) {
  const auto stored = RunConfig::from_text(checkpoint.config_text);
  check_compatible(stored.model, config_.model);
  load_model_arrays(model_, checkpoint);
  step_ = 0;
  reset_optimizer();
}

void Trainer::restore(const Checkpoint& checkpoint) {
  load_weights(checkpoint);
  auto& state = optimizer_->state();
  for (const auto& [name, p] : named_params_) {
    const auto key = "adam." + name + ".exp_avg";
    if (!checkpoint.contains(key)) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->exp_avg(checkpoint.at(key).clone());
    s->exp_avg_sq(checkpoint.at("adam." + name + ".exp_avg_sq").clone());
    s->step(checkpoint.at("adam." + name + ".step").item<int64_t>());
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
  step_ = checkpoint.at("trainer.step").item<int64_t>();
  const auto& r = checkpoint.at("trainer.rng");
  set_rng_state(rng_, std::string(static_cast<const char*>(r.data_ptr()), static_cast<size_t>(r.numel())));
}

RunConfig finetune_defaults(RunConfig base) {
  base.train.steps = 50000;
  base.train.rays_per_batch = 256;
  base.train.lr_backbone = 5e-4;
  base.train.lr_model = 2e-4;
  return base;
}

Checkpoint finetune(const Checkpoint& pretrained, const SceneDataset& scene, const RunConfig& config,
                    const std::optional<std::filesystem::path>& log_path) {
  Trainer trainer(config, scene);
  trainer.load_weights(pretrained);
  trainer.run(log_path);
  return trainer.checkpoint();
}

}  // namespace u2nerf
