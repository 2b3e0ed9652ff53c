#include "u2nerf/config.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "u2nerf/data_io.hpp"

namespace u2nerf {

void ModelConfig::validate() const {
  backbone.validate();
  transformer.validate();
  vae.validate();
  require(dtype == torch::kFloat32 || dtype == torch::kFloat64, "precision must be float32 or float64");
}

void TrainConfig::validate(const ModelConfig& model) const {
  require(steps >= 1, "steps must be >= 1");
  const int p = model.transformer.patch_size;
  require(rays_per_batch >= p * p && rays_per_batch % (p * p) == 0, "rays_per_batch ",
          rays_per_batch, " must be a positive multiple of the patch area ", p * p);
  require(lr_backbone >= 0.0 && lr_model >= 0.0, "learning rates must be non-negative");
  require(lr_decay_final > 0.0 && lr_decay_final <= 1.0, "lr_decay_final must be in (0, 1]");
  require(k_min >= 1 && k_min <= k_max, "k range [", k_min, ", ", k_max, "] is empty or invalid");
  require(n_min >= 1 && n_min <= n_max, "N range [", n_min, ", ", n_max, "] is empty or invalid");
  weights.validate();
}

double TrainConfig::decay_per_step() const {
  return std::pow(lr_decay_final, 1.0 / static_cast<double>(steps));
}

double TrainConfig::learning_rate(double base, int64_t step) const {
  return base * std::pow(lr_decay_final, static_cast<double>(step) / static_cast<double>(steps));
}

RunConfig RunConfig::full() {
  RunConfig cfg;
  cfg.model.backbone.encoder = EncoderDepth::kFull;
  cfg.model.backbone.feature_width = 32;
  cfg.model.transformer = TransformerConfig{};
  cfg.model.dtype = torch::kFloat32;
  return cfg;
}

RunConfig RunConfig::tiny() {
  RunConfig cfg;
  cfg.model.backbone.encoder = EncoderDepth::kTiny;
  cfg.model.backbone.feature_width = 16;
  auto& t = cfg.model.transformer;
  t.dim = 32;
  t.depth = 2;
  t.samples_per_ray = 32;
  t.patch_size = 4;
  t.ff_hidden = 64;
  t.decoder_width = 32;
  cfg.model.vae.encoder_widths = {8, 8, 16, 16};
  cfg.model.vae.latent_dim = 16;
  cfg.model.vae.decoder_widths = {16, 8, 8};
  cfg.train.steps = 20000;
  cfg.train.rays_per_batch = 512;
  cfg.train.n_min = cfg.train.n_max = 4;
  return cfg;
}

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::string join(const std::vector<int>& values) {
  std::ostringstream os;
  for (size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config key ", key, ": expected a boolean, got '", v, "'");
}

}  // namespace

void RunConfig::apply(const std::map<std::string, std::string>& values) {
  auto& b = model.backbone;
  auto& t = model.transformer;
  auto& v = model.vae;
  auto& tr = train;
  auto& w = train.weights;
  for (const auto& [key, value] : values) {
    try {
      if (key == "encoder") {
        if (value == "full") {
          b.encoder = EncoderDepth::kFull;
        } else if (value == "tiny") {
          b.encoder = EncoderDepth::kTiny;
        } else {
          fail("encoder must be 'full' or 'tiny'");
        }
      } else if (key == "feature_width") {
        b.feature_width = std::stoi(value);
      } else if (key == "dim") {
        t.dim = std::stoi(value);
      } else if (key == "view_heads") {
        t.view_heads = std::stoi(value);
      } else if (key == "ray_heads") {
        t.ray_heads = std::stoi(value);
      } else if (key == "ff_hidden") {
        t.ff_hidden = std::stoi(value);
      } else if (key == "depth") {
        t.depth = std::stoi(value);
      } else if (key == "samples_per_ray") {
        t.samples_per_ray = std::stoi(value);
      } else if (key == "patch_size") {
        t.patch_size = std::stoi(value);
      } else if (key == "decoder_width") {
        t.decoder_width = std::stoi(value);
      } else if (key == "position_encoding") {
        t.position_encoding = parse_bool(key, value);
      } else if (key == "vae_encoder_widths") {
        v.encoder_widths = parse_int_list(value);
      } else if (key == "vae_decoder_widths") {
        v.decoder_widths = parse_int_list(value);
      } else if (key == "latent_dim") {
        v.latent_dim = std::stoi(value);
      } else if (key == "precision") {
        if (value == "float32") {
          model.dtype = torch::kFloat32;
        } else if (value == "float64") {
          model.dtype = torch::kFloat64;
        } else {
          fail("precision must be float32 or float64");
        }
      } else if (key == "steps") {
        tr.steps = std::stoll(value);
      } else if (key == "rays_per_batch") {
        tr.rays_per_batch = std::stoi(value);
      } else if (key == "lr_backbone") {
        tr.lr_backbone = std::stod(value);
      } else if (key == "lr_model") {
        tr.lr_model = std::stod(value);
      } else if (key == "lr_decay_final") {
        tr.lr_decay_final = std::stod(value);
      } else if (key == "k_min") {
        tr.k_min = std::stoi(value);
      } else if (key == "k_max") {
        tr.k_max = std::stoi(value);
      } else if (key == "n_min") {
        tr.n_min = std::stoi(value);
      } else if (key == "n_max") {
        tr.n_max = std::stoi(value);
      } else if (key == "seed") {
        tr.seed = std::stoull(value);
      } else if (key == "deterministic") {
        tr.deterministic = parse_bool(key, value);
      } else if (key == "stratified") {
        tr.stratified = parse_bool(key, value);
      } else if (key == "log_every") {
        tr.log_every = std::stoi(value);
      } else if (key == "checkpoint_every") {
        tr.checkpoint_every = std::stoi(value);
      } else if (key == "lambda_rec") {
        w.rec = std::stod(value);
      } else if (key == "lambda_con") {
        w.con = std::stod(value);
      } else if (key == "lambda_col") {
        w.col = std::stod(value);
      } else if (key == "lambda_kl") {
        w.kl = std::stod(value);
      } else if (key == "lambda_trans") {
        w.trans = std::stod(value);
      } else if (key == "lambda_glob") {
        w.glob = std::stod(value);
      } else {
        fail("unknown config key '", key, "'");
      }
    } catch (const std::logic_error& e) {
      fail("config key ", key, ": cannot parse '", value, "'");
    }
  }
  model.validate();
  train.validate(model);
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  const auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line ", number, ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig RunConfig::from_text(const std::string& text, RunConfig base) {
  base.apply(parse_key_values(text));
  return base;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path, RunConfig base) {
  base.apply(read_key_values(path));
  return base;
}

std::string RunConfig::to_text() const {
  const auto& b = model.backbone;
  const auto& t = model.transformer;
  const auto& v = model.vae;
  const auto& tr = train;
  const auto& w = train.weights;
  std::ostringstream os;
  os << std::setprecision(17) << std::boolalpha;
  os << "encoder = " << (b.encoder == EncoderDepth::kFull ? "full" : "tiny") << '\n'
     << "feature_width = " << b.feature_width << '\n'
     << "dim = " << t.dim << '\n'
     << "view_heads = " << t.view_heads << '\n'
     << "ray_heads = " << t.ray_heads << '\n'
     << "ff_hidden = " << t.ff_hidden << '\n'
     << "depth = " << t.depth << '\n'
     << "samples_per_ray = " << t.samples_per_ray << '\n'
     << "patch_size = " << t.patch_size << '\n'
     << "decoder_width = " << t.decoder_width << '\n'
     << "position_encoding = " << t.position_encoding << '\n'
     << "vae_encoder_widths = " << join(v.encoder_widths) << '\n'
     << "vae_decoder_widths = " << join(v.decoder_widths) << '\n'
     << "latent_dim = " << v.latent_dim << '\n'
     << "precision = " << (model.dtype == torch::kFloat64 ? "float64" : "float32") << '\n'
     << "steps = " << tr.steps << '\n'
     << "rays_per_batch = " << tr.rays_per_batch << '\n'
     << "lr_backbone = " << tr.lr_backbone << '\n'
     << "lr_model = " << tr.lr_model << '\n'
     << "lr_decay_final = " << tr.lr_decay_final << '\n'
     << "k_min = " << tr.k_min << '\n'
     << "k_max = " << tr.k_max << '\n'
     << "n_min = " << tr.n_min << '\n'
     << "n_max = " << tr.n_max << '\n'
     << "seed = " << tr.seed << '\n'
     << "deterministic = " << tr.deterministic << '\n'
     << "stratified = " << tr.stratified << '\n'
     << "log_every = " << tr.log_every << '\n'
     << "checkpoint_every = " << tr.checkpoint_every << '\n'
     << "lambda_rec = " << w.rec << '\n'
     << "lambda_con = " << w.con << '\n'
     << "lambda_col = " << w.col << '\n'
     << "lambda_kl = " << w.kl << '\n'
     << "lambda_trans = " << w.trans << '\n'
     << "lambda_glob = " << w.glob << '\n';
  return os.str();
}

}  // namespace u2nerf
