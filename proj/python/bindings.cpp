#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "u2nerf/data_io.hpp"
#include "u2nerf/evaluation.hpp"
#include "u2nerf/formation.hpp"
#include "u2nerf/losses.hpp"
#include "u2nerf/trainer.hpp"

namespace py = pybind11;
using namespace u2nerf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

Array to_array(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["rec"] = r.rec;
  d["con"] = r.con;
  d["col"] = r.col;
  d["kl"] = r.kl;
  d["trans"] = r.trans;
  d["glob"] = r.glob;
  d["total"] = r.total;
  return d;
}

LossWeights weights_from(const std::map<std::string, double>& values) {
  LossWeights w;
  for (const auto& [key, v] : values) {
    if (key == "rec") {
      w.rec = v;
    } else if (key == "con") {
      w.con = v;
    } else if (key == "col") {
      w.col = v;
    } else if (key == "kl") {
      w.kl = v;
    } else if (key == "trans") {
      w.trans = v;
    } else if (key == "glob") {
      w.glob = v;
    } else {
      fail("unknown loss weight '", key, "'");
    }
  }
  return w;
}

DegradationParams degradation(const std::array<double, 3>& beta_d, const std::array<double, 3>& beta_b,
                              const std::array<double, 3>& ambient) {
  DegradationParams p;
  p.beta_d = beta_d;
  p.beta_b = beta_b;
  p.ambient = ambient;
  return p;
}

ToySceneConfig toy_config(int views, int size, uint64_t seed) {
  ToySceneConfig c;
  c.views = views;
  c.size = size;
  c.seed = seed;
  return c;
}

py::dict components_dict(const ViewComponents& v) {
  py::dict d;
  d["J"] = to_array(v.radiance);
  d["I"] = to_array(v.composed);
  d["T_D"] = to_array(v.direct_transmission);
  d["T_B"] = to_array(v.backscatter_transmission);
  d["A"] = to_array(v.ambient);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Underwater radiance field decomposition: formation model, losses, metrics and training.";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "compose",
      [](const Array& j, const Array& t_d, const Array& t_b, const Array& a) {
        return to_array(compose({to_tensor(j), to_tensor(t_d), to_tensor(t_b)}, to_tensor(a)));
      },
      py::arg("J"), py::arg("T_D"), py::arg("T_B"), py::arg("A"), "I = J T_D + (1 - T_B) A.");

  m.def("l_rec", [](const Array& p, const Array& t) { return scalar(l_rec(to_tensor(p), to_tensor(t))); },
        py::arg("predicted"), py::arg("target"));
  m.def("l_con", [](const Array& j) { return scalar(l_con(to_tensor(j))); }, py::arg("J"));
  m.def("l_col", [](const Array& j) { return scalar(l_col(to_tensor(j))); }, py::arg("J"));
  m.def("l_kl", [](const Array& mu, const Array& lv) { return scalar(l_kl(to_tensor(mu), to_tensor(lv))); },
        py::arg("mu"), py::arg("log_var"));
  m.def("l_trans", [](const Array& tb) { return scalar(l_trans(to_tensor(tb))); }, py::arg("T_B"));
  m.def(
      "l_glob", [](const Array& a, int window) { return scalar(l_glob(to_tensor(a), window)); },
      py::arg("A"), py::arg("window") = kGlobalWindow);
  m.def(
      "total_loss",
      [](const std::array<double, 6>& terms, const std::map<std::string, double>& weights) {
        return report_dict(total_loss(terms, weights_from(weights)));
      },
      py::arg("terms"), py::arg("weights") = std::map<std::string, double>{},
      "Weighted sum of (rec, con, col, kl, trans, glob); unspecified weights keep their defaults.");

  m.def(
      "psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); }, py::arg("a"),
      py::arg("b"));
  m.def("uicm", [](const Array& x) { return uicm(to_tensor(x)); }, py::arg("image"));
  m.def("uiqm", [](const Array& x) { return uiqm(to_tensor(x)); }, py::arg("image"));
  m.def("uciqe", [](const Array& x) { return uciqe(to_tensor(x)); }, py::arg("image"));

  m.def(
      "synthesize_underwater",
      [](const Array& clean, const Array& depth, const std::array<double, 3>& beta_d,
         const std::array<double, 3>& beta_b, const std::array<double, 3>& ambient) {
        return to_array(
            synthesize_underwater(to_tensor(clean), to_tensor(depth), degradation(beta_d, beta_b, ambient)));
      },
      py::arg("clean"), py::arg("depth"), py::arg("beta_d"), py::arg("beta_b"), py::arg("ambient"));

  m.def(
      "make_toy_scene",
      [](int views, int size, uint64_t seed) {
        const auto scene = make_toy_scene(toy_config(views, size, seed));
        py::list images, clean, depth, t_b;
        for (size_t v = 0; v < scene.dataset.size(); ++v) {
          images.append(to_array(scene.dataset.images[v]));
          clean.append(to_array(scene.clean[v]));
          depth.append(to_array(scene.depth[v]));
          t_b.append(to_array(scene.backscatter_transmission(v)));
        }
        py::dict d;
        d["images"] = images;
        d["clean"] = clean;
        d["depth"] = depth;
        d["T_B"] = t_b;
        d["view_ids"] = scene.dataset.view_ids;
        return d;
      },
      py::arg("views") = 8, py::arg("size") = 64, py::arg("seed") = 0);
  m.def(
      "write_toy_scene",
      [](const std::filesystem::path& out, int views, int size, uint64_t seed) {
        write_scene(make_toy_scene(toy_config(views, size, seed)).dataset, out);
      },
      py::arg("out"), py::arg("views") = 8, py::arg("size") = 64, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::filesystem::path& scene_dir, const std::filesystem::path& checkpoint_path,
         const std::string& preset, const std::map<std::string, std::string>& overrides) {
        require(preset == "tiny" || preset == "full", "preset must be tiny or full");
        auto cfg = preset == "tiny" ? RunConfig::tiny() : RunConfig::full();
        cfg.apply(overrides);
        py::list history;
        {
          py::gil_scoped_release release;
          Trainer trainer(cfg, load_scene(scene_dir));
          std::vector<LossReport> reports;
          trainer.run(std::nullopt, [&](int64_t, const LossReport& r) {
            reports.push_back(r);
            return true;
          });
          save_checkpoint(trainer.checkpoint(), checkpoint_path);
          py::gil_scoped_acquire acquire;
          for (const auto& r : reports) history.append(report_dict(r));
        }
        return history;
      },
      py::arg("scene"), py::arg("checkpoint"), py::arg("preset") = "tiny",
      py::arg("overrides") = std::map<std::string, std::string>{},
      "Trains on a scene directory, writes the checkpoint and returns the logged losses.");

  m.def(
      "render",
      [](const std::filesystem::path& checkpoint_path, const std::filesystem::path& scene_dir, size_t view) {
        const auto ckpt = load_checkpoint(checkpoint_path);
        const auto cfg = RunConfig::from_text(ckpt.config_text);
        auto model = model_from_checkpoint(ckpt);
        const auto dataset = load_scene(scene_dir);
        require(view < dataset.size(), "view ", view, " out of range for ", dataset.size(), " views");
        const int n = std::min<int>(cfg.train.n_max, static_cast<int>(dataset.size()) - 1);
        return components_dict(render_view(model, dataset, dataset.cameras[view], n, view));
      },
      py::arg("checkpoint"), py::arg("scene"), py::arg("view"),
      "Renders J, I, T_D, T_B and A of one view with the view itself held out of the sources.");
}
