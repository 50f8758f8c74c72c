#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "corefd/cli.hpp"
#include "corefd/errors.hpp"
#include "corefd/trainer.hpp"

namespace py = pybind11;
using namespace corefd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an [H, W, 3] image");
  Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array from_image(const Image& img) {
  Array out({img.height, img.width, std::size_t{3}});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Array stack_images(const std::vector<synthdata::Sample>& samples) {
  const std::size_t n = samples.size();
  const std::size_t h = n ? samples[0].image.height : 0, w = n ? samples[0].image.width : 0;
  Array out({n, h, w, std::size_t{3}});
  double* dst = out.mutable_data();
  for (const synthdata::Sample& s : samples) dst = std::copy(s.image.pixels.begin(), s.image.pixels.end(), dst);
  return out;
}

py::dict split_dict(const std::vector<synthdata::Sample>& samples) {
  const std::size_t n = samples.size();
  const std::size_t h = n ? samples[0].image.height : 0, w = n ? samples[0].image.width : 0;
  py::array_t<int> labels(n);
  py::array_t<std::uint8_t> masks({n, h, w});
  std::uint8_t* m = masks.mutable_data();
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    labels.mutable_data()[i] = samples[i].label;
    if (samples[i].has_mask()) {
      m = std::copy(samples[i].tamper_mask.begin(), samples[i].tamper_mask.end(), m);
    } else {
      m = std::fill_n(m, h * w, std::uint8_t{0});
    }
    ids.push_back(samples[i].id);
  }
  py::dict d;
  d["images"] = stack_images(samples);
  d["labels"] = labels;
  d["masks"] = masks;
  d["ids"] = ids;
  return d;
}

metrics::ScoredSet scored(const std::vector<double>& scores, const std::vector<int>& labels) {
  metrics::ScoredSet s{scores, labels};
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_corefd, m) {
  m.doc() = "corefd core bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DegenerateVectorError>(m, "DegenerateVectorError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<MetricUndefinedError>(m, "MetricUndefinedError", base.ptr());
  py::register_exception<BoundsError>(m, "BoundsError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return metrics::auc(scored(s, y)); },
        py::arg("scores"), py::arg("labels"));
  m.def(
      "tdr_at_fdr",
      [](const std::vector<double>& s, const std::vector<int>& y, double target) {
        return metrics::tdr_at_fdr(scored(s, y), target);
      },
      py::arg("scores"), py::arg("labels"), py::arg("fdr_target"));
  m.def(
      "roc_points",
      [](const std::vector<double>& s, const std::vector<int>& y) {
        std::vector<std::pair<double, double>> out;
        for (const metrics::RocPoint& p : metrics::roc_points(scored(s, y))) out.emplace_back(p.fdr, p.tdr);
        return out;
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "consistency",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& penalty) {
        return losses::consistency(a, b, losses::parse_penalty(penalty));
      },
      py::arg("f1"), py::arg("f2"), py::arg("penalty") = "cos");

  m.def(
      "gen_dataset",
      [](std::size_t n_real, std::size_t image_size, std::uint64_t seed) {
        synthdata::GenConfig cfg;
        cfg.n_real = n_real;
        cfg.image_size = image_size;
        cfg.seed = seed;
        const synthdata::DatasetSplit ds = synthdata::gen_dataset(cfg);
        py::dict d;
        d["train"] = split_dict(ds.train);
        d["val"] = split_dict(ds.val);
        d["test"] = split_dict(ds.test);
        d["brightness_auc"] = ds.brightness_auc;
        return d;
      },
      py::arg("n_real") = 100, py::arg("image_size") = 64, py::arg("seed") = 0);

  m.def(
      "augment",
      [](const Array& image, const std::string& strategy, std::uint64_t seed, std::uint64_t index) {
        augment::AugStrategy s;
        s.kind = augment::parse_aug_kind(strategy);
        RngStream rng(seed, 0, index, 0);
        return from_image(augment::apply_strategy(to_image(image), s, rng));
      },
      py::arg("image"), py::arg("strategy"), py::arg("seed") = 0, py::arg("index") = 0);

  py::class_<model::Model>(m, "Model")
      .def_property_readonly("input_size", [](const model::Model& md) { return md.config.input_size; })
      .def_property_readonly("channels", [](const model::Model& md) { return md.config.channels; })
      .def(
          "predict",
          [](const model::Model& md, const Array& images) {
            if (images.ndim() != 4) throw ShapeError("expected an [N, H, W, 3] batch");
            std::vector<synthdata::Sample> samples(static_cast<std::size_t>(images.shape(0)));
            const auto stride = static_cast<std::size_t>(images.shape(1) * images.shape(2) * 3);
            for (std::size_t i = 0; i < samples.size(); ++i) {
              samples[i].image = Image(static_cast<std::size_t>(images.shape(1)), static_cast<std::size_t>(images.shape(2)));
              std::copy_n(images.data() + i * stride, stride, samples[i].image.pixels.begin());
            }
            return trainer::predict(md, samples);
          },
          py::arg("images"))
      .def(
          "cam",
          [](const model::Model& md, const Array& image) {
            const Image img = to_image(image);
            const model::Inference inf = model::infer(md, to_batch({&img}));
            const std::size_t d = inf.feature_maps.dim(1), s = inf.feature_maps.dim(2);
            const ndgrad::Tensor maps({d, s, s}, std::vector<double>(inf.feature_maps.data().begin(),
                                                                       inf.feature_maps.data().end()));
            const std::vector<double> heat =
                resize_map(model::cam(maps, md.classifier, model::kFakeClass), s, s, img.height, img.width);
            Array out({img.height, img.width});
            std::copy(heat.begin(), heat.end(), out.mutable_data());
            return out;
          },
          py::arg("image"));

  m.def(
      "init_model",
      [](std::size_t input_size, const std::vector<std::size_t>& channels, std::uint64_t seed) {
        model::ModelConfig cfg{input_size, channels};
        cfg.validate();
        return model::init_model(cfg, seed);
      },
      py::arg("input_size") = 64, py::arg("channels") = std::vector<std::size_t>{16, 32, 64, 128},
      py::arg("seed") = 0);
  m.def(
      "load_model", [](const std::string& path) { return trainer::load_checkpoint(path).model; }, py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"corefd"};
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
