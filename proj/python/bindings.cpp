#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <string>
#include <vector>

#include "tcvae/config.hpp"
#include "tcvae/data.hpp"
#include "tcvae/decomposition.hpp"
#include "tcvae/metrics.hpp"
#include "tcvae/model.hpp"
#include "tcvae/trainer.hpp"

namespace py = pybind11;
using namespace tcvae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<DiagonalGaussian> posteriors_from(const Array& means, const Array& log_vars) {
  if (means.ndim() != 2 || log_vars.ndim() != 2 || means.shape(0) != log_vars.shape(0) ||
      means.shape(1) != log_vars.shape(1)) {
    throw std::invalid_argument("means and log_vars must both be [N, J]");
  }
  const auto n = static_cast<std::size_t>(means.shape(0));
  const auto j = static_cast<std::size_t>(means.shape(1));
  std::vector<DiagonalGaussian> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(std::vector<double>(means.data() + i * j, means.data() + (i + 1) * j),
                     std::vector<double>(log_vars.data() + i * j, log_vars.data() + (i + 1) * j));
  }
  return out;
}

py::tuple split_posteriors(const std::vector<DiagonalGaussian>& qs) {
  const std::size_t n = qs.size();
  const std::size_t j = n ? qs[0].dim() : 0;
  Array mu({n, j}), lv({n, j});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(qs[i].mean.begin(), qs[i].mean.end(), mu.mutable_data() + i * j);
    std::copy(qs[i].log_variance.begin(), qs[i].log_variance.end(), lv.mutable_data() + i * j);
  }
  return py::make_tuple(mu, lv);
}

ExperimentConfig config_from(const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c;
  for (const auto& [k, v] : overrides) {
    try {
      apply_config_value(c, k, v);
    } catch (const std::exception& e) {
      throw std::invalid_argument("'" + k + "': " + e.what());
    }
  }
  c.train.validate();
  c.sweep.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "beta-TCVAE core";

  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<RenderedDataset>(m, "Dataset")
      .def_readonly("spec", &RenderedDataset::spec)
      .def_property_readonly("size", &RenderedDataset::size)
      .def_property_readonly("images", [](const RenderedDataset& d) { return to_array(d.images); })
      .def_property_readonly("factor_names",
                             [](const RenderedDataset& d) {
                               std::vector<std::string> out;
                               for (const auto& f : d.factors) out.push_back(f.name);
                               return out;
                             })
      .def_property_readonly("factor_values",
                             [](const RenderedDataset& d) {
                               std::vector<std::vector<double>> out;
                               for (const auto& f : d.factors) out.push_back(f.values);
                               return out;
                             })
      .def_property_readonly("levels", [](const RenderedDataset& d) { return d.table.levels; })
      .def_property_readonly("probabilities", &RenderedDataset::index_probabilities)
      .def_property_readonly("uniform", &RenderedDataset::uniform);

  m.def("make_dataset", &make_dataset, py::arg("spec"));
  m.def("render_bump", &render_bump, py::arg("cx"), py::arg("cy"), py::arg("sigma"));

  py::class_<VaeModel>(m, "Model")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t latent_dim,
                       std::uint64_t seed, bool zero_init) {
             ModelConfig c;
             c.input_dim = input_dim;
             c.hidden = std::move(hidden);
             c.latent_dim = latent_dim;
             c.seed = seed;
             c.zero_init_encoder_output = zero_init;
             return VaeModel(c);
           }),
           py::arg("input_dim") = 256, py::arg("hidden") = std::vector<std::size_t>{128},
           py::arg("latent_dim") = 6, py::arg("seed") = 0, py::arg("zero_init_encoder_output") = false)
      .def_static("load", &VaeModel::load, py::arg("path"))
      .def("save", &VaeModel::save, py::arg("path"))
      .def_property_readonly("latent_dim", &VaeModel::latent_dim)
      .def_property_readonly("input_dim", &VaeModel::input_dim)
      .def_property_readonly("hidden", [](const VaeModel& v) { return v.config().hidden; })
      .def("encode",
           [](const VaeModel& v, const Array& images) {
             return split_posteriors(v.encode_all(to_tensor(images)));
           },
           py::arg("images"))
      .def("decode_logits",
           [](const VaeModel& v, std::vector<double> z) { return v.decode_logits(z); }, py::arg("z"))
      .def("param_names",
           [](const VaeModel& v) {
             std::vector<std::string> out;
             for (const auto& p : v.params().params()) out.push_back(p.name);
             return out;
           })
      .def("get_param",
           [](const VaeModel& v, const std::string& name) { return to_array(v.params().get(name).value); },
           py::arg("name"))
      .def("set_param",
           [](VaeModel& v, const std::string& name, const Array& value) {
             auto& p = v.params().get(name);
             Tensor t = to_tensor(value);
             if (t.shape() != p.value.shape()) throw std::invalid_argument("shape mismatch for " + name);
             p.value = std::move(t);
           },
           py::arg("name"), py::arg("value"));

  m.def("exact_aggregated_logdensity",
        [](std::vector<double> z, const Array& means, const Array& log_vars) {
          const auto qs = posteriors_from(means, log_vars);
          return exact_aggregated_posterior_logdensity(z, qs);
        },
        py::arg("z"), py::arg("means"), py::arg("log_vars"));

  m.def("mss_log_f",
        [](double log_own, const std::vector<double>& log_others, std::size_t m, std::size_t n) {
          return mss_log_f(log_own, log_others, m, n);
        },
        py::arg("log_own"), py::arg("log_others"), py::arg("m"),
        py::arg("dataset_size"));

  m.def("exact_decomposition_json",
        [](const Array& means, const Array& log_vars, std::size_t samples, std::uint64_t seed) {
          const auto qs = posteriors_from(means, log_vars);
          RngStream rng(seed, 0xDEC0);
          py::gil_scoped_release release;
          return to_json(exact_decomposition(qs, rng, samples)).dump();
        },
        py::arg("means"), py::arg("log_vars"), py::arg("samples") = 100000, py::arg("seed") = 0);

  m.def("minibatch_log_qz",
        [](const Array& z, const Array& means, const Array& log_vars, std::vector<std::size_t> indices,
           std::size_t dataset_size, const std::string& estimator) {
          const auto qs = posteriors_from(means, log_vars);
          const auto batch = make_minibatch_latents(to_tensor(z), qs, std::move(indices), dataset_size);
          return estimate_log_qz(batch, parse_estimator(estimator));
        },
        py::arg("z"), py::arg("means"), py::arg("log_vars"), py::arg("indices"),
        py::arg("dataset_size"), py::arg("estimator"));

  m.def("mig_json",
        [](const Array& means, const Array& log_vars, const std::string& dataset, std::uint64_t seed,
           std::size_t samples_per_value, std::size_t entropy_samples) {
          const auto qs = posteriors_from(means, log_vars);
          const auto data = make_dataset(dataset);
          RngStream rng(seed, 0xE7A1);
          MigOptions opt;
          opt.samples_per_value = samples_per_value;
          opt.entropy_samples = entropy_samples;
          py::gil_scoped_release release;
          return to_json(compute_mig(qs, data, rng, opt)).dump();
        },
        py::arg("means"), py::arg("log_vars"), py::arg("dataset"), py::arg("seed") = 0,
        py::arg("samples_per_value") = 10000, py::arg("entropy_samples") = 10000);

  m.def("higgins",
        [](const Array& means, const Array& log_vars, const std::string& dataset, std::size_t L,
           std::uint64_t seed) {
          const auto qs = posteriors_from(means, log_vars);
          const auto data = make_dataset(dataset);
          HigginsConfig c;
          c.L = L;
          RngStream rng(seed, 0xE7A1);
          py::gil_scoped_release release;
          return higgins_metric(qs, data, c, rng).accuracy;
        },
        py::arg("means"), py::arg("log_vars"), py::arg("dataset"), py::arg("L") = 10,
        py::arg("seed") = 0);

  m.def("kim_mnih",
        [](const Array& means, const Array& log_vars, const std::string& dataset, std::uint64_t seed) {
          const auto qs = posteriors_from(means, log_vars);
          const auto data = make_dataset(dataset);
          RngStream rng(seed, 0xE7A1);
          py::gil_scoped_release release;
          return kim_mnih_metric(qs, data, KimMnihConfig{}, rng).accuracy;
        },
        py::arg("means"), py::arg("log_vars"), py::arg("dataset"), py::arg("seed") = 0);

  m.def("train_json",
        [](const std::map<std::string, std::string>& overrides) {
          const auto config = config_from(overrides);
          py::gil_scoped_release release;
          auto result = train(config.train);
          std::string record = to_json(result.record).dump();
          return std::make_pair(std::move(result.model), std::move(record));
        },
        py::arg("overrides") = std::map<std::string, std::string>{});

  m.def("sweep_json",
        [](const std::map<std::string, std::string>& overrides) {
          const auto config = config_from(overrides);
          py::gil_scoped_release release;
          const auto records = sweep(config.sweep, config.train);
          nlohmann::json out = nlohmann::json::array();
          for (const auto& r : records) out.push_back(to_json(r));
          return out.dump();
        },
        py::arg("overrides") = std::map<std::string, std::string>{});

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
    bool undefined = false;
    const double r = pearson_correlation(x, y, &undefined);
    return undefined ? py::none() : py::cast(r);
  });
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    bool undefined = false;
    const double r = spearman_correlation(x, y, &undefined);
    return undefined ? py::none() : py::cast(r);
  });
  m.def("sign_test_p_value", &sign_test_p_value, py::arg("positive"), py::arg("negative"));
}
