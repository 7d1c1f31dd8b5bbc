#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ermica/datagen.hpp"
#include "ermica/harness.hpp"
#include "ermica/metrics.hpp"
#include "ermica/network.hpp"
#include "ermica/report.hpp"
#include "ermica/transform.hpp"

namespace py = pybind11;
using namespace ermica;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) return Matrix(static_cast<std::size_t>(a.shape(0)), 1, std::vector<double>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2) throw std::invalid_argument("expected a 1-d or 2-d array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

py::dict split_dict(const Split& s) {
  py::dict d;
  d["x"] = to_array(s.x);
  d["y"] = to_array(s.y);
  d["z"] = to_array(s.z);
  return d;
}

py::dict result_dict(const EvalResult& r) {
  py::dict d;
  d["method"] = std::string(to_string(r.method));
  d["task_type"] = std::string(to_string(r.task_type));
  d["d"] = r.d;
  d["k"] = r.k;
  d["seed"] = r.seed;
  d["label_score"] = r.label_score;
  d["mcc"] = r.mcc;
  d["ica_converged"] = r.ica_converged ? py::cast(*r.ica_converged) : py::none();
  return d;
}

Dataset dataset_from(const std::string& task, std::size_t d, std::size_t k, std::uint64_t seed,
                     const std::string& generator, const std::string& latent, std::size_t n_train,
                     std::size_t n_val, std::size_t n_test) {
  DatasetConfig c;
  c.task_type = parse_task_type(task);
  c.d = d;
  c.k = k;
  c.seed = seed;
  c.generator = parse_generator_kind(generator);
  c.latent = parse_latent_distribution(latent);
  c.n_train = n_train;
  c.n_val = n_val;
  c.n_test = n_test;
  return make_dataset(c);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the ermica package";

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("train", [](const Dataset& d) { return split_dict(d.train); })
      .def_property_readonly("val", [](const Dataset& d) { return split_dict(d.val); })
      .def_property_readonly("test", [](const Dataset& d) { return split_dict(d.test); })
      .def_property_readonly("gamma", [](const Dataset& d) { return to_array(d.tasks.gamma); })
      .def_property_readonly("task_type", [](const Dataset& d) { return std::string(to_string(d.task_type())); })
      .def_property_readonly("d", &Dataset::d)
      .def_property_readonly("k", &Dataset::k)
      .def("generate", [](const Dataset& d, const Array& z) { return to_array(apply_generator(d.generator, to_matrix(z))); })
      .def("invert", [](const Dataset& d, const Array& x) { return to_array(invert_generator(d.generator, to_matrix(x))); })
      .def("save", [](const Dataset& d, const std::string& dir) { save_dataset(d, dir); });

  m.def("make_dataset", &dataset_from, py::arg("task_type"), py::arg("d"), py::arg("k"), py::arg("seed") = 0,
        py::arg("generator") = "mlp", py::arg("latent") = "binary", py::arg("n_train") = 5000,
        py::arg("n_val") = 1250, py::arg("n_test") = 5000);
  m.def("load_dataset", [](const std::string& dir) { return load_dataset(dir); });

  py::class_<PredictorModel>(m, "Model")
      .def_property_readonly("parameter_count", &PredictorModel::parameter_count)
      .def("representation", [](const PredictorModel& p, const Array& x) { return to_array(extract_representation(p, to_matrix(x))); })
      .def("predict", [](const PredictorModel& p, const Array& x) { return to_array(forward_eval(p, to_matrix(x)).output); })
      .def("save", [](const PredictorModel& p, const std::string& path) { save_model(p, TrainConfig{}, path); });
  m.def("load_model", [](const std::string& path) { return load_model(path); });

  m.def(
      "train",
      [](const Dataset& ds, std::uint64_t seed, std::optional<std::size_t> epochs) {
        TrainConfig tc = TrainConfig::defaults_for(ds.task_type());
        if (epochs) tc.epochs = *epochs;
        tc.seed = hash_combine(seed, static_cast<std::uint64_t>(CellStream::shuffle));
        RngStream init(hash_combine(seed, static_cast<std::uint64_t>(CellStream::init)));
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(init_model(init, ds.d(), ds.k()), ds, tc);
        }
        py::list history;
        for (const auto& h : res.history) history.append(py::make_tuple(h.epoch, h.train_loss, h.val_loss, h.lr));
        return py::make_tuple(res.best_model, history);
      },
      py::arg("dataset"), py::arg("seed") = 0, py::arg("epochs") = py::none(),
      "Returns (best model, [(epoch, train_loss, val_loss, lr), ...]).");

  py::class_<LinearTransform>(m, "LinearTransform")
      .def_property_readonly("matrix", [](const LinearTransform& t) { return to_array(t.matrix); })
      .def_property_readonly("offset", [](const LinearTransform& t) { return to_array(t.offset); })
      .def_property_readonly("kind", [](const LinearTransform& t) { return std::string(to_string(t.kind)); })
      .def_readonly("converged", &LinearTransform::converged)
      .def_readonly("iterations", &LinearTransform::iterations)
      .def("apply", [](const LinearTransform& t, const Array& r) { return to_array(apply_transform(t, to_matrix(r))); });

  m.def("fit_whiten", [](const Array& r) { return fit_whiten(to_matrix(r)); });
  m.def("fit_pca", [](const Array& r) { return fit_pca(to_matrix(r)); });
  m.def(
      "fit_ica",
      [](const Array& r, std::size_t max_iter, double tol, std::uint64_t seed) {
        return fit_ica(to_matrix(r), {max_iter, tol, seed});
      },
      py::arg("r"), py::arg("max_iter") = 30000, py::arg("tol") = 1e-4, py::arg("seed") = 0);

  m.def("mcc", [](const Array& z, const Array& zhat) { return mcc(to_matrix(z), to_matrix(zhat)); });
  m.def("corr_matrix", [](const Array& z, const Array& zhat) { return to_array(corr_matrix(to_matrix(z), to_matrix(zhat))); });
  m.def("hungarian_max", [](const Array& s) { return hungarian_max(to_matrix(s)).columns; });
  m.def("r2_avg", [](const Array& y, const Array& yhat) { return r2_avg(to_matrix(y), to_matrix(yhat)); });
  m.def("accuracy_avg", [](const Array& y, const Array& yhat) { return accuracy_avg(to_matrix(y), to_matrix(yhat)); });
  m.def("readout_score",
        [](const Array& r_train, const Array& y_train, const Array& r_test, const Array& y_test, const std::string& task) {
          return downstream_readout(to_matrix(r_train), to_matrix(y_train), to_matrix(r_test), to_matrix(y_test),
                                    parse_task_type(task))
              .score;
        });

  m.def(
      "run_cell",
      [](const std::string& task, std::size_t d, std::size_t k, std::uint64_t seed, const std::string& config_json) {
        ExperimentConfig c = parse_experiment_config(nlohmann::json::parse(config_json));
        std::vector<EvalResult> rows;
        {
          py::gil_scoped_release release;
          rows = run_cell(parse_task_type(task), d, k, seed, c.settings);
        }
        py::list out;
        for (const auto& r : rows) out.append(result_dict(r));
        return out;
      },
      py::arg("task_type"), py::arg("d"), py::arg("k"), py::arg("seed") = 0, py::arg("config_json") = "{}");

  m.def(
      "run_sweep",
      [](const std::string& config_json) {
        const ExperimentConfig c = parse_experiment_config(nlohmann::json::parse(config_json));
        ResultsTable t;
        {
          py::gil_scoped_release release;
          t = run_sweep(c);
          if (!t.rows.empty()) emit_report(t, c.output_dir, c.settings.record_wall_time);
        }
        py::list rows;
        for (const auto& r : t.rows) rows.append(result_dict(r));
        return py::make_tuple(rows, t.failures);
      },
      py::arg("config_json"), "Runs the sweep, writes the report and returns (rows, failures).");
}
