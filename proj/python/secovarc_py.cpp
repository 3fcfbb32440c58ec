#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <string>
#include <vector>

#include "secovarc/bundle.hpp"
#include "secovarc/cli.hpp"
#include "secovarc/data.hpp"
#include "secovarc/model.hpp"
#include "secovarc/rng.hpp"
#include "secovarc/train.hpp"

namespace py = pybind11;
using namespace secovarc;

namespace {

py::tuple run_cli_captured(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

py::dict bundle_to_dict(const Bundle& b) {
  py::dict meta;
  for (const auto& [k, v] : b.meta) meta[py::str(k)] = v;
  py::dict arrays;
  for (const auto& a : b.arrays) {
    py::array_t<float> arr(std::vector<py::ssize_t>(a.shape.begin(), a.shape.end()));
    std::copy(a.values.begin(), a.values.end(), arr.mutable_data());
    arrays[py::str(a.name)] = arr;
  }
  py::dict d;
  d["meta"] = meta;
  d["arrays"] = arrays;
  return d;
}

Bundle bundle_from_dict(const py::dict& meta, const py::dict& arrays) {
  Bundle b;
  for (auto [k, v] : meta) b.set_meta(py::cast<std::string>(k), py::cast<std::string>(v));
  for (auto [k, v] : arrays) {
    auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(v);
    if (!arr) throw py::type_error("array values must be convertible to float32");
    NamedArray a;
    a.name = py::cast<std::string>(k);
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) a.shape.push_back(arr.shape(i));
    a.values.assign(arr.data(), arr.data() + arr.size());
    b.arrays.push_back(std::move(a));
  }
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Argument reasoning comprehension model: data, training and checkpoints.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<BundleError>(m, "BundleError", PyExc_ValueError);

  py::class_<ArcInstance>(m, "ArcInstance")
      .def(py::init<>())
      .def_readwrite("id", &ArcInstance::id)
      .def_readwrite("warrant0", &ArcInstance::warrant0)
      .def_readwrite("warrant1", &ArcInstance::warrant1)
      .def_readwrite("correct_label", &ArcInstance::correct_label)
      .def_readwrite("reason", &ArcInstance::reason)
      .def_readwrite("claim", &ArcInstance::claim)
      .def_readwrite("debate_title", &ArcInstance::debate_title)
      .def_readwrite("debate_info", &ArcInstance::debate_info)
      .def("__repr__", [](const ArcInstance& a) {
        return "<ArcInstance " + a.id + " label=" + std::to_string(a.correct_label) + ">";
      });

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("parse_arc_tsv", &parse_arc_tsv, py::arg("path"));
  m.def(
      "write_arc_tsv",
      [](const std::filesystem::path& p, const std::vector<ArcInstance>& instances) {
        write_arc_tsv(p, instances);
      },
      py::arg("path"), py::arg("instances"));
  m.def(
      "gen_synthetic_arc",
      [](std::size_t n, std::size_t vocab_size, std::uint64_t seed) {
        Rng rng(seed);
        return gen_synthetic_arc(n, vocab_size, rng);
      },
      py::arg("n"), py::arg("vocab_size"), py::arg("seed"));
  m.def("synthetic_oracle_label", &synthetic_oracle_label, py::arg("instance"));

  m.def(
      "read_bundle", [](const std::filesystem::path& p) { return bundle_to_dict(read_bundle(p)); },
      py::arg("path"), "Returns {'meta': {str: str}, 'arrays': {str: float32 ndarray}}.");
  m.def(
      "write_bundle",
      [](const std::filesystem::path& p, const py::dict& meta, const py::dict& arrays) {
        write_bundle(p, bundle_from_dict(meta, arrays));
      },
      py::arg("path"), py::arg("meta"), py::arg("arrays"));

  m.def(
      "evaluate_model",
      [](const std::filesystem::path& model_path, const std::vector<ArcInstance>& instances) {
        py::gil_scoped_release release;
        LoadedModel loaded = load_model(model_path);
        auto encoded = encode_instances(instances, loaded.vocab);
        return evaluate(loaded.model, encoded);
      },
      py::arg("model_path"), py::arg("instances"));
  m.def(
      "predict",
      [](const std::filesystem::path& model_path, const std::vector<ArcInstance>& instances) {
        py::gil_scoped_release release;
        LoadedModel loaded = load_model(model_path);
        std::vector<int> out;
        out.reserve(instances.size());
        for (const auto& e : encode_instances(instances, loaded.vocab))
          out.push_back(predict(loaded.model, e.claim, e.reason, e.warrant0, e.warrant1));
        return out;
      },
      py::arg("model_path"), py::arg("instances"));

  m.def("run_cli", &run_cli_captured, py::arg("args"),
        "Runs one subcommand; returns (exit_code, stdout, stderr).");
}
