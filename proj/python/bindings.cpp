// Python module exposing the pipeline: datasets, directions, the adaptive
// module, training, injection and evaluation. Matrices cross the boundary as
// 2-D float64 numpy arrays; metadata crosses as plain dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "embsteer/direction.hpp"
#include "embsteer/encoder.hpp"
#include "embsteer/errors.hpp"
#include "embsteer/evalkit.hpp"
#include "embsteer/injector.hpp"
#include "embsteer/io.hpp"
#include "embsteer/profiles.hpp"
#include "embsteer/training.hpp"

namespace py = pybind11;
using namespace embsteer;

namespace {

Matrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    std::vector<double> data(a.data(), a.data() + rows * cols);
    return Matrix(rows, cols, std::move(data));
}

py::array_t<double> array_from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::object json_to_py(const nlohmann::json& j) {
    const py::module json_mod = py::module::import("json");
    return json_mod.attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& obj) {
    if (obj.is_none()) return nlohmann::json::object();
    const py::module json_mod = py::module::import("json");
    const std::string dumped = py::cast<std::string>(json_mod.attr("dumps")(obj));
    return nlohmann::json::parse(dumped);
}

TrainConfig config_from_kwargs(std::size_t epochs, double lr, std::uint64_t seed,
                               const std::string& mode, std::size_t r) {
    TrainConfig config;
    config.epochs = epochs;
    config.learning_rate = lr;
    config.seed = seed;
    config.mode = parse_mode(mode);
    config.r = r;
    config.validate();
    return config;
}

}  // namespace

PYBIND11_MODULE(embsteer, m) {
    m.doc() = "prompt-embedding bias direction and adaptive injection toolkit";

    py::register_exception<Error>(m, "EmbsteerError");

    py::class_<PairDataset>(m, "Dataset")
        .def_static(
            "from_pairs",
            [](const std::vector<std::pair<py::array_t<double>, py::array_t<double>>>& pairs,
               const py::object& meta) {
                PairDataset ds;
                for (const auto& [neutral, biased] : pairs) {
                    EmbeddingPair pair{matrix_from_array(neutral), matrix_from_array(biased)};
                    if (ds.pairs.empty()) {
                        ds.d = pair.neutral.rows();
                        ds.l = pair.neutral.cols();
                    }
                    ds.pairs.push_back(std::move(pair));
                }
                ds.meta = py_to_json(meta);
                ds.validate();
                return ds;
            },
            py::arg("pairs"), py::arg("meta") = py::none())
        .def_static("load", [](const std::string& path) { return read_dataset(path); })
        .def("save", [](const PairDataset& ds, const std::string& path) {
            write_dataset(path, ds);
        })
        .def_property_readonly("n", &PairDataset::size)
        .def_property_readonly("d", [](const PairDataset& ds) { return ds.d; })
        .def_property_readonly("l", [](const PairDataset& ds) { return ds.l; })
        .def_property_readonly("meta", [](const PairDataset& ds) { return json_to_py(ds.meta); })
        .def("neutral",
             [](const PairDataset& ds, std::size_t i) {
                 if (i >= ds.size()) throw py::index_error();
                 return array_from_matrix(ds.pairs[i].neutral);
             })
        .def("biased",
             [](const PairDataset& ds, std::size_t i) {
                 if (i >= ds.size()) throw py::index_error();
                 return array_from_matrix(ds.pairs[i].biased);
             })
        .def("subsample", [](const PairDataset& ds, std::size_t k, std::uint64_t seed) {
            return subsample(ds, k, seed);
        }, py::arg("k"), py::arg("seed") = 0)
        .def("__len__", &PairDataset::size)
        .def("__repr__", [](const PairDataset& ds) {
            return "Dataset(n=" + std::to_string(ds.size()) + ", d=" + std::to_string(ds.d) +
                   ", l=" + std::to_string(ds.l) + ")";
        });

    py::class_<AdaptiveModule>(m, "Module")
        .def_static(
            "init",
            [](std::size_t d, std::size_t l, const std::string& mode, std::size_t r,
               std::uint64_t seed) { return init_module(d, l, parse_mode(mode), r, seed); },
            py::arg("d"), py::arg("l"), py::arg("mode") = "both", py::arg("r") = 4,
            py::arg("seed") = 0)
        .def_static("load",
                    [](const std::string& path) {
                        CheckpointFile file = read_checkpoint(path);
                        return py::make_tuple(std::move(file.module), json_to_py(file.meta));
                    })
        .def("save",
             [](const AdaptiveModule& module, const std::string& path, const py::object& meta) {
                 write_checkpoint(path, module, py_to_json(meta));
             },
             py::arg("path"), py::arg("meta") = py::none())
        .def_property_readonly("mode",
                               [](const AdaptiveModule& mm) {
                                   return std::string(to_string(mm.mode));
                               })
        .def_property_readonly("d", [](const AdaptiveModule& mm) { return mm.d; })
        .def_property_readonly("l", [](const AdaptiveModule& mm) { return mm.l; })
        .def_property_readonly("r", [](const AdaptiveModule& mm) { return mm.r; })
        .def_property_readonly("parameter_count", &AdaptiveModule::parameter_count)
        .def("attention",
             [](const AdaptiveModule& module, const py::array_t<double>& user) {
                 const AttentionMaps maps = attention(module, matrix_from_array(user));
                 py::dict out;
                 if (maps.token) out["token"] = py::cast(*maps.token);
                 if (maps.embedding) out["embedding"] = py::cast(*maps.embedding);
                 return out;
             })
        .def("adapt_direction",
             [](const AdaptiveModule& module, const py::array_t<double>& user,
                const py::array_t<double>& direction) {
                 return array_from_matrix(adapt_direction(module, matrix_from_array(user),
                                                          matrix_from_array(direction)));
             })
        .def("__repr__", [](const AdaptiveModule& mm) {
            return std::string("Module(mode=") + to_string(mm.mode) +
                   ", d=" + std::to_string(mm.d) + ", l=" + std::to_string(mm.l) +
                   ", r=" + std::to_string(mm.r) + ")";
        });

    m.def("compute_direction", [](const PairDataset& ds) {
        return array_from_matrix(compute_direction(ds));
    });
    m.def("direction_stats", [](const PairDataset& ds, const py::array_t<double>& dir) {
        return json_to_py(direction_stats(ds, matrix_from_array(dir)).to_json());
    });
    m.def(
        "save_direction",
        [](const std::string& path, const py::array_t<double>& dir, std::uint32_t source_pairs,
           const py::object& meta) {
            write_direction(path, matrix_from_array(dir), source_pairs, py_to_json(meta));
        },
        py::arg("path"), py::arg("direction"), py::arg("source_pairs") = 0,
        py::arg("meta") = py::none());
    m.def("load_direction", [](const std::string& path) {
        DirectionFile file = read_direction(path);
        return py::make_tuple(array_from_matrix(file.direction), json_to_py(file.meta));
    });

    m.def(
        "train",
        [](const PairDataset& ds, const py::array_t<double>& dir, std::size_t epochs, double lr,
           std::uint64_t seed, const std::string& mode, std::size_t r) {
            const auto [module, report] =
                train(ds, matrix_from_array(dir),
                      config_from_kwargs(epochs, lr, seed, mode, r));
            return py::make_tuple(module, json_to_py(report.to_json()));
        },
        py::arg("dataset"), py::arg("direction"), py::arg("epochs") = 50,
        py::arg("lr") = 1e-3, py::arg("seed") = 0, py::arg("mode") = "both", py::arg("r") = 4);

    m.def("loss", [](const AdaptiveModule& module, const PairDataset& ds,
                     const py::array_t<double>& dir) {
        return loss(module, ds, matrix_from_array(dir));
    });

    m.def(
        "inject",
        [](const AdaptiveModule& module, const py::array_t<double>& dir,
           const py::array_t<double>& user) {
            return array_from_matrix(
                inject(module, matrix_from_array(dir), matrix_from_array(user)));
        },
        py::arg("module"), py::arg("direction"), py::arg("user"));
    m.def(
        "inject_fixed",
        [](const py::array_t<double>& dir, const py::array_t<double>& user, double gain) {
            return array_from_matrix(
                inject_fixed(matrix_from_array(dir), matrix_from_array(user), gain));
        },
        py::arg("direction"), py::arg("user"), py::arg("gain") = 1.0);
    m.def(
        "inject_batch",
        [](const AdaptiveModule& module, const py::array_t<double>& dir,
           const std::vector<py::array_t<double>>& batch) {
            std::vector<Matrix> matrices;
            matrices.reserve(batch.size());
            for (const auto& a : batch) matrices.push_back(matrix_from_array(a));
            const auto out = inject_batch(module, matrix_from_array(dir), matrices);
            std::vector<py::array_t<double>> arrays;
            arrays.reserve(out.size());
            for (const auto& mm : out) arrays.push_back(array_from_matrix(mm));
            return arrays;
        },
        py::arg("module"), py::arg("direction"), py::arg("batch"));

    m.def("evaluate", [](const AdaptiveModule& module, const py::array_t<double>& dir,
                         const PairDataset& ds) {
        return json_to_py(evaluate(module, matrix_from_array(dir), ds).to_json());
    });
    m.def("transfer_report",
          [](const AdaptiveModule& module, const py::array_t<double>& dir,
             const PairDataset& source, const PairDataset& target) {
              const auto [a, b] = transfer_report(module, matrix_from_array(dir), source, target);
              return py::make_tuple(json_to_py(a.to_json()), json_to_py(b.to_json()));
          });

    m.def("save_batch",
          [](const std::string& path, const std::vector<py::array_t<double>>& batch,
             const py::object& meta) {
              EmbeddingBatch eb;
              for (const auto& a : batch) {
                  Matrix mm = matrix_from_array(a);
                  if (eb.embeddings.empty()) {
                      eb.d = mm.rows();
                      eb.l = mm.cols();
                  }
                  eb.embeddings.push_back(std::move(mm));
              }
              eb.meta = py_to_json(meta);
              write_batch(path, eb);
          },
          py::arg("path"), py::arg("batch"), py::arg("meta") = py::none());
    m.def("load_batch", [](const std::string& path) {
        const EmbeddingBatch eb = read_batch(path);
        std::vector<py::array_t<double>> arrays;
        arrays.reserve(eb.size());
        for (const auto& mm : eb.embeddings) arrays.push_back(array_from_matrix(mm));
        return py::make_tuple(arrays, json_to_py(eb.meta));
    });

    m.def("emit_llm_instruction", &emit_llm_instruction, py::arg("bias_description"),
          py::arg("count"));
    m.def("inspect_file", [](const std::string& path) {
        return json_to_py(inspect_file(path).to_json());
    });

    m.attr("SD21_D") = kSd21Profile.d;
    m.attr("SD21_L") = kSd21Profile.l;
}
