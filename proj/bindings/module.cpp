#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "advdet/attacks.hpp"
#include "advdet/dataset.hpp"
#include "advdet/detector.hpp"
#include "advdet/distortions.hpp"
#include "advdet/evaluation.hpp"
#include "advdet/experiment.hpp"
#include "advdet/io.hpp"
#include "advdet/model.hpp"

namespace py = pybind11;
using namespace advdet;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = static_cast<int>(arr.shape(i));
    std::vector<float> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> arr(shape);
    std::copy(t.values().begin(), t.values().end(), arr.mutable_data());
    return arr;
}

DistortionSet distortions_from_names(const std::vector<std::string>& names) {
    return resolve_distortions(names);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "replica-signature adversarial example detector";

    py::class_<LabeledDataset>(m, "Dataset")
        .def_property_readonly("num_classes", [](const LabeledDataset& d) { return d.num_classes; })
        .def("__len__", [](const LabeledDataset& d) { return d.size(); })
        .def("image", [](const LabeledDataset& d, std::size_t i) {
            if (i >= d.size()) throw py::index_error();
            return array_from_tensor(d.images[i]);
        })
        .def("label", [](const LabeledDataset& d, std::size_t i) {
            if (i >= d.size()) throw py::index_error();
            return d.labels[i];
        });

    m.def("generate_dataset",
          [](int n_classes, int per_class, int image_size, std::uint32_t seed, bool test) {
              return generate_synthetic_dataset(n_classes, per_class, image_size, seed,
                                                test ? Split::Test : Split::Train);
          },
          py::arg("n_classes"), py::arg("per_class"), py::arg("image_size"), py::arg("seed"),
          py::arg("test") = false);
    m.def("load_dataset", &io::load_dataset, py::arg("path"));
    m.def("save_dataset", &io::save_dataset, py::arg("dataset"), py::arg("path"));

    py::class_<Model>(m, "Model")
        .def(py::init([](int image_size, int channels, int n_classes, std::uint32_t seed,
                         const std::string& arch) {
                 if (arch == "substitute") {
                     return Model(ModelConfig::desk_substitute(image_size, image_size, channels,
                                                               n_classes, seed));
                 }
                 return Model(ModelConfig::desk_cnn(image_size, image_size, channels, n_classes, seed));
             }),
             py::arg("image_size"), py::arg("channels"), py::arg("n_classes"), py::arg("seed"),
             py::arg("arch") = "victim")
        .def("predict",
             [](const Model& m_, const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
                 return array_from_tensor(m_.predict(tensor_from_array(img)));
             })
        .def("predicted_class",
             [](const Model& m_, const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
                 return m_.predicted_class(tensor_from_array(img));
             })
        .def("accuracy", [](const Model& m_, const LabeledDataset& d) { return m_.accuracy_on(d); })
        .def("train",
             [](Model& m_, const LabeledDataset& data, int epochs, int batch_size, float lr,
                std::uint32_t seed) {
                 TrainOptions opt{epochs, batch_size, lr, seed};
                 train(m_, data, opt);
             },
             py::arg("data"), py::arg("epochs") = 10, py::arg("batch_size") = 32,
             py::arg("lr") = 0.1f, py::arg("seed") = 0)
        .def("adversarial_finetune",
             [](Model& m_, const LabeledDataset& data, float epsilon, int epochs, int batch_size,
                float lr, std::uint32_t seed) {
                 TrainOptions opt{epochs, batch_size, lr, seed};
                 adversarial_finetune(m_, data, opt, epsilon);
             },
             py::arg("data"), py::arg("epsilon"), py::arg("epochs") = 4, py::arg("batch_size") = 32,
             py::arg("lr") = 0.1f, py::arg("seed") = 0)
        .def_property_readonly("fingerprint", &Model::fingerprint)
        .def("save", [](const Model& m_, const std::string& path) { io::save_checkpoint(m_, path); })
        .def_static("load", &io::load_checkpoint, py::arg("path"));

    m.def("fgsm",
          [](const Model& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             int label, float epsilon) {
              const AttackResult r = fgsm(model, tensor_from_array(img), label, epsilon);
              return py::make_tuple(array_from_tensor(r.adversarial), r.success, r.l2_norm);
          },
          py::arg("model"), py::arg("image"), py::arg("label"), py::arg("epsilon"));
    m.def("deepfool",
          [](const Model& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             int max_iterations, float overshoot) {
              AttackConfig cfg;
              cfg.kind = AttackKind::DeepFool;
              cfg.max_iterations = max_iterations;
              cfg.overshoot = overshoot;
              const AttackResult r = deepfool(model, tensor_from_array(img), cfg);
              return py::make_tuple(array_from_tensor(r.adversarial), r.success, r.l2_norm);
          },
          py::arg("model"), py::arg("image"), py::arg("max_iterations") = 50,
          py::arg("overshoot") = 0.02f);
    m.def("carlini_wagner",
          [](const Model& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             float kappa) {
              AttackConfig cfg;
              cfg.kind = AttackKind::CarliniWagner;
              const AttackResult r = carlini_wagner(model, tensor_from_array(img), kappa, cfg);
              return py::make_tuple(array_from_tensor(r.adversarial), r.success, r.l2_norm);
          },
          py::arg("model"), py::arg("image"), py::arg("kappa") = 0.0f);

    py::class_<ClassStatistics>(m, "ClassStatistics")
        .def_property_readonly("num_classes", [](const ClassStatistics& s) { return s.num_classes; })
        .def_property_readonly("fingerprint", [](const ClassStatistics& s) { return s.model_fingerprint; })
        .def("save", [](const ClassStatistics& s, const std::string& path) { io::save_statistics(s, path); })
        .def_static("load", &io::load_statistics, py::arg("path"));

    m.def("compute_class_statistics",
          [](const Model& model, const LabeledDataset& train, const std::vector<std::string>& distortions,
             bool include_misclassified) {
              return compute_class_statistics(model, train, distortions_from_names(distortions),
                                              include_misclassified);
          },
          py::arg("model"), py::arg("train"), py::arg("distortions"),
          py::arg("include_misclassified") = true);
    m.def("detect",
          [](const Model& model, const ClassStatistics& stats,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& img, double threshold) {
              const DetectionVerdict v = detect(model, stats, tensor_from_array(img), threshold);
              py::dict d;
              d["predicted_class"] = v.predicted_class;
              d["score"] = v.score;
              d["threshold"] = v.threshold;
              d["legitimate"] = v.legitimate;
              return d;
          },
          py::arg("model"), py::arg("stats"), py::arg("image"), py::arg("threshold"));
    m.def("fs_score",
          [](const Model& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             const std::vector<std::string>& distortions) {
              return fs_score(model, tensor_from_array(img), distortions_from_names(distortions));
          },
          py::arg("model"), py::arg("image"), py::arg("distortions"));
    m.def("fs_legitimacy", &fs_legitimacy, py::arg("fs_score"));
    m.def("projection_score", &projection_score, py::arg("signature"), py::arg("mu"));
    m.def("calibrate_threshold",
          [](std::vector<double> scores, double target_fpr) {
              return calibrate_threshold(std::move(scores), target_fpr);
          },
          py::arg("legitimate_scores"), py::arg("target_fpr"));

    m.def("apply_distortion",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             const std::string& name) {
              return array_from_tensor(apply_distortion(tensor_from_array(img), parse_distortion(name)));
          },
          py::arg("image"), py::arg("name"));

    m.def("auc_from_scores",
          [](const std::vector<double>& legitimate, const std::vector<double>& adversarial) {
              ScoredSet s;
              for (std::size_t i = 0; i < legitimate.size(); ++i) {
                  s.records.push_back({static_cast<int>(i), legitimate[i], false, -1});
              }
              for (std::size_t i = 0; i < adversarial.size(); ++i) {
                  s.records.push_back({static_cast<int>(i), adversarial[i], true, -1});
              }
              return auc(roc_curve(s));
          },
          py::arg("legitimate_scores"), py::arg("adversarial_scores"));
}
