#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cfdebias/harness.hpp"

namespace py = pybind11;

namespace {

using Pair = std::array<double, 2>;

cfd::LogitVector lv(const Pair& p) { return cfd::LogitVector{p}; }

std::vector<cfd::PredictionRecord> records(const std::vector<int>& genders, const std::vector<int>& labels,
                                           const std::vector<int>& preds) {
  if (genders.size() != labels.size() || labels.size() != preds.size()) {
    throw std::invalid_argument("genders, labels and predictions must have equal length");
  }
  std::vector<cfd::PredictionRecord> out;
  for (std::size_t i = 0; i < genders.size(); ++i) {
    out.push_back({"s" + std::to_string(i), cfd::GenderCode{genders[i]}, cfd::DepressionLabel{labels[i]},
                   cfd::DepressionLabel{preds[i]}, std::nullopt});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_cfdebias, m) {
  m.doc() = "Counterfactual gender debiasing core";

  // counterfactual
  m.def("fuse", [](const Pair& d_g, const Pair& d_f) { return cfd::fuse(lv(d_g), lv(d_f)).scores; });
  m.def("tie", [](const Pair& f, const Pair& cf) { return cfd::tie(lv(f), lv(cf)).scores; });
  m.def("loss_cls", [](const Pair& d_g, const Pair& fused, int label) {
    return cfd::loss_cls(lv(d_g), lv(fused), cfd::DepressionLabel{label});
  });
  m.def("loss_kl", [](const Pair& f, const Pair& cf) { return cfd::loss_kl(lv(f), lv(cf)); });
  m.def("predict_tie", [](const Pair& t) { return cfd::predict_tie(lv(t)).value; });
  m.def("predict_factual", [](const Pair& f) { return cfd::predict_factual(lv(f)).value; });

  // fairness
  m.def(
      "fairness_report_json",
      [](const std::vector<int>& g, const std::vector<int>& y, const std::vector<int>& p, const std::string& avg) {
        return cfd::Json(cfd::fairness_report(records(g, y, p), cfd::averaging_from_string(avg))).dump();
      },
      py::arg("genders"), py::arg("labels"), py::arg("predictions"), py::arg("averaging") = "macro");
  m.def("equal_accuracy", [](const std::vector<int>& g, const std::vector<int>& y, const std::vector<int>& p) {
    return cfd::equal_accuracy(records(g, y, p));
  });
  m.def("disparate_impact", [](const std::vector<int>& g, const std::vector<int>& y, const std::vector<int>& p) {
    return cfd::disparate_impact(records(g, y, p));
  });

  // corpus and baselines (manifests travel as JSON text)
  m.def("generate_synthetic_json", [](const std::string& config) {
    const auto corpus = cfd::generate_synthetic(cfd::Json::parse(config).get<cfd::SynthConfig>());
    return std::pair(cfd::Json(corpus.train).dump(), cfd::Json(corpus.test).dump());
  });
  m.def("sub_sample_json", [](const std::string& manifest, std::uint64_t seed) {
    return cfd::Json(cfd::sub_sample(cfd::Json::parse(manifest).get<cfd::CorpusManifest>(), seed)).dump();
  });
  m.def("balance_by_augmentation_json", [](const std::string& manifest, std::uint64_t seed) {
    return cfd::Json(cfd::balance_by_augmentation(cfd::Json::parse(manifest).get<cfd::CorpusManifest>(), seed))
        .dump();
  });
  m.def(
      "mixfeat_augment",
      [](const cfd::Matrix& features, std::size_t n_new, std::uint64_t seed) {
        cfd::CellFeatures cell;
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
          cell.ids.push_back(std::to_string(i));
          cell.features.push_back(features.row(i).transpose());
        }
        py::list out;
        for (const auto& a : cfd::mixfeat_augment(cell, n_new, seed)) {
          out.append(py::make_tuple(a.features, std::stoul(a.parents.first), std::stoul(a.parents.second), a.lambda));
        }
        return out;
      },
      py::arg("features"), py::arg("n_new"), py::arg("seed"));

  // dsp and aggregation
  m.def(
      "stft_spectrogram",
      [](const std::vector<double>& audio, int sample_rate, int n_fft, int hop) {
        return cfd::dsp::stft_spectrogram(audio, cfd::dsp::StftConfig{sample_rate, n_fft, hop}).data;
      },
      py::arg("audio"), py::arg("sample_rate") = 8000, py::arg("n_fft") = 256, py::arg("hop") = 128);
  m.def(
      "segment_clips",
      [](const cfd::Matrix& spec, int length, int stride) {
        return cfd::dsp::segment_clips(cfd::dsp::Spectrogram{spec, 0, 0}, length, stride).clips;
      },
      py::arg("spectrogram"), py::arg("length") = 64, py::arg("stride") = 32);
  m.def("mel_spectrogram", [](const std::vector<double>& audio) { return cfd::dsp::mel_spectrogram(audio).data; });
  m.def("resample", [](const std::vector<double>& audio, int src, int dst) { return cfd::dsp::resample(audio, src, dst); });
  m.def("eep_aggregate", &cfd::eep_aggregate);

  // harness
  m.def("train", [](const std::string& config_path) {
    return cfd::train(cfd::load_experiment_config(config_path)).path.string();
  });
  m.def(
      "evaluate_json",
      [](const std::string& checkpoint, const std::string& test, std::optional<std::string> out) {
        cfd::EvalOptions options;
        if (out) options.output_dir = *out;
        cfd::Json j = cfd::evaluate(checkpoint, test, options);
        return j.dump();
      },
      py::arg("checkpoint"), py::arg("test_manifest"), py::arg("output_dir") = std::nullopt);
  m.def(
      "report",
      [](const std::string& dir, const std::string& format) {
        return cfd::emit_report(cfd::compare(cfd::collect_runs(dir)), cfd::report_format_from_string(format));
      },
      py::arg("run_dir"), py::arg("format") = "text");
}
