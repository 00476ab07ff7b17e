#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "esckit/calibrate.hpp"
#include "esckit/classify.hpp"
#include "esckit/core.hpp"
#include "esckit/diffusion.hpp"
#include "esckit/experiments.hpp"
#include "esckit/metrics.hpp"
#include "esckit/select.hpp"
#include "esckit/sigproc.hpp"
#include "esckit/toyworld.hpp"

namespace py = pybind11;

using esckit::Mat;
using esckit::RngStream;
using esckit::Vec;

namespace {

esckit::PosteriorEnsemble ensemble_of(const Mat& samples) {
  esckit::PosteriorEnsemble ens;
  Vec cond(1);
  cond << 0.0;
  ens.condition = esckit::make_signal(cond, 1.0);
  ens.samples = samples;
  return ens;
}

esckit::SynthKind synth_kind_of(const std::string& name) {
  if (name == "spiky") return esckit::SynthKind::kSpiky;
  if (name == "smooth") return esckit::SynthKind::kSmooth;
  throw esckit::ValidationError("synth kind must be 'spiky' or 'smooth'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ensemble score classification over posterior samplers";
  m.attr("__version__") = "0.1.0";

  py::register_exception<esckit::ValidationError>(m, "ValidationError",
                                                  PyExc_ValueError);
  py::register_exception<esckit::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<esckit::NumericalError>(m, "NumericalError",
                                                 PyExc_ArithmeticError);
  py::register_exception<esckit::TrainingError>(m, "TrainingError",
                                                PyExc_RuntimeError);

  py::class_<esckit::GmmWorld>(m, "World")
      .def_static("preset", &esckit::preset_world, py::arg("name"),
                  "Built-in world by name: d1m2, d2m4 or d8m2.")
      .def_static("from_json", &esckit::gmm_world_from_json, py::arg("text"))
      .def("to_json", &esckit::gmm_world_to_json)
      .def_property_readonly("dim", &esckit::GmmWorld::dim)
      .def_property_readonly("n_components", &esckit::GmmWorld::n_components)
      .def_readonly("channel_sigma", &esckit::GmmWorld::channel_sigma);

  m.def(
      "sample_joint",
      [](const esckit::GmmWorld& world, int n, std::uint64_t seed,
         std::uint64_t stream) {
        RngStream s(seed, stream);
        const auto joints = esckit::sample_joint(world, s, n);
        Mat xs(n, world.dim()), ys(n, world.dim());
        std::vector<int> cs(joints.size());
        for (std::size_t i = 0; i < joints.size(); ++i) {
          xs.row(static_cast<int>(i)) = joints[i].x.transpose();
          ys.row(static_cast<int>(i)) = joints[i].y.transpose();
          cs[i] = joints[i].c;
        }
        return py::make_tuple(xs, ys, cs);
      },
      py::arg("world"), py::arg("n"), py::arg("seed"), py::arg("stream") = 0,
      "Draw n (source, observation, class) triples; returns (xs, ys, classes).");

  m.def("class_posterior_x", &esckit::class_posterior_x, py::arg("world"),
        py::arg("x"), "Probability of class 1 given a clean source signal.");
  m.def("class_posterior_y", &esckit::class_posterior_y, py::arg("world"),
        py::arg("y"), "Probability of class 1 given an observation.");
  m.def(
      "mmse_estimate",
      [](const esckit::GmmWorld& world, const Vec& y) {
        return esckit::mmse_estimate(esckit::posterior_given_y(world, y));
      },
      py::arg("world"), py::arg("y"),
      "Posterior mean of the source given the observation.");

  m.def(
      "exact_ensemble",
      [](const esckit::GmmWorld& world, const Vec& y, int K,
         std::uint64_t seed, std::uint64_t stream) {
        RngStream s(seed, stream);
        return esckit::posterior_sample(esckit::posterior_given_y(world, y), s,
                                        K);
      },
      py::arg("world"), py::arg("y"), py::arg("K"), py::arg("seed"),
      py::arg("stream") = 0,
      "K exact posterior draws for one observation, one sample per row.");

  m.def(
      "ddim_ensemble",
      [](const esckit::GmmWorld& world, const Vec& y, int K,
         std::uint64_t seed, std::uint64_t stream, int stride) {
        const auto schedule =
            esckit::make_noise_schedule(1000, 1e-6, 1e-2, stride);
        const auto denoiser =
            esckit::analytic_gmm_denoiser(world, y, schedule);
        return esckit::ddim_sample(*denoiser, y, RngStream(seed, stream),
                                   schedule, K)
            .samples;
      },
      py::arg("world"), py::arg("y"), py::arg("K"), py::arg("seed"),
      py::arg("stream") = 0, py::arg("stride") = 10,
      "K reverse-process draws against the exact conditional denoiser.");

  using ScoreFn = std::function<double(const Vec&)>;
  m.def(
      "esc_score",
      [](const Mat& samples, const ScoreFn& classifier) {
        const auto r = esckit::esc_score(ensemble_of(samples),
                                         esckit::FunctionClassifier(classifier));
        return py::make_tuple(r.score, r.sample_scores.scores);
      },
      py::arg("samples"), py::arg("classifier"),
      "Mean classifier score over the ensemble; returns (score, per-sample "
      "scores).");
  m.def(
      "ssc_mean_score",
      [](const Mat& samples, const ScoreFn& classifier) {
        return esckit::ssc_mean_score(ensemble_of(samples),
                                      esckit::FunctionClassifier(classifier));
      },
      py::arg("samples"), py::arg("classifier"),
      "Classifier score of the ensemble mean.");
  m.def(
      "ssc_random_score",
      [](const Mat& samples, const ScoreFn& classifier, std::uint64_t seed,
         std::uint64_t stream) {
        RngStream s(seed, stream);
        return esckit::ssc_random_score(ensemble_of(samples), s,
                                        esckit::FunctionClassifier(classifier));
      },
      py::arg("samples"), py::arg("classifier"), py::arg("seed"),
      py::arg("stream") = 0,
      "Classifier score of one uniformly chosen ensemble member.");
  m.def("decide", &esckit::decide, py::arg("score"),
        py::arg("decision_threshold") = 0.5,
        "1 when the score strictly exceeds the threshold, else 0.");
  m.def("confidence", &esckit::confidence, py::arg("score"),
        "max(score, 1 - score).");

  m.def("hoeffding_radius", &esckit::hoeffding_radius, py::arg("m"),
        py::arg("delta"));
  m.def(
      "calibrate",
      [](const std::vector<double>& scores, const std::vector<int>& labels,
         double alpha, double delta, double decision_threshold) {
        esckit::CalibrationConfig cfg;
        cfg.alpha = alpha;
        cfg.delta = delta;
        cfg.lambda_grid = esckit::default_lambda_grid();
        cfg.decision_threshold = decision_threshold;
        const auto out = esckit::calibrate_lambda(scores, labels, cfg);
        py::dict d;
        d["failed"] = out.failed;
        if (!out.failed) {
          d["lambda_hat"] = out.lambda_hat;
          d["coverage"] = out.coverage_at_lambda_hat;
        }
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("alpha") = 0.1,
      py::arg("delta") = 0.1, py::arg("decision_threshold") = 0.5,
      "Select the smallest confidence threshold whose risk bound clears "
      "alpha; failed=True when no grid point qualifies.");

  m.def("auroc", &esckit::auroc, py::arg("scores"), py::arg("labels"));
  m.def(
      "aurc",
      [](const std::vector<int>& decisions, const std::vector<int>& labels,
         const std::vector<double>& confidences) {
        return esckit::aurc(
            esckit::risk_coverage(decisions, labels, confidences));
      },
      py::arg("decisions"), py::arg("labels"), py::arg("confidences"),
      "Area under the risk-coverage curve.");
  m.def(
      "confusion",
      [](const std::vector<int>& decisions, const std::vector<int>& labels) {
        const auto cm = esckit::confusion_metrics(decisions, labels);
        py::dict d;
        d["tpr"] = cm.tpr;
        d["tnr"] = cm.tnr;
        d["f1"] = cm.f1;
        d["tpr_defined"] = cm.tpr_defined;
        d["tnr_defined"] = cm.tnr_defined;
        d["f1_defined"] = cm.f1_defined;
        return d;
      },
      py::arg("decisions"), py::arg("labels"));
  m.def(
      "frechet_distance",
      [](const Mat& a, const Mat& b) {
        return esckit::frechet_distance(esckit::fit_gaussian(a),
                                        esckit::fit_gaussian(b));
      },
      py::arg("samples_a"), py::arg("samples_b"),
      "Squared 2-Wasserstein distance between Gaussian fits of two sample "
      "sets.");
  m.def("mutual_information", &esckit::mutual_information, py::arg("u"),
        py::arg("v"), py::arg("bins_u") = 32, py::arg("bins_v") = 32);

  m.def(
      "select_representatives",
      [](const Mat& samples, const std::vector<double>& scores,
         double decision_threshold) {
        const auto ens = ensemble_of(samples);
        const auto score_set = esckit::make_score_set(scores);
        double esc = 0.0;
        for (const double s : scores) esc += s;
        esc /= static_cast<double>(scores.size());
        const int decision = esckit::decide(esc, decision_threshold);
        const auto filtered =
            esckit::agreement_filter(ens, score_set, decision,
                                     decision_threshold);
        const auto density = esckit::kde(filtered.scores);
        const auto pack = [](const esckit::Selection& sel) {
          py::dict d;
          d["index"] = sel.index;
          d["score"] = sel.score;
          return d;
        };
        py::dict d;
        d["esc"] = esc;
        d["decision"] = decision;
        d["filter_fell_back"] = filtered.fallback_full;
        d["most_likely"] =
            pack(esckit::most_likely_score_ecg(ens, filtered, density));
        d["expected"] = pack(esckit::expected_score_ecg(ens, filtered));
        d["minmax"] =
            pack(esckit::minmax_score_ecg(ens, filtered, decision));
        return d;
      },
      py::arg("samples"), py::arg("scores"),
      py::arg("decision_threshold") = 0.5,
      "Pick the display members of an ensemble from its per-sample scores "
      "under the three selection rules.");

  m.def(
      "bandpass_zerophase",
      [](const Vec& values, double rate_hz, double low_hz, double high_hz,
         int order) {
        return esckit::butterworth_bandpass_zerophase(
                   esckit::make_signal(values, rate_hz), low_hz, high_hz,
                   order)
            .values;
      },
      py::arg("values"), py::arg("rate_hz"), py::arg("low_hz") = 1.0,
      py::arg("high_hz") = 47.0, py::arg("order") = 3,
      "Forward-backward Butterworth bandpass (zero phase).");
  m.def(
      "resample",
      [](const Vec& values, double rate_hz, double target_hz) {
        return esckit::resample(esckit::make_signal(values, rate_hz),
                                target_hz)
            .values;
      },
      py::arg("values"), py::arg("rate_hz"), py::arg("target_hz"));
  m.def(
      "detrend",
      [](const Vec& values) {
        return esckit::detrend(esckit::make_signal(values, 1.0)).values;
      },
      py::arg("values"), "Subtract the least-squares line.");
  m.def(
      "znormalize",
      [](const Vec& values) {
        return esckit::znormalize(esckit::make_signal(values, 1.0)).values;
      },
      py::arg("values"), "Zero mean, unit population standard deviation.");
  m.def(
      "synth_quasiperiodic",
      [](const std::string& kind, double rate_hz, double duration_s,
         double beat_hz, double jitter, std::uint64_t seed,
         std::uint64_t stream, double noise_std) {
        RngStream s(seed, stream);
        return esckit::synth_quasiperiodic(synth_kind_of(kind), rate_hz,
                                           duration_s, beat_hz, jitter, s,
                                           noise_std)
            .values;
      },
      py::arg("kind"), py::arg("rate_hz"), py::arg("duration_s"),
      py::arg("beat_hz"), py::arg("jitter"), py::arg("seed"),
      py::arg("stream") = 0, py::arg("noise_std") = 0.0,
      "Quasi-periodic test waveform ('spiky' or 'smooth').");
}
