#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
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

namespace fs = std::filesystem;
using esckit::Mat;
using esckit::Vec;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCalibrationFailed = 3;
constexpr int kExitNumerical = 4;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw esckit::ParseError("cannot open config " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw esckit::ParseError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw esckit::ParseError("config must be a JSON object");
  return cfg;
}

esckit::GmmWorld world_from_config(const json& w) {
  if (!w.is_object()) throw esckit::ParseError("world: expected an object");
  if (w.contains("preset")) {
    return esckit::preset_world(w.at("preset").get<std::string>());
  }
  if (w.contains("file")) {
    return esckit::gmm_world_load(w.at("file").get<std::string>());
  }
  return esckit::gmm_world_from_json(w.dump());
}

esckit::NoiseSchedule schedule_from_config(const json& cfg) {
  int n_steps = 1000, stride = 10;
  double beta_start = 1e-6, beta_end = 1e-2;
  if (cfg.contains("ddim")) {
    const json& d = cfg.at("ddim");
    n_steps = d.value("n_train_steps", n_steps);
    beta_start = d.value("beta_start", beta_start);
    beta_end = d.value("beta_end", beta_end);
    stride = d.value("stride", stride);
  }
  return esckit::make_noise_schedule(n_steps, beta_start, beta_end, stride);
}

Eigen::MatrixXi labels_column(const std::vector<int>& labels) {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = labels[i];
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw esckit::ValidationError("cannot write " + path.string());
  out << text;
}

// The run directory is named by the effective config (seed resolved), so a
// rerun with identical inputs lands in the same place; worker count and
// output root never affect it.
fs::path make_run_dir(const std::string& out_root, const std::string& command,
                      const json& effective) {
  const std::string canonical = effective.dump();
  const fs::path dir = fs::path(out_root) /
                       (command + "-" + esckit::config_hash_hex(canonical));
  fs::create_directories(dir);
  write_text(dir / "config.json", effective.dump(2) + "\n");
  return dir;
}

void save_logistic(const fs::path& path, const esckit::LogisticClassifier& c) {
  json j;
  j["kind"] = "logistic";
  std::vector<double> w(c.weights().begin(), c.weights().end());
  j["weights"] = w;
  j["bias"] = c.bias();
  write_text(path, j.dump(2) + "\n");
}

esckit::LogisticClassifier load_logistic(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw esckit::ParseError("cannot open classifier " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw esckit::ParseError("classifier " + path + ": " + e.what());
  }
  if (j.value("kind", "") != "logistic") {
    throw esckit::ParseError("classifier " + path + ": unexpected kind");
  }
  const auto w = j.at("weights").get<std::vector<double>>();
  Vec weights(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) {
    weights[static_cast<Eigen::Index>(i)] = w[i];
  }
  return esckit::LogisticClassifier(std::move(weights),
                                    j.at("bias").get<double>());
}

std::vector<double> kappas_of(const std::vector<double>& scores) {
  std::vector<double> k(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    k[i] = esckit::confidence(scores[i]);
  }
  return k;
}

void write_strategy_curves(const fs::path& run_dir, const std::string& tag,
                           const std::vector<esckit::StrategyResult>& results,
                           const std::vector<int>& labels, bool plots) {
  std::vector<esckit::SvgSeries> roc_series, rc_series;
  for (const auto& r : results) {
    const std::string name = esckit::strategy_name(r.strategy);
    const esckit::CurvePoints roc = esckit::roc_curve(r.scores, labels);
    const esckit::CurvePoints rc =
        esckit::risk_coverage(r.decisions, labels, kappas_of(r.scores));
    esckit::curve_write_csv(
        (run_dir / ("roc_" + tag + "_" + name + ".csv")).string(), "fpr",
        "tpr", roc);
    esckit::curve_write_csv(
        (run_dir / ("rc_" + tag + "_" + name + ".csv")).string(), "coverage",
        "risk", rc);
    roc_series.push_back({name, roc});
    rc_series.push_back({name, rc});
  }
  if (plots) {
    esckit::svg_plot_write((run_dir / ("roc_" + tag + ".svg")).string(),
                           "ROC (" + tag + ")", "false positive rate",
                           "true positive rate", roc_series);
    esckit::svg_plot_write((run_dir / ("rc_" + tag + ".svg")).string(),
                           "Risk-coverage (" + tag + ")", "coverage", "risk",
                           rc_series);
  }
}

int cmd_toyworld(const json& cfg, const fs::path& run_dir, int workers) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const int n_items = cfg.value("n_items", 500);
  const int K = cfg.value("K", 200);
  const double threshold = cfg.value("decision_threshold", 0.5);
  const bool plots = cfg.value("plots", true);
  const esckit::GmmWorld world = world_from_config(cfg.at("world"));

  esckit::RngStream data_stream(seed, 0);
  const esckit::PairedData data = esckit::draw_paired(world, n_items, data_stream);

  esckit::Dataset dx{data.xs, 1.0, {"label_class"}, labels_column(data.labels)};
  esckit::Dataset dy{data.ys, 1.0, {"label_class"}, labels_column(data.labels)};
  esckit::dataset_write((run_dir / "dataset_x.csv").string(), dx);
  esckit::dataset_write((run_dir / "dataset_y.csv").string(), dy);

  const esckit::FunctionClassifier oracle_x = esckit::world_classifier_x(world);
  const esckit::FunctionClassifier oracle_y = esckit::world_classifier_y(world);
  std::unique_ptr<esckit::LogisticClassifier> trained_x;
  if (cfg.contains("classifier_checkpoint")) {
    trained_x = std::make_unique<esckit::LogisticClassifier>(
        load_logistic(cfg.at("classifier_checkpoint").get<std::string>()));
  }
  const esckit::ClassifierModel& f_x =
      trained_x ? static_cast<const esckit::ClassifierModel&>(*trained_x)
                : oracle_x;

  json sampler_list = cfg.value("samplers", json::array({"exact"}));
  std::uint64_t block = 1;
  for (const auto& entry : sampler_list) {
    const std::string tag = entry.get<std::string>();
    esckit::PosteriorSampler sampler;
    if (tag == "exact") {
      sampler = esckit::exact_world_sampler(world, K);
    } else if (tag == "ddim_analytic") {
      sampler = esckit::analytic_ddim_sampler(world, schedule_from_config(cfg), K);
    } else if (tag == "ddim_checkpoint") {
      auto loaded =
          esckit::mlp_denoiser_load(cfg.at("checkpoint").get<std::string>());
      sampler = esckit::checkpoint_ddim_sampler(
          std::make_shared<esckit::MlpDenoiser>(std::move(loaded.first)),
          loaded.second, K);
    } else {
      throw esckit::ValidationError("toyworld: unknown sampler " + tag);
    }

    esckit::StrategyHarnessConfig hc;
    hc.K = K;
    hc.decision_threshold = threshold;
    hc.n_workers = workers;
    const esckit::RngStream base(seed, block << 40);
    ++block;

    const std::vector<esckit::StrategyResult> results = esckit::strategy_harness(
        data.xs, data.ys, data.labels, sampler, f_x, oracle_y, hc, base);
    esckit::strategy_results_write_csv(
        (run_dir / ("strategies_" + tag + ".csv")).string(), results,
        data.labels);
    esckit::summary_write_json(
        (run_dir / ("summary_" + tag + ".json")).string(), {"label_class"},
        {esckit::summarize_strategies(results, data.labels)});
    write_strategy_curves(run_dir, tag, results, data.labels, plots);
  }
  return kExitOk;
}

int cmd_convert(const json& cfg, const fs::path& run_dir, int workers) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const int K = cfg.value("K", 100);
  const esckit::Dataset input =
      esckit::dataset_read(cfg.at("input_csv").get<std::string>());
  const int n = static_cast<int>(input.signals.rows());

  const json& spec = cfg.at("denoiser");
  const std::string kind = spec.at("kind").get<std::string>();
  esckit::PosteriorSampler sampler;
  std::optional<esckit::GmmWorld> world;
  if (kind == "analytic") {
    world = world_from_config(spec.at("world"));
    sampler = esckit::analytic_ddim_sampler(*world, schedule_from_config(cfg), K);
  } else if (kind == "checkpoint") {
    auto loaded = esckit::mlp_denoiser_load(spec.at("path").get<std::string>());
    if (loaded.first.dim() != static_cast<int>(input.signals.cols())) {
      throw esckit::ValidationError(
          "convert: checkpoint dimension does not match the dataset");
    }
    sampler = esckit::checkpoint_ddim_sampler(
        std::make_shared<esckit::MlpDenoiser>(std::move(loaded.first)),
        loaded.second, K);
  } else {
    throw esckit::ValidationError("convert: unknown denoiser kind " + kind);
  }

  fs::create_directories(run_dir / "ensembles");
  std::vector<Mat> ensembles(static_cast<std::size_t>(n));
  const std::uint64_t stride = static_cast<std::uint64_t>(K) + 1;
  esckit::parallel_for_indexed(n, workers, [&](int i) {
    esckit::RngStream stream(seed, static_cast<std::uint64_t>(i) * stride);
    const Vec y = input.signals.row(i).transpose();
    ensembles[static_cast<std::size_t>(i)] = sampler(y, stream).samples;
  });
  for (int i = 0; i < n; ++i) {
    esckit::Dataset bundle{ensembles[static_cast<std::size_t>(i)],
                           input.sample_rate_hz,
                           {},
                           Eigen::MatrixXi()};
    esckit::dataset_write(
        (run_dir / "ensembles" / ("item_" + std::to_string(i) + ".csv")).string(),
        bundle);
  }

  json report;
  report["n_items"] = n;
  report["K"] = K;
  report["denoiser"] = kind;
  if (world && cfg.value("report_fd_vs_oracle", true)) {
    double fd_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec y = input.signals.row(i).transpose();
      const esckit::GaussianSummary exact =
          esckit::posterior_moments(esckit::posterior_given_y(*world, y));
      fd_sum += esckit::frechet_distance(
          esckit::fit_gaussian(ensembles[static_cast<std::size_t>(i)]), exact);
    }
    report["mean_fd_vs_oracle"] = fd_sum / static_cast<double>(n);
  }
  write_text(run_dir / "report.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_train(const json& cfg, const fs::path& run_dir, int /*workers*/) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const std::string model = cfg.value("model", "denoiser");
  const esckit::GmmWorld world = world_from_config(cfg.at("world"));
  const int n_train = cfg.value("n_train", 4096);

  esckit::RngStream data_stream(seed, 0);
  const esckit::PairedData data = esckit::draw_paired(world, n_train, data_stream);
  esckit::RngStream train_stream(seed, 1ull << 40);

  if (model == "denoiser") {
    const esckit::NoiseSchedule schedule = schedule_from_config(cfg);
    esckit::TrainHyperparams hp;
    if (cfg.contains("hyperparams")) {
      const json& h = cfg.at("hyperparams");
      hp.epochs = h.value("epochs", hp.epochs);
      hp.batch_size = h.value("batch_size", hp.batch_size);
      hp.learning_rate = h.value("learning_rate", hp.learning_rate);
      hp.hidden_width = h.value("hidden_width", hp.hidden_width);
      hp.t_emb_width = h.value("t_emb_width", hp.t_emb_width);
      hp.val_fraction = h.value("val_fraction", hp.val_fraction);
    }
    const esckit::TrainedDenoiser trained = esckit::train_mlp_denoiser(
        data.xs, data.ys, schedule, hp, train_stream);
    esckit::mlp_denoiser_save((run_dir / "checkpoint.json").string(),
                              trained.model, schedule);
    std::ostringstream trace;
    trace << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < trained.trace.train.size(); ++e) {
      trace << e << "," << esckit::format_double(trained.trace.train[e]) << ","
            << esckit::format_double(trained.trace.val[e]) << "\n";
    }
    write_text(run_dir / "trace.csv", trace.str());
    return kExitOk;
  }
  if (model == "classifier") {
    esckit::LogisticTrainParams params;
    if (cfg.contains("hyperparams")) {
      const json& h = cfg.at("hyperparams");
      params.iterations = h.value("iterations", params.iterations);
      params.learning_rate = h.value("learning_rate", params.learning_rate);
      params.batch_size = h.value("batch_size", params.batch_size);
    }
    const esckit::LogisticFit fit =
        esckit::train_logistic(data.xs, data.labels, params, train_stream);
    save_logistic(run_dir / "classifier.json", fit.model);
    std::ostringstream trace;
    trace << "iteration,loss\n";
    for (std::size_t i = 0; i < fit.loss_trace.size(); ++i) {
      trace << i << "," << esckit::format_double(fit.loss_trace[i]) << "\n";
    }
    write_text(run_dir / "trace.csv", trace.str());
    return kExitOk;
  }
  throw esckit::ValidationError("train: unknown model " + model);
}

int cmd_calibrate(const json& cfg, const fs::path& run_dir, int workers) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  esckit::CalibrationConfig cc;
  cc.alpha = cfg.value("alpha", 0.1);
  cc.delta = cfg.value("delta", 0.1);
  cc.decision_threshold = cfg.value("decision_threshold", 0.5);
  cc.lambda_grid = esckit::default_lambda_grid();
  if (cfg.contains("lambda_grid")) {
    const json& g = cfg.at("lambda_grid");
    const double lo = g.at("min").get<double>();
    const double hi = g.at("max").get<double>();
    const int pts = g.at("points").get<int>();
    if (pts < 2 || !(hi > lo)) {
      throw esckit::ValidationError("calibrate: bad lambda grid spec");
    }
    cc.lambda_grid.resize(static_cast<std::size_t>(pts));
    for (int i = 0; i < pts; ++i) {
      cc.lambda_grid[static_cast<std::size_t>(i)] =
          lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(pts - 1);
    }
  }

  std::vector<double> scores;
  std::vector<int> labels;
  const json& src = cfg.at("scores");
  if (src.contains("csv")) {
    const std::string path = src.at("csv").get<std::string>();
    std::ifstream in(path);
    if (!in) throw esckit::ParseError("cannot open scores " + path);
    std::string line;
    if (!std::getline(in, line) || line != "score,label") {
      throw esckit::ParseError("scores " + path +
                               ": expected header 'score,label'");
    }
    int row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw esckit::ParseError("scores " + path + ": row " +
                                 std::to_string(row) + " needs two columns");
      }
      scores.push_back(esckit::parse_double(line.substr(0, comma),
                                            "scores row " + std::to_string(row)));
      const std::string lab = line.substr(comma + 1);
      if (lab != "0" && lab != "1") {
        throw esckit::ParseError("scores " + path + ": row " +
                                 std::to_string(row) + " label must be 0 or 1");
      }
      labels.push_back(lab == "1" ? 1 : 0);
    }
  } else {
    const esckit::GmmWorld world = world_from_config(src.at("world"));
    const int n = src.value("n", 2000);
    const int K = src.value("K", 100);
    const std::string kind = src.value("sampler", std::string("exact"));
    esckit::PosteriorSampler sampler;
    if (kind == "exact") {
      sampler = esckit::exact_world_sampler(world, K);
    } else if (kind == "ddim_analytic") {
      sampler = esckit::analytic_ddim_sampler(world, schedule_from_config(cfg), K);
    } else {
      throw esckit::ValidationError("calibrate: unknown sampler " + kind);
    }
    const esckit::FunctionClassifier f_x = esckit::world_classifier_x(world);

    esckit::RngStream data_stream(seed, 0);
    const esckit::PairedData data = esckit::draw_paired(world, n, data_stream);
    labels = data.labels;
    scores.resize(static_cast<std::size_t>(n));
    const std::uint64_t stride = static_cast<std::uint64_t>(K) + 1;
    esckit::parallel_for_indexed(n, workers, [&](int i) {
      esckit::RngStream stream(seed,
                               (1ull << 40) + static_cast<std::uint64_t>(i) * stride);
      const Vec y = data.ys.row(i).transpose();
      scores[static_cast<std::size_t>(i)] =
          esckit::esc_score(sampler(y, stream), f_x).score;
    });
  }

  const esckit::CalibrationOutcome outcome =
      esckit::calibrate_lambda(scores, labels, cc);
  esckit::calibration_report_write((run_dir / "calibration.json").string(),
                                   outcome, cc, static_cast<int>(scores.size()));
  if (outcome.failed) {
    std::cerr << "calibration failed: no threshold certifies risk below alpha"
              << std::endl;
    return kExitCalibrationFailed;
  }
  return kExitOk;
}

int cmd_metrics(const json& cfg, const fs::path& run_dir, int /*workers*/) {
  const std::string path = cfg.at("input_csv").get<std::string>();
  std::ifstream in(path);
  if (!in) throw esckit::ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "item_index,strategy,label_index,score,decision,true_label") {
    throw esckit::ParseError(path + ": unexpected header");
  }

  std::vector<std::string> order;
  std::map<std::string, esckit::StrategyResult> groups;
  std::map<std::string, std::vector<int>> group_labels;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      throw esckit::ParseError(path + ": row " + std::to_string(row) +
                               " needs six columns");
    }
    const std::string& tag = cells[1];
    if (groups.find(tag) == groups.end()) {
      order.push_back(tag);
      esckit::StrategyResult r;
      bool known = false;
      for (esckit::Strategy s :
           {esckit::Strategy::kOriginalX, esckit::Strategy::kOriginalY,
            esckit::Strategy::kSscMean, esckit::Strategy::kSscRandom,
            esckit::Strategy::kEsc}) {
        if (esckit::strategy_name(s) == tag) {
          r.strategy = s;
          known = true;
        }
      }
      if (!known) {
        throw esckit::ParseError(path + ": row " + std::to_string(row) +
                                 " has unknown strategy " + tag);
      }
      groups[tag] = r;
    }
    auto& g = groups[tag];
    g.scores.push_back(
        esckit::parse_double(cells[3], "row " + std::to_string(row)));
    g.decisions.push_back(cells[4] == "1" ? 1 : 0);
    group_labels[tag].push_back(cells[5] == "1" ? 1 : 0);
  }
  if (order.empty()) throw esckit::ParseError(path + ": no rows");
  const std::vector<int>& labels = group_labels[order.front()];
  for (const auto& tag : order) {
    if (group_labels[tag] != labels) {
      throw esckit::ParseError(path + ": true_label differs between strategies");
    }
  }

  std::vector<esckit::StrategyResult> results;
  for (const auto& tag : order) results.push_back(groups[tag]);
  esckit::summary_write_json((run_dir / "summary.json").string(), {"label_class"},
                             {esckit::summarize_strategies(results, labels)});
  write_strategy_curves(run_dir, "input", results, labels,
                        cfg.value("plots", true));
  return kExitOk;
}

int cmd_select(const json& cfg, const fs::path& run_dir, int workers) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const int n_items = cfg.value("n_items", 100);
  const int K = cfg.value("K", 100);
  const double threshold = cfg.value("decision_threshold", 0.5);
  const esckit::GmmWorld world = world_from_config(cfg.at("world"));
  const esckit::FunctionClassifier f_x = esckit::world_classifier_x(world);

  esckit::RngStream data_stream(seed, 0);
  const esckit::PairedData data = esckit::draw_paired(world, n_items, data_stream);

  const int d = world.dim();
  Mat picks_likely(n_items, d), picks_expected(n_items, d), picks_minmax(n_items, d);
  std::vector<esckit::Selection> sel_likely(static_cast<std::size_t>(n_items));
  std::vector<esckit::Selection> sel_expected(static_cast<std::size_t>(n_items));
  std::vector<esckit::Selection> sel_minmax(static_cast<std::size_t>(n_items));

  const std::uint64_t stride = static_cast<std::uint64_t>(K) + 1;
  esckit::parallel_for_indexed(n_items, workers, [&](int i) {
    esckit::RngStream stream(seed, 1 + static_cast<std::uint64_t>(i) * stride);
    const Vec y = data.ys.row(i).transpose();
    esckit::PosteriorEnsemble ens;
    ens.condition = esckit::make_signal(y, 1.0);
    ens.samples =
        esckit::posterior_sample(esckit::posterior_given_y(world, y), stream, K);
    ens.sample_rate_hz = 1.0;

    const esckit::EscScore esc = esckit::esc_score(ens, f_x);
    const int decision = esckit::decide(esc.score, threshold);
    const esckit::AgreementFilter filter = esckit::agreement_filter(
        ens, esc.sample_scores, decision, threshold);
    const esckit::KdeEstimate density = esckit::kde(filter.scores);

    const auto idx = static_cast<std::size_t>(i);
    sel_likely[idx] = esckit::most_likely_score_ecg(ens, filter, density);
    sel_expected[idx] = esckit::expected_score_ecg(ens, filter);
    sel_minmax[idx] = esckit::minmax_score_ecg(ens, filter, decision);
    picks_likely.row(i) = sel_likely[idx].signal.values.transpose();
    picks_expected.row(i) = sel_expected[idx].signal.values.transpose();
    picks_minmax.row(i) = sel_minmax[idx].signal.values.transpose();
  });

  std::vector<esckit::SelectionRecord> records;
  records.reserve(static_cast<std::size_t>(n_items) * 3);
  for (int i = 0; i < n_items; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    records.push_back({i, "MOST_LIKELY", sel_likely[idx].index,
                       sel_likely[idx].score});
    records.push_back({i, "EXPECTED", sel_expected[idx].index,
                       sel_expected[idx].score});
    records.push_back({i, "MINMAX", sel_minmax[idx].index,
                       sel_minmax[idx].score});
  }
  esckit::selection_report_write((run_dir / "selections.json").string(),
                                 records);

  esckit::dataset_write((run_dir / "selected_most_likely.csv").string(),
                        {picks_likely, 1.0, {}, Eigen::MatrixXi()});
  esckit::dataset_write((run_dir / "selected_expected.csv").string(),
                        {picks_expected, 1.0, {}, Eigen::MatrixXi()});
  esckit::dataset_write((run_dir / "selected_minmax.csv").string(),
                        {picks_minmax, 1.0, {}, Eigen::MatrixXi()});

  const std::vector<esckit::SelectionQualityRow> quality =
      esckit::selection_quality_table(world, n_items, K, threshold, workers,
                                      esckit::RngStream(seed, 1ull << 40));
  esckit::selection_quality_write_csv((run_dir / "quality.csv").string(),
                                      quality);
  return kExitOk;
}

int cmd_preprocess(const json& cfg, const fs::path& run_dir, int /*workers*/) {
  const auto seed = cfg.value("seed", std::uint64_t{1});
  esckit::Dataset input;
  const json& src = cfg.at("input");
  if (src.contains("csv")) {
    input = esckit::dataset_read(src.at("csv").get<std::string>());
  } else if (src.contains("synth")) {
    const json& s = src.at("synth");
    const std::string kind_name = s.value("kind", std::string("spiky"));
    esckit::SynthKind kind;
    if (kind_name == "spiky") {
      kind = esckit::SynthKind::kSpiky;
    } else if (kind_name == "smooth") {
      kind = esckit::SynthKind::kSmooth;
    } else {
      throw esckit::ValidationError("preprocess: unknown synth kind " +
                                    kind_name);
    }
    const double rate = s.value("rate_hz", 250.0);
    const double duration = s.value("duration_s", 8.0);
    const double beat = s.value("beat_hz", 1.2);
    const double jitter = s.value("jitter", 0.05);
    const double noise = s.value("noise_std", 0.0);
    const int n_signals = s.value("n_signals", 1);
    if (n_signals < 1) {
      throw esckit::ValidationError("preprocess: n_signals must be >= 1");
    }
    for (int i = 0; i < n_signals; ++i) {
      esckit::RngStream stream(seed, static_cast<std::uint64_t>(i));
      const esckit::Signal sig = esckit::synth_quasiperiodic(
          kind, rate, duration, beat, jitter, stream, noise);
      if (i == 0) {
        input.signals.resize(n_signals, sig.values.size());
        input.sample_rate_hz = sig.sample_rate_hz;
      }
      input.signals.row(i) = sig.values.transpose();
    }
  } else {
    throw esckit::ValidationError("preprocess: input needs 'csv' or 'synth'");
  }

  const json ops = cfg.value("ops", json::array());
  const Eigen::Index n = input.signals.rows();
  Mat processed;
  double out_rate = input.sample_rate_hz;
  for (Eigen::Index i = 0; i < n; ++i) {
    esckit::Signal sig =
        esckit::make_signal(input.signals.row(i).transpose(),
                            input.sample_rate_hz);
    for (const auto& op : ops) {
      const std::string name = op.at("op").get<std::string>();
      if (name == "resample") {
        sig = esckit::resample(sig, op.at("target_hz").get<double>());
      } else if (name == "bandpass") {
        sig = esckit::butterworth_bandpass_zerophase(
            sig, op.value("low_hz", 1.0), op.value("high_hz", 47.0),
            op.value("order", 3));
      } else if (name == "detrend") {
        sig = esckit::detrend(sig);
      } else if (name == "znormalize") {
        sig = esckit::znormalize(sig);
      } else {
        throw esckit::ValidationError("preprocess: unknown op " + name);
      }
    }
    if (i == 0) {
      processed.resize(n, sig.values.size());
      out_rate = sig.sample_rate_hz;
    } else if (sig.values.size() != processed.cols()) {
      throw esckit::ValidationError(
          "preprocess: rows produced different lengths");
    }
    processed.row(i) = sig.values.transpose();
  }

  esckit::Dataset out{processed, out_rate, input.label_names, input.labels};
  esckit::dataset_write((run_dir / "processed.csv").string(), out);
  return kExitOk;
}

int cmd_cycle(const json& cfg, const fs::path& run_dir, int workers) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const int n_items = cfg.value("n_items", 200);
  const int K = cfg.value("K", 50);
  const esckit::GmmWorld world = world_from_config(cfg.at("world"));
  const esckit::CycleReport report = esckit::cycle_experiment(
      world, n_items, K, workers, esckit::RngStream(seed, 0));
  esckit::cycle_report_write_json((run_dir / "cycle.json").string(), report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"esckit: posterior-ensemble classification experiment runner"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config;
    std::string out = "runs";
    int workers = 1;
    std::optional<std::uint64_t> seed;
  };
  const std::vector<std::string> names = {"toyworld", "convert",  "train",
                                          "calibrate", "metrics", "select",
                                          "preprocess", "cycle"};
  std::map<std::string, SubArgs> args;
  for (const auto& name : names) {
    auto& a = args[name];
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", a.config, "JSON config file")->required();
    sub->add_option("--out", a.out, "output root directory");
    sub->add_option("--workers", a.workers, "worker threads")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", a.seed, "override the config seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const SubArgs& a = args[command];

  try {
    json cfg = load_config(a.config);
    if (a.seed) cfg["seed"] = *a.seed;
    if (!cfg.contains("seed")) cfg["seed"] = 1;
    const fs::path run_dir = make_run_dir(a.out, command, cfg);

    int rc = kExitOk;
    if (command == "toyworld") {
      rc = cmd_toyworld(cfg, run_dir, a.workers);
    } else if (command == "convert") {
      rc = cmd_convert(cfg, run_dir, a.workers);
    } else if (command == "train") {
      rc = cmd_train(cfg, run_dir, a.workers);
    } else if (command == "calibrate") {
      rc = cmd_calibrate(cfg, run_dir, a.workers);
    } else if (command == "metrics") {
      rc = cmd_metrics(cfg, run_dir, a.workers);
    } else if (command == "select") {
      rc = cmd_select(cfg, run_dir, a.workers);
    } else if (command == "preprocess") {
      rc = cmd_preprocess(cfg, run_dir, a.workers);
    } else if (command == "cycle") {
      rc = cmd_cycle(cfg, run_dir, a.workers);
    }
    std::cout << run_dir.string() << std::endl;
    return rc;
  } catch (const esckit::ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const esckit::ParseError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const esckit::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << std::endl;
    return kExitNumerical;
  } catch (const esckit::TrainingError& e) {
    std::cerr << "training error: " << e.what() << std::endl;
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitNumerical;
  }
}
