#include "esckit/experiments.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace esckit {

PairedData draw_paired(const GmmWorld& world, int n, RngStream& stream) {
  if (n < 1) throw ValidationError("draw_paired: n must be >= 1");
  const std::vector<JointSample> draws = sample_joint(world, stream, n);
  PairedData data;
  data.xs.resize(n, world.dim());
  data.ys.resize(n, world.dim());
  data.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    data.xs.row(i) = draws[static_cast<std::size_t>(i)].x.transpose();
    data.ys.row(i) = draws[static_cast<std::size_t>(i)].y.transpose();
    data.labels[static_cast<std::size_t>(i)] = draws[static_cast<std::size_t>(i)].c;
  }
  return data;
}

PosteriorSampler exact_world_sampler(const GmmWorld& world, int K) {
  if (K < 1) throw ValidationError("exact sampler: K must be >= 1");
  return [world, K](const Vec& y, RngStream& stream) {
    PosteriorEnsemble ens;
    ens.condition = make_signal(y, 1.0);
    ens.samples = posterior_sample(posterior_given_y(world, y), stream, K);
    ens.sample_rate_hz = 1.0;
    return ens;
  };
}

PosteriorSampler analytic_ddim_sampler(const GmmWorld& world,
                                       const NoiseSchedule& schedule, int K) {
  if (K < 1) throw ValidationError("ddim sampler: K must be >= 1");
  return [world, schedule, K](const Vec& y, RngStream& stream) {
    const auto denoiser = analytic_gmm_denoiser(world, y, schedule);
    return ddim_sample(*denoiser, y, stream, schedule, K);
  };
}

PosteriorSampler checkpoint_ddim_sampler(std::shared_ptr<const MlpDenoiser> model,
                                         const NoiseSchedule& schedule, int K) {
  if (!model) throw ValidationError("ddim sampler: missing model");
  if (K < 1) throw ValidationError("ddim sampler: K must be >= 1");
  return [model, schedule, K](const Vec& y, RngStream& stream) {
    return ddim_sample(*model, y, stream, schedule, K);
  };
}

FunctionClassifier world_classifier_x(const GmmWorld& world) {
  return FunctionClassifier(
      [world](const Vec& x) { return class_posterior_x(world, x); });
}

FunctionClassifier world_classifier_y(const GmmWorld& world) {
  return FunctionClassifier(
      [world](const Vec& y) { return class_posterior_y(world, y); });
}

GaussianSummary posterior_moments(const PosteriorGmm& posterior) {
  const auto M = posterior.weights_given_y.size();
  if (M == 0) throw ValidationError("posterior moments: empty mixture");
  const auto d = posterior.means_given_y[0].size();

  Vec mean = Vec::Zero(d);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(M); ++k) {
    mean += posterior.weights_given_y[k] *
            posterior.means_given_y[static_cast<std::size_t>(k)];
  }
  Mat cov = Mat::Zero(d, d);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(M); ++k) {
    const Vec dm = posterior.means_given_y[static_cast<std::size_t>(k)] - mean;
    cov += posterior.weights_given_y[k] *
           (posterior.covs_given_y[static_cast<std::size_t>(k)] +
            dm * dm.transpose());
  }
  return GaussianSummary{std::move(mean), std::move(cov)};
}

std::vector<StrategySummary> summarize_strategies(
    const std::vector<StrategyResult>& results,
    const std::vector<int>& labels) {
  std::vector<StrategySummary> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    if (r.scores.size() != labels.size()) {
      throw ValidationError("summarize: result and label lengths differ");
    }
    StrategySummary s;
    s.strategy = strategy_name(r.strategy);
    s.auroc = auroc(r.scores, labels);
    std::vector<double> kappas(r.scores.size());
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      kappas[i] = confidence(r.scores[i]);
    }
    s.aurc = aurc(risk_coverage(r.decisions, labels, kappas));
    s.confusion = confusion_metrics(r.decisions, labels);
    out.push_back(std::move(s));
  }
  return out;
}

void summary_write_json(
    const std::string& path, const std::vector<std::string>& label_names,
    const std::vector<std::vector<StrategySummary>>& per_label) {
  if (per_label.size() != label_names.size() || per_label.empty()) {
    throw ValidationError("summary: one strategy table per label required");
  }
  const std::size_t n_strategies = per_label[0].size();
  for (const auto& rows : per_label) {
    if (rows.size() != n_strategies) {
      throw ValidationError("summary: label tables disagree on strategies");
    }
  }

  nlohmann::json strategies = nlohmann::json::object();
  for (std::size_t s = 0; s < n_strategies; ++s) {
    nlohmann::json rows = nlohmann::json::array();
    double auroc_sum = 0.0, aurc_sum = 0.0, tpr_sum = 0.0, tnr_sum = 0.0,
           f1_sum = 0.0;
    for (std::size_t l = 0; l < per_label.size(); ++l) {
      const StrategySummary& row = per_label[l][s];
      if (row.strategy != per_label[0][s].strategy) {
        throw ValidationError("summary: label tables disagree on strategies");
      }
      nlohmann::json j;
      j["label"] = label_names[l];
      j["auroc"] = row.auroc;
      j["aurc"] = row.aurc;
      j["tpr"] = row.confusion.tpr;
      j["tnr"] = row.confusion.tnr;
      j["f1"] = row.confusion.f1;
      rows.push_back(std::move(j));
      auroc_sum += row.auroc;
      aurc_sum += row.aurc;
      tpr_sum += row.confusion.tpr;
      tnr_sum += row.confusion.tnr;
      f1_sum += row.confusion.f1;
    }
    const auto n = static_cast<double>(per_label.size());
    nlohmann::json macro;
    macro["auroc"] = auroc_sum / n;
    macro["aurc"] = aurc_sum / n;
    macro["tpr"] = tpr_sum / n;
    macro["tnr"] = tnr_sum / n;
    macro["f1"] = f1_sum / n;

    nlohmann::json entry;
    entry["per_label"] = std::move(rows);
    entry["macro"] = std::move(macro);
    strategies[per_label[0][s].strategy] = std::move(entry);
  }

  nlohmann::json root;
  root["labels"] = label_names;
  root["strategies"] = std::move(strategies);
  std::ofstream out(path);
  if (!out) throw ValidationError("summary: cannot write " + path);
  out << root.dump(2) << "\n";
}

CurvePoints roc_curve(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (labels.size() != n || n == 0) {
    throw ValidationError("roc_curve: scores and labels must align");
  }
  long n_pos = 0;
  for (int c : labels) {
    if (c != 0 && c != 1) throw ValidationError("roc_curve: labels must be 0/1");
    n_pos += c;
  }
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("roc_curve: both classes must be present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  CurvePoints curve;
  curve.x.push_back(0.0);
  curve.y.push_back(0.0);
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    // Consume a whole tie group before emitting a point.
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]];
      fp += 1 - labels[order[j]];
      ++j;
    }
    curve.x.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    curve.y.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    i = j;
  }
  return curve;
}

void curve_write_csv(const std::string& path, const std::string& x_header,
                     const std::string& y_header, const CurvePoints& curve) {
  if (curve.x.size() != curve.y.size()) {
    throw ValidationError("curve csv: x and y lengths differ");
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("curve csv: cannot write " + path);
  out << x_header << "," << y_header << "\n";
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    out << format_double(curve.x[i]) << "," << format_double(curve.y[i]) << "\n";
  }
}

namespace {

std::string svg_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void svg_plot_write(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<SvgSeries>& series) {
  if (series.empty()) throw ValidationError("svg plot: no series");

  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : series) {
    if (s.points.x.size() != s.points.y.size() || s.points.x.empty()) {
      throw ValidationError("svg plot: malformed series");
    }
    for (std::size_t i = 0; i < s.points.x.size(); ++i) {
      if (first) {
        x_min = x_max = s.points.x[i];
        y_min = y_max = s.points.y[i];
        first = false;
      }
      x_min = std::min(x_min, s.points.x[i]);
      x_max = std::max(x_max, s.points.x[i]);
      y_min = std::min(y_min, s.points.y[i]);
      y_max = std::max(y_max, s.points.y[i]);
    }
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  const double width = 640.0, height = 480.0;
  const double ml = 60.0, mr = 20.0, mt = 40.0, mb = 50.0;
  const auto px = [&](double x) {
    return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
  };
  const auto py = [&](double y) {
    return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);
  };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << svg_escape(title) << "</text>\n";
  // Axes.
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
      << width - mr << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << svg_escape(x_label)
      << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (mt + height - mb) / 2 << ")\">" << svg_escape(y_label)
      << "</text>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 16
      << "\" font-size=\"10\">" << format_double(x_min) << "</text>\n";
  svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 16
      << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(x_max)
      << "</text>\n";
  svg << "<text x=\"" << ml - 4 << "\" y=\"" << height - mb
      << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(y_min)
      << "</text>\n";
  svg << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 10
      << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(y_max)
      << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].points.x.size(); ++i) {
      svg << px(series[s].points.x[i]) << "," << py(series[s].points.y[i]);
      if (i + 1 < series[s].points.x.size()) svg << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << width - mr - 4 << "\" y=\"" << mt + 14 * (s + 1)
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">"
        << svg_escape(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw ValidationError("svg plot: cannot write " + path);
  out << svg.str();
}

std::string config_hash_hex(const std::string& config_text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : config_text) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::vector<SelectionQualityRow> selection_quality_table(
    const GmmWorld& world, int n_items, int K, double decision_threshold,
    int n_workers, const RngStream& base_stream) {
  if (n_items < 2 || K < 1) {
    throw ValidationError("selection quality: need n_items >= 2 and K >= 1");
  }
  const int d = world.dim();
  const FunctionClassifier f_x = world_classifier_x(world);

  // Disjoint identity blocks: data, then one block of K + 1 per item.
  RngStream data_stream(base_stream.master_seed(), base_stream.stream_index());
  const PairedData data = draw_paired(world, n_items, data_stream);
  const std::uint64_t item_base = base_stream.stream_index() + 1;
  const std::uint64_t stride = static_cast<std::uint64_t>(K) + 1;

  Mat picks_likely(n_items, d), picks_expected(n_items, d), picks_minmax(n_items, d);
  std::vector<double> rmse_likely(static_cast<std::size_t>(n_items));
  std::vector<double> rmse_expected(static_cast<std::size_t>(n_items));
  std::vector<double> rmse_minmax(static_cast<std::size_t>(n_items));

  parallel_for_indexed(n_items, n_workers, [&](int i) {
    RngStream stream(base_stream.master_seed(),
                     item_base + static_cast<std::uint64_t>(i) * stride);
    const Vec y = data.ys.row(i).transpose();
    PosteriorEnsemble ens;
    ens.condition = make_signal(y, 1.0);
    ens.samples = posterior_sample(posterior_given_y(world, y), stream, K);
    ens.sample_rate_hz = 1.0;

    const EscScore esc = esc_score(ens, f_x);
    const int decision = decide(esc.score, decision_threshold);
    const AgreementFilter filter =
        agreement_filter(ens, esc.sample_scores, decision, decision_threshold);
    const KdeEstimate density = kde(filter.scores);

    const Selection likely = most_likely_score_ecg(ens, filter, density);
    const Selection expected = expected_score_ecg(ens, filter);
    const Selection minmax = minmax_score_ecg(ens, filter, decision);

    const Vec truth = data.xs.row(i).transpose();
    picks_likely.row(i) = likely.signal.values.transpose();
    picks_expected.row(i) = expected.signal.values.transpose();
    picks_minmax.row(i) = minmax.signal.values.transpose();
    rmse_likely[static_cast<std::size_t>(i)] = rmse(likely.signal.values, truth);
    rmse_expected[static_cast<std::size_t>(i)] = rmse(expected.signal.values, truth);
    rmse_minmax[static_cast<std::size_t>(i)] = rmse(minmax.signal.values, truth);
  });

  // Independent source draw as the distributional reference.
  RngStream ref_stream(base_stream.master_seed(),
                       item_base + static_cast<std::uint64_t>(n_items) * stride);
  Mat reference(n_items, d);
  const std::vector<JointSample> ref = sample_joint(world, ref_stream, n_items);
  for (int i = 0; i < n_items; ++i) {
    reference.row(i) = ref[static_cast<std::size_t>(i)].x.transpose();
  }
  const GaussianSummary ref_fit = fit_gaussian(reference);

  const auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  std::vector<SelectionQualityRow> rows(3);
  rows[0].strategy = "MOST_LIKELY";
  rows[0].mean_rmse = mean_of(rmse_likely);
  rows[0].fd = frechet_distance(fit_gaussian(picks_likely), ref_fit);
  rows[1].strategy = "EXPECTED";
  rows[1].mean_rmse = mean_of(rmse_expected);
  rows[1].fd = frechet_distance(fit_gaussian(picks_expected), ref_fit);
  rows[2].strategy = "MINMAX";
  rows[2].mean_rmse = mean_of(rmse_minmax);
  rows[2].fd = frechet_distance(fit_gaussian(picks_minmax), ref_fit);
  return rows;
}

void selection_quality_write_csv(const std::string& path,
                                 const std::vector<SelectionQualityRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("selection quality: cannot write " + path);
  out << "strategy,mean_rmse,fd\n";
  for (const auto& r : rows) {
    out << r.strategy << "," << format_double(r.mean_rmse) << ","
        << format_double(r.fd) << "\n";
  }
}

CycleReport cycle_experiment(const GmmWorld& world, int n_items, int K,
                             int n_workers, const RngStream& base_stream) {
  if (n_items < 2 || K < 1) {
    throw ValidationError("cycle: need n_items >= 2 and K >= 1");
  }
  const int d = world.dim();

  RngStream data_stream(base_stream.master_seed(), base_stream.stream_index());
  const PairedData data = draw_paired(world, n_items, data_stream);

  const std::uint64_t item_base = base_stream.stream_index() + 1;
  const std::uint64_t stride = 2ull * static_cast<std::uint64_t>(K) + 2;

  Mat direct_pool(static_cast<Eigen::Index>(n_items) * K, d);
  Mat cycle_pool(static_cast<Eigen::Index>(n_items) * K, d);

  parallel_for_indexed(n_items, n_workers, [&](int i) {
    RngStream stream(base_stream.master_seed(),
                     item_base + static_cast<std::uint64_t>(i) * stride);
    const Vec y = data.ys.row(i).transpose();
    const Mat direct =
        posterior_sample(posterior_given_y(world, y), stream, K);

    // Forward re-synthesis of the observation from the clean source, then
    // the same reverse reconstruction.
    const Vec x = data.xs.row(i).transpose();
    const Vec y_cycle = x + world.channel_sigma * gaussian_draw(stream, d);
    const Mat cycle =
        posterior_sample(posterior_given_y(world, y_cycle), stream, K);

    direct_pool.block(static_cast<Eigen::Index>(i) * K, 0, K, d) = direct;
    cycle_pool.block(static_cast<Eigen::Index>(i) * K, 0, K, d) = cycle;
  });

  RngStream ref_stream(base_stream.master_seed(),
                       item_base + static_cast<std::uint64_t>(n_items) * stride);
  Mat reference(static_cast<Eigen::Index>(n_items) * K, d);
  const std::vector<JointSample> ref =
      sample_joint(world, ref_stream, n_items * K);
  for (Eigen::Index i = 0; i < reference.rows(); ++i) {
    reference.row(i) = ref[static_cast<std::size_t>(i)].x.transpose();
  }

  const GaussianSummary ref_fit = fit_gaussian(reference);
  const GaussianSummary direct_fit = fit_gaussian(direct_pool);
  const GaussianSummary cycle_fit = fit_gaussian(cycle_pool);

  CycleReport report;
  report.n_items = n_items;
  report.K = K;
  report.direct_fd = frechet_distance(direct_fit, ref_fit);
  report.cycle_fd = frechet_distance(cycle_fit, ref_fit);
  report.cross_fd = frechet_distance(direct_fit, cycle_fit);
  return report;
}

void cycle_report_write_json(const std::string& path,
                             const CycleReport& report) {
  nlohmann::json j;
  j["n_items"] = report.n_items;
  j["K"] = report.K;
  j["direct_fd"] = report.direct_fd;
  j["cycle_fd"] = report.cycle_fd;
  j["cross_fd"] = report.cross_fd;
  std::ofstream out(path);
  if (!out) throw ValidationError("cycle report: cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace esckit
