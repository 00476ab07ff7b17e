#pragma once

#include <memory>
#include <string>
#include <vector>

#include "esckit/calibrate.hpp"
#include "esckit/classify.hpp"
#include "esckit/core.hpp"
#include "esckit/diffusion.hpp"
#include "esckit/metrics.hpp"
#include "esckit/select.hpp"
#include "esckit/toyworld.hpp"

namespace esckit {

// n joint draws arranged as row matrices, one item per row.
struct PairedData {
  Mat xs;
  Mat ys;
  std::vector<int> labels;
};

PairedData draw_paired(const GmmWorld& world, int n, RngStream& stream);

// Sampler backed by exact posterior conditioning; consumes only the stream
// it is handed.
PosteriorSampler exact_world_sampler(const GmmWorld& world, int K);

// Sampler running K reverse chains against the exact conditional denoiser,
// built fresh per observation.
PosteriorSampler analytic_ddim_sampler(const GmmWorld& world,
                                       const NoiseSchedule& schedule, int K);

// Sampler running K reverse chains against a trained checkpoint.
PosteriorSampler checkpoint_ddim_sampler(std::shared_ptr<const MlpDenoiser> model,
                                         const NoiseSchedule& schedule, int K);

// Exact oracle classifiers over the world's source and observation spaces.
FunctionClassifier world_classifier_x(const GmmWorld& world);
FunctionClassifier world_classifier_y(const GmmWorld& world);

// Closed-form mean and covariance of a posterior mixture (law of total
// variance across components).
GaussianSummary posterior_moments(const PosteriorGmm& posterior);

struct StrategySummary {
  std::string strategy;
  double auroc = 0.0;
  double aurc = 0.0;
  ConfusionMetrics confusion;
};

std::vector<StrategySummary> summarize_strategies(
    const std::vector<StrategyResult>& results, const std::vector<int>& labels);

// Per-label and macro rows for each strategy, one top-level object per
// strategy tag.
void summary_write_json(
    const std::string& path, const std::vector<std::string>& label_names,
    const std::vector<std::vector<StrategySummary>>& per_label);

// Receiver-operating curve: x = false-positive rate, y = true-positive
// rate, staircase over descending score thresholds.
CurvePoints roc_curve(const std::vector<double>& scores,
                      const std::vector<int>& labels);

void curve_write_csv(const std::string& path, const std::string& x_header,
                     const std::string& y_header, const CurvePoints& curve);

struct SvgSeries {
  std::string name;
  CurvePoints points;
};

// Minimal self-contained polyline plot; purely cosmetic, no analysis output
// depends on it.
void svg_plot_write(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<SvgSeries>& series);

// FNV-1a over the canonical config text, 16 hex digits; names run
// directories.
std::string config_hash_hex(const std::string& config_text);

// Representative-selection quality sweep: for each display strategy, the
// mean RMSE between the selected sample and the true source, and the
// distribution distance between the pool of selections and an independent
// source draw.
struct SelectionQualityRow {
  std::string strategy;  // MOST_LIKELY, EXPECTED, MINMAX
  double mean_rmse = 0.0;
  double fd = 0.0;
};

std::vector<SelectionQualityRow> selection_quality_table(
    const GmmWorld& world, int n_items, int K, double decision_threshold,
    int n_workers, const RngStream& base_stream);

void selection_quality_write_csv(const std::string& path,
                                 const std::vector<SelectionQualityRow>& rows);

// Source -> observation -> source round trip: reconstruct each item once
// from its dataset observation (direct) and once from a re-synthesized
// observation (cycle), then compare both reconstruction pools against an
// independent source draw.
struct CycleReport {
  int n_items = 0;
  int K = 0;
  double direct_fd = 0.0;
  double cycle_fd = 0.0;
  double cross_fd = 0.0;  // direct pool vs cycle pool
};

CycleReport cycle_experiment(const GmmWorld& world, int n_items, int K,
                             int n_workers, const RngStream& base_stream);

void cycle_report_write_json(const std::string& path,
                             const CycleReport& report);

}  // namespace esckit
