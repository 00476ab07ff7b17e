#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "esckit/core.hpp"
#include "esckit/toyworld.hpp"

namespace esckit {

struct CalibrationConfig {
  double alpha = 0.1;
  double delta = 0.1;
  // Strictly increasing candidate thresholds in [0, 1].
  std::vector<double> lambda_grid;
  double decision_threshold = 0.5;
};

// 101 equally spaced points on [0.5, 1.0], the confidence range.
std::vector<double> default_lambda_grid();

// kappa = max{1 - score, score}, in [0.5, 1].
double confidence(double score);

// sqrt(log(1/delta) / (2m)). delta in (0, 1]; delta = 1 gives 0.
double hoeffding_radius(int m, double delta);

struct SelectiveRisk {
  // Unset when no item clears the threshold; a bound over zero items
  // certifies nothing and never qualifies.
  std::optional<double> risk;
  int n_selected = 0;
};

// Fraction of wrong decisions among items with confidence strictly above
// lambda.
SelectiveRisk empirical_selective_risk(const std::vector<int>& decisions,
                                       const std::vector<int>& true_labels,
                                       const std::vector<double>& confidences,
                                       double lambda);

struct BoundTraceRow {
  double lambda = 0.0;
  std::optional<double> risk;
  std::optional<double> bound;
  int n_selected = 0;
};

struct CalibrationOutcome {
  bool failed = true;
  // Smallest grid threshold whose risk bound clears alpha; meaningful only
  // when failed is false.
  double lambda_hat = 0.0;
  double coverage_at_lambda_hat = 0.0;
  std::vector<BoundTraceRow> trace;
};

// Threshold selection over the grid: lambda_hat = min{lambda : R(lambda) +
// r_delta < alpha}, with the Hoeffding radius computed once from the full
// calibration-set size. No qualifying threshold means FAILED.
CalibrationOutcome calibrate_lambda(const std::vector<double>& scores,
                                    const std::vector<int>& true_labels,
                                    const CalibrationConfig& config);

// {alpha, delta, m, lambda_hat | "FAILED", coverage, trace: [{lambda, risk,
// bound, n_selected}]}; empty-selection rows carry null risk and bound.
void calibration_report_write(const std::string& path,
                              const CalibrationOutcome& outcome,
                              const CalibrationConfig& config, int m);

// Scores a batch of observations (one per row). Implementations must make
// item scores depend only on the item and the stream identity handed in,
// never on shared mutable state, so audits parallelize deterministically.
using ScorePipeline =
    std::function<std::vector<double>(const Mat& ys, const RngStream& stream)>;

struct AuditReport {
  int n_trials = 0;
  int n_failed = 0;
  int n_valid = 0;
  // n_valid over non-FAILED trials; 1.0 when every trial failed.
  double validity_rate = 0.0;
};

// Repeatedly draws fresh calibration and test sets from the world, runs the
// pipeline and threshold selection on the calibration half, and checks the
// realised selective risk of the test half against alpha. A trial whose
// test selection is empty counts as valid: abstaining everywhere incurs no
// selective error. Each trial works in a disjoint block of 2^32 stream
// identities; the pipeline is handed identities inside the block.
AuditReport audit_guarantee(const GmmWorld& world,
                            const ScorePipeline& pipeline,
                            const CalibrationConfig& config, int n_trials,
                            int m_calibration, int n_test, int n_workers,
                            const RngStream& base_stream);

}  // namespace esckit
