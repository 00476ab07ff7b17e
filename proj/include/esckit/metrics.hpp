#pragma once

#include "esckit/core.hpp"

#include <functional>
#include <vector>

namespace esckit {

struct GaussianSummary {
  Vec mean;
  Mat covariance;
};

// A sampled curve; x is non-decreasing.
struct CurvePoints {
  std::vector<double> x;
  std::vector<double> y;
};

struct ConfusionMetrics {
  double tpr = 0.0;
  double tnr = 0.0;
  double f1 = 0.0;
  // False when the corresponding denominator was zero (value reported as 0).
  bool tpr_defined = true;
  bool tnr_defined = true;
  bool f1_defined = true;
};

double rmse(const Vec& a, const Vec& b);

// ||mu1-mu2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}), the squared
// 2-Wasserstein distance between the two Gaussians. The matrix square root
// goes through an eigendecomposition of the symmetrized product; eigenvalues
// below -1e-8 raise NumericalError, small negatives clamp to zero.
double frechet_distance(const GaussianSummary& p, const GaussianSummary& q);

// Sample mean and unbiased (1/(n-1)) covariance of the rows.
GaussianSummary fit_gaussian(const Mat& samples);

// Mann-Whitney AUROC; ties count one half. Both classes must be present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Sort by confidence descending (ties by item index); point k has coverage
// k/n and risk = error rate among the top k.
CurvePoints risk_coverage(const std::vector<int>& decisions,
                          const std::vector<int>& labels,
                          const std::vector<double>& confidences);
// Mean of the risk values over the curve's coverage points.
double aurc(const CurvePoints& curve);

ConfusionMetrics confusion_metrics(const std::vector<int>& decisions,
                                   const std::vector<int>& labels);

// Plug-in estimate from an equal-width joint histogram, in nats.
double mutual_information(const std::vector<double>& u,
                          const std::vector<double>& v, int bins_u = 32,
                          int bins_v = 32);

// Per item: center the ground truth at the ensemble mean, project onto the
// top-n principal components of the ensemble, and take the coord_quantile
// quantile of absolute residual coordinates; the curve holds the mean over
// items for each n in pc_counts.
CurvePoints pca_uncertainty_curve(const std::vector<Mat>& ensembles,
                                  const std::vector<Vec>& ground_truths,
                                  const std::vector<int>& pc_counts,
                                  double coord_quantile = 0.9);

// Per score set: quantile(0.5+mass/2) - quantile(0.5-mass/2), linear
// interpolation between order statistics.
std::vector<double> score_interval_sizes(const std::vector<ScoreSet>& sets,
                                         double mass = 0.9);

// Fraction of items whose ground truth lies within the histogram_quantile
// quantile of the ensemble's pairwise distances (nearest-sample distance).
double ensemble_containment(const std::vector<Mat>& ensembles,
                            const std::vector<Vec>& ground_truths,
                            double histogram_quantile = 0.99);

// One classification trial at ensemble size K: the item's true class, the
// oracle score evaluated on the true source signal, and the ensemble score.
struct EscTrial {
  int true_class = 0;
  double oracle_score = 0.0;
  double esc_score = 0.0;
};

struct ConvergenceCurve {
  // Mean accuracy gap (oracle-on-source accuracy minus ensemble accuracy).
  CurvePoints accuracy_gap;
  // Std of the ensemble score across repeats on one fixed condition.
  CurvePoints score_std;
};

// trial_fn draws a fresh item and classifies it with a size-K ensemble;
// fixed_fn evaluates the size-K ensemble score on one fixed condition.
ConvergenceCurve esc_convergence_curve(
    const std::function<EscTrial(int K, RngStream&)>& trial_fn,
    const std::function<double(int K, RngStream&)>& fixed_fn,
    const std::vector<int>& K_grid, int repeats, int items_per_repeat,
    double decision_threshold, RngStream& stream);

// Linear-interpolation quantile of unsorted data (the convention used by
// every quantile in this library).
double quantile_linear(std::vector<double> values, double p);

}  // namespace esckit
