#include "esckit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace esckit {

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of empty set");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double rmse(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ValidationError("rmse: length mismatch");
  if (a.size() == 0) throw ValidationError("rmse: empty input");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

namespace {

// PSD eigenvalue vector with the clamping policy used for FD.
Vec psd_eigenvalues(const Mat& sym, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": eigendecomposition failed");
  }
  Vec ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-8) {
      throw NumericalError(std::string(what) +
                           ": matrix has a significantly negative eigenvalue");
    }
    if (ev[i] < 0.0) ev[i] = 0.0;
  }
  return ev;
}

}  // namespace

double frechet_distance(const GaussianSummary& p, const GaussianSummary& q) {
  if (p.mean.size() != q.mean.size()) {
    throw ValidationError("frechet_distance: dimension mismatch");
  }
  const Mat S1 = 0.5 * (p.covariance + p.covariance.transpose());
  const Mat S2 = 0.5 * (q.covariance + q.covariance.transpose());

  Eigen::SelfAdjointEigenSolver<Mat> es1(S1);
  if (es1.info() != Eigen::Success) {
    throw NumericalError("frechet_distance: eigendecomposition failed");
  }
  Vec ev1 = es1.eigenvalues();
  for (Eigen::Index i = 0; i < ev1.size(); ++i) {
    if (ev1[i] < -1e-8) {
      throw NumericalError("frechet_distance: covariance not PSD");
    }
    ev1[i] = std::sqrt(std::max(0.0, ev1[i]));
  }
  const Mat sqrt1 =
      es1.eigenvectors() * ev1.asDiagonal() * es1.eigenvectors().transpose();

  const Mat product = sqrt1 * S2 * sqrt1;
  const Vec ev = psd_eigenvalues(0.5 * (product + product.transpose()),
                                 "frechet_distance");
  const double trace_sqrt = ev.array().sqrt().sum();

  const double fd = (p.mean - q.mean).squaredNorm() + S1.trace() + S2.trace() -
                    2.0 * trace_sqrt;
  return std::max(0.0, fd);
}

GaussianSummary fit_gaussian(const Mat& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw ValidationError("fit_gaussian: need at least 2 samples");
  GaussianSummary g;
  g.mean = samples.colwise().mean();
  const Mat centered = samples.rowwise() - g.mean.transpose();
  g.covariance =
      centered.transpose() * centered / static_cast<double>(n - 1);
  return g;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (n != labels.size()) throw ValidationError("auroc: length mismatch");
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<std::size_t>(l == 1);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("auroc: both classes must be present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups (Mann-Whitney convention).
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

CurvePoints risk_coverage(const std::vector<int>& decisions,
                          const std::vector<int>& labels,
                          const std::vector<double>& confidences) {
  const std::size_t n = decisions.size();
  if (n == 0) throw ValidationError("risk_coverage: empty input");
  if (labels.size() != n || confidences.size() != n) {
    throw ValidationError("risk_coverage: length mismatch");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
    return a < b;
  });

  CurvePoints curve;
  curve.x.reserve(n);
  curve.y.reserve(n);
  std::size_t errors = 0;
  for (std::size_t k = 0; k < n; ++k) {
    errors += static_cast<std::size_t>(decisions[order[k]] != labels[order[k]]);
    curve.x.push_back(static_cast<double>(k + 1) / static_cast<double>(n));
    curve.y.push_back(static_cast<double>(errors) / static_cast<double>(k + 1));
  }
  return curve;
}

double aurc(const CurvePoints& curve) {
  if (curve.y.empty()) throw ValidationError("aurc: empty curve");
  double sum = 0.0;
  for (double v : curve.y) sum += v;
  return sum / static_cast<double>(curve.y.size());
}

ConfusionMetrics confusion_metrics(const std::vector<int>& decisions,
                                   const std::vector<int>& labels) {
  if (decisions.empty() || decisions.size() != labels.size()) {
    throw ValidationError("confusion_metrics: bad input lengths");
  }
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i] == 1 && labels[i] == 1) ++tp;
    if (decisions[i] == 1 && labels[i] == 0) ++fp;
    if (decisions[i] == 0 && labels[i] == 1) ++fn;
    if (decisions[i] == 0 && labels[i] == 0) ++tn;
  }
  ConfusionMetrics m;
  if (tp + fn > 0) {
    m.tpr = tp / (tp + fn);
  } else {
    m.tpr_defined = false;
  }
  if (tn + fp > 0) {
    m.tnr = tn / (tn + fp);
  } else {
    m.tnr_defined = false;
  }
  if (2 * tp + fp + fn > 0) {
    m.f1 = 2 * tp / (2 * tp + fp + fn);
  } else {
    m.f1_defined = false;
  }
  return m;
}

double mutual_information(const std::vector<double>& u,
                          const std::vector<double>& v, int bins_u,
                          int bins_v) {
  const std::size_t n = u.size();
  if (n < 100) throw ValidationError("mutual_information: need n >= 100");
  if (v.size() != n) throw ValidationError("mutual_information: length mismatch");
  if (bins_u < 1 || bins_v < 1) {
    throw ValidationError("mutual_information: bins must be >= 1");
  }

  const auto bin_of = [](double x, double lo, double hi, int bins) {
    if (hi <= lo) return 0;
    int b = static_cast<int>(static_cast<double>(bins) * (x - lo) / (hi - lo));
    return std::min(b, bins - 1);
  };
  const double ulo = *std::min_element(u.begin(), u.end());
  const double uhi = *std::max_element(u.begin(), u.end());
  const double vlo = *std::min_element(v.begin(), v.end());
  const double vhi = *std::max_element(v.begin(), v.end());

  std::vector<double> joint(static_cast<std::size_t>(bins_u) * bins_v, 0.0);
  std::vector<double> pu(bins_u, 0.0), pv(bins_v, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int bu = bin_of(u[i], ulo, uhi, bins_u);
    const int bv = bin_of(v[i], vlo, vhi, bins_v);
    joint[static_cast<std::size_t>(bu) * bins_v + bv] += inv_n;
    pu[bu] += inv_n;
    pv[bv] += inv_n;
  }
  double mi = 0.0;
  for (int a = 0; a < bins_u; ++a) {
    for (int b = 0; b < bins_v; ++b) {
      const double p = joint[static_cast<std::size_t>(a) * bins_v + b];
      if (p > 0.0) mi += p * std::log(p / (pu[a] * pv[b]));
    }
  }
  return mi;
}

CurvePoints pca_uncertainty_curve(const std::vector<Mat>& ensembles,
                                  const std::vector<Vec>& ground_truths,
                                  const std::vector<int>& pc_counts,
                                  double coord_quantile) {
  if (ensembles.empty() || ensembles.size() != ground_truths.size()) {
    throw ValidationError("pca_uncertainty_curve: bad inputs");
  }
  for (std::size_t i = 1; i < pc_counts.size(); ++i) {
    if (pc_counts[i] <= pc_counts[i - 1]) {
      throw ValidationError("pca_uncertainty_curve: pc_counts must increase");
    }
  }
  const int max_pc = pc_counts.empty() ? 0 : pc_counts.back();

  CurvePoints curve;
  std::vector<double> sums(pc_counts.size(), 0.0);
  for (std::size_t item = 0; item < ensembles.size(); ++item) {
    const Mat& ens = ensembles[item];
    const int d = static_cast<int>(ens.cols());
    if (ens.rows() <= max_pc) {
      throw ValidationError("pca_uncertainty_curve: K must exceed max pc count");
    }
    if (ground_truths[item].size() != d) {
      throw ValidationError("pca_uncertainty_curve: ground truth length mismatch");
    }
    const Vec mean = ens.colwise().mean();
    const Mat centered = ens.rowwise() - mean.transpose();
    const Mat cov =
        centered.transpose() * centered / static_cast<double>(ens.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.info() != Eigen::Success) {
      throw NumericalError("pca_uncertainty_curve: eigendecomposition failed");
    }
    // Eigen sorts ascending; principal components come from the back.
    const Mat& basis = es.eigenvectors();

    const Vec residual0 = ground_truths[item] - mean;
    for (std::size_t pi = 0; pi < pc_counts.size(); ++pi) {
      Vec residual = residual0;
      for (int c = 0; c < pc_counts[pi]; ++c) {
        const Vec pc = basis.col(d - 1 - c);
        residual -= pc * pc.dot(residual0);
      }
      std::vector<double> abs_coords(static_cast<std::size_t>(d));
      for (int c = 0; c < d; ++c) abs_coords[static_cast<std::size_t>(c)] =
          std::abs(residual[c]);
      sums[pi] += quantile_linear(std::move(abs_coords), coord_quantile);
    }
  }
  for (std::size_t pi = 0; pi < pc_counts.size(); ++pi) {
    curve.x.push_back(static_cast<double>(pc_counts[pi]));
    curve.y.push_back(sums[pi] / static_cast<double>(ensembles.size()));
  }
  return curve;
}

std::vector<double> score_interval_sizes(const std::vector<ScoreSet>& sets,
                                         double mass) {
  if (!(mass > 0.0 && mass < 1.0)) {
    throw ValidationError("score_interval_sizes: mass must be in (0,1)");
  }
  std::vector<double> out;
  out.reserve(sets.size());
  for (const ScoreSet& s : sets) {
    if (s.scores.empty()) {
      throw ValidationError("score_interval_sizes: empty score set");
    }
    const double hi = quantile_linear(s.scores, 0.5 + mass / 2.0);
    const double lo = quantile_linear(s.scores, 0.5 - mass / 2.0);
    out.push_back(hi - lo);
  }
  return out;
}

double ensemble_containment(const std::vector<Mat>& ensembles,
                            const std::vector<Vec>& ground_truths,
                            double histogram_quantile) {
  if (ensembles.empty() || ensembles.size() != ground_truths.size()) {
    throw ValidationError("ensemble_containment: bad inputs");
  }
  std::size_t contained = 0;
  for (std::size_t item = 0; item < ensembles.size(); ++item) {
    const Mat& ens = ensembles[item];
    const Eigen::Index K = ens.rows();
    if (K < 3) throw ValidationError("ensemble_containment: K must be >= 3");
    std::vector<double> pairwise;
    pairwise.reserve(static_cast<std::size_t>(K * (K - 1) / 2));
    for (Eigen::Index i = 0; i < K; ++i) {
      for (Eigen::Index j = i + 1; j < K; ++j) {
        pairwise.push_back((ens.row(i) - ens.row(j)).norm());
      }
    }
    const double cutoff = quantile_linear(std::move(pairwise), histogram_quantile);
    double nearest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < K; ++i) {
      nearest = std::min(
          nearest, (ens.row(i) - ground_truths[item].transpose()).norm());
    }
    if (nearest <= cutoff) ++contained;
  }
  return static_cast<double>(contained) / static_cast<double>(ensembles.size());
}

ConvergenceCurve esc_convergence_curve(
    const std::function<EscTrial(int K, RngStream&)>& trial_fn,
    const std::function<double(int K, RngStream&)>& fixed_fn,
    const std::vector<int>& K_grid, int repeats, int items_per_repeat,
    double decision_threshold, RngStream& stream) {
  if (K_grid.empty()) throw ValidationError("esc_convergence_curve: empty grid");
  for (std::size_t i = 1; i < K_grid.size(); ++i) {
    if (K_grid[i] <= K_grid[i - 1]) {
      throw ValidationError("esc_convergence_curve: K_grid must increase");
    }
  }
  if (repeats < 2) throw ValidationError("esc_convergence_curve: repeats >= 2");

  ConvergenceCurve out;
  for (int K : K_grid) {
    double gap_sum = 0.0;
    std::vector<double> fixed_scores;
    fixed_scores.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      int esc_correct = 0;
      int oracle_correct = 0;
      for (int i = 0; i < items_per_repeat; ++i) {
        const EscTrial t = trial_fn(K, stream);
        const int esc_dec = t.esc_score > decision_threshold ? 1 : 0;
        const int orc_dec = t.oracle_score > decision_threshold ? 1 : 0;
        esc_correct += (esc_dec == t.true_class);
        oracle_correct += (orc_dec == t.true_class);
      }
      gap_sum += static_cast<double>(oracle_correct - esc_correct) /
                 static_cast<double>(items_per_repeat);
      fixed_scores.push_back(fixed_fn(K, stream));
    }
    out.accuracy_gap.x.push_back(static_cast<double>(K));
    out.accuracy_gap.y.push_back(gap_sum / static_cast<double>(repeats));

    double mean = 0.0;
    for (double s : fixed_scores) mean += s;
    mean /= static_cast<double>(repeats);
    double var = 0.0;
    for (double s : fixed_scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(repeats - 1);
    out.score_std.x.push_back(static_cast<double>(K));
    out.score_std.y.push_back(std::sqrt(var));
  }
  return out;
}

}  // namespace esckit
