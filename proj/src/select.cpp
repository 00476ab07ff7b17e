#include "esckit/select.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "esckit/classify.hpp"

namespace esckit {

namespace {

Selection pick(const PosteriorEnsemble& ensemble, const AgreementFilter& filtered,
               std::size_t position_in_filter) {
  Selection s;
  s.index = filtered.indices[position_in_filter];
  s.score = filtered.scores[position_in_filter];
  s.signal = make_signal(ensemble.samples.row(s.index).transpose(),
                         ensemble.sample_rate_hz);
  return s;
}

void check_filter(const PosteriorEnsemble& ensemble,
                  const AgreementFilter& filtered) {
  if (filtered.indices.empty() ||
      filtered.indices.size() != filtered.scores.size()) {
    throw ValidationError("selection: filter is empty or inconsistent");
  }
  for (int idx : filtered.indices) {
    if (idx < 0 || idx >= ensemble.samples.rows()) {
      throw ValidationError("selection: filter index out of range");
    }
  }
}

}  // namespace

AgreementFilter agreement_filter(const PosteriorEnsemble& ensemble,
                                 const ScoreSet& scores, int esc_decision,
                                 double decision_threshold) {
  const Eigen::Index K = ensemble.samples.rows();
  if (K < 1) throw ValidationError("agreement filter: ensemble is empty");
  if (static_cast<Eigen::Index>(scores.scores.size()) != K) {
    throw ValidationError("agreement filter: one score per sample required");
  }
  if (esc_decision != 0 && esc_decision != 1) {
    throw ValidationError("agreement filter: decision must be 0 or 1");
  }

  AgreementFilter out;
  for (Eigen::Index i = 0; i < K; ++i) {
    const double s = scores.scores[static_cast<std::size_t>(i)];
    if (decide(s, decision_threshold) == esc_decision) {
      out.indices.push_back(static_cast<int>(i));
      out.scores.push_back(s);
    }
  }
  if (out.indices.empty()) {
    out.fallback_full = true;
    for (Eigen::Index i = 0; i < K; ++i) {
      out.indices.push_back(static_cast<int>(i));
      out.scores.push_back(scores.scores[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

double silverman_bandwidth(const std::vector<double>& scores) {
  const std::size_t k = scores.size();
  if (k == 0) throw ValidationError("bandwidth: empty score set");
  double sd = 0.0;
  if (k >= 2) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (double s : scores) ss += (s - mean) * (s - mean);
    sd = std::sqrt(ss / static_cast<double>(k - 1));
  }
  const double bw =
      1.06 * sd * std::pow(static_cast<double>(k), -0.2);
  return std::max(bw, 1e-3);
}

KdeEstimate kde(const std::vector<double>& scores, int bins,
                double bandwidth) {
  const std::size_t k = scores.size();
  if (k == 0) throw ValidationError("kde: empty score set");
  if (bins < 2) throw ValidationError("kde: need at least two bins");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("kde: scores must lie in [0, 1]");
    }
  }

  KdeEstimate est;
  est.bandwidth = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(scores);
  est.grid.resize(static_cast<std::size_t>(bins));
  est.density.resize(static_cast<std::size_t>(bins));

  const double inv_norm =
      1.0 / (static_cast<double>(k) * est.bandwidth * std::sqrt(2.0 * M_PI));
  for (int b = 0; b < bins; ++b) {
    const double center = (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
    double sum = 0.0;
    for (double s : scores) {
      const double u = (center - s) / est.bandwidth;
      sum += std::exp(-0.5 * u * u);
    }
    est.grid[static_cast<std::size_t>(b)] = center;
    est.density[static_cast<std::size_t>(b)] = inv_norm * sum;
  }
  return est;
}

Selection most_likely_score_ecg(const PosteriorEnsemble& ensemble,
                                const AgreementFilter& filtered,
                                const KdeEstimate& density) {
  check_filter(ensemble, filtered);
  if (density.grid.empty() || density.grid.size() != density.density.size()) {
    throw ValidationError("selection: malformed density estimate");
  }

  std::size_t best_bin = 0;
  for (std::size_t b = 1; b < density.density.size(); ++b) {
    if (density.density[b] > density.density[best_bin]) best_bin = b;
  }
  const double target = density.grid[best_bin];

  std::size_t best = 0;
  double best_gap = std::abs(filtered.scores[0] - target);
  for (std::size_t i = 1; i < filtered.scores.size(); ++i) {
    const double gap = std::abs(filtered.scores[i] - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return pick(ensemble, filtered, best);
}

Selection expected_score_ecg(const PosteriorEnsemble& ensemble,
                             const AgreementFilter& filtered) {
  check_filter(ensemble, filtered);
  double mean = 0.0;
  for (double s : filtered.scores) mean += s;
  mean /= static_cast<double>(filtered.scores.size());

  std::size_t best = 0;
  double best_gap = std::abs(filtered.scores[0] - mean);
  for (std::size_t i = 1; i < filtered.scores.size(); ++i) {
    const double gap = std::abs(filtered.scores[i] - mean);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return pick(ensemble, filtered, best);
}

Selection minmax_score_ecg(const PosteriorEnsemble& ensemble,
                           const AgreementFilter& filtered, int esc_decision) {
  check_filter(ensemble, filtered);
  if (esc_decision != 0 && esc_decision != 1) {
    throw ValidationError("selection: decision must be 0 or 1");
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < filtered.scores.size(); ++i) {
    const bool better = esc_decision == 1
                            ? filtered.scores[i] > filtered.scores[best]
                            : filtered.scores[i] < filtered.scores[best];
    if (better) best = i;
  }
  return pick(ensemble, filtered, best);
}

void selection_report_write(const std::string& path,
                            const std::vector<SelectionRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j;
    j["item_index"] = r.item_index;
    j["strategy"] = r.strategy;
    j["selected_index"] = r.selected_index;
    j["selected_score"] = r.selected_score;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("selection report: cannot write " + path);
  out << arr.dump(2) << "\n";
}

}  // namespace esckit
