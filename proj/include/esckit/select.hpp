#pragma once

#include <string>
#include <vector>

#include "esckit/core.hpp"

namespace esckit {

// Ensemble members whose individual decision matches the ensemble-level
// decision; indices refer to rows of the original ensemble.
struct AgreementFilter {
  std::vector<int> indices;
  std::vector<double> scores;
  // The strict filter can empty out (every individual score on the other
  // side of the threshold); then the full ensemble is kept and flagged.
  bool fallback_full = false;
};

AgreementFilter agreement_filter(const PosteriorEnsemble& ensemble,
                                 const ScoreSet& scores, int esc_decision,
                                 double decision_threshold);

struct KdeEstimate {
  std::vector<double> grid;  // bin centers, strictly increasing
  std::vector<double> density;
  double bandwidth = 0.0;
};

// 1.06 * sd * k^(-1/5), floored at 1e-3 so constant score sets stay finite.
double silverman_bandwidth(const std::vector<double>& scores);

// Gaussian-kernel density of the scores evaluated at `bins` bin centers on
// [0, 1]. bandwidth <= 0 selects the Silverman default.
KdeEstimate kde(const std::vector<double>& scores, int bins = 64,
                double bandwidth = 0.0);

// One ensemble member chosen for display.
struct Selection {
  int index = 0;  // row in the full ensemble
  double score = 0.0;
  Signal signal;
};

// The member whose score lies nearest the densest score bin. All ties
// resolve to the lowest index.
Selection most_likely_score_ecg(const PosteriorEnsemble& ensemble,
                                const AgreementFilter& filtered,
                                const KdeEstimate& density);

// The member whose score lies nearest the mean filtered score.
Selection expected_score_ecg(const PosteriorEnsemble& ensemble,
                             const AgreementFilter& filtered);

// The most committed member: highest score for a positive decision, lowest
// for a negative one.
Selection minmax_score_ecg(const PosteriorEnsemble& ensemble,
                           const AgreementFilter& filtered, int esc_decision);

struct SelectionRecord {
  int item_index = 0;
  std::string strategy;
  int selected_index = 0;
  double selected_score = 0.0;
};

// JSON array of {item_index, strategy, selected_index, selected_score}.
void selection_report_write(const std::string& path,
                            const std::vector<SelectionRecord>& records);

}  // namespace esckit
