#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "esckit/core.hpp"

namespace esckit {

// A deterministic scorer over clean-signal space with output in [0, 1].
class ClassifierModel {
 public:
  virtual ~ClassifierModel() = default;
  virtual double score(const Vec& x) const = 0;
};

class LogisticClassifier final : public ClassifierModel {
 public:
  LogisticClassifier(Vec weights, double bias);

  double score(const Vec& x) const override;

  const Vec& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  Vec weights_;
  double bias_;
};

// Adapts an arbitrary score function (an exact oracle, a posterior
// probability) to the classifier interface.
class FunctionClassifier final : public ClassifierModel {
 public:
  explicit FunctionClassifier(std::function<double(const Vec&)> fn);
  double score(const Vec& x) const override;

 private:
  std::function<double(const Vec&)> fn_;
};

enum class Strategy { kOriginalX, kOriginalY, kSscMean, kSscRandom, kEsc };

// Stable tag used in exports: ORIGINAL_X, ORIGINAL_Y, SSC_MEAN,
// SSC_RANDOM, ESC.
std::string strategy_name(Strategy strategy);

struct StrategyResult {
  Strategy strategy = Strategy::kEsc;
  int label_index = 0;
  std::vector<double> scores;
  std::vector<int> decisions;
};

struct EscScore {
  double score = 0.0;
  // One classifier score per ensemble sample, kept for selection and
  // uncertainty summaries downstream.
  ScoreSet sample_scores;
};

// Mean classifier score over the ensemble.
EscScore esc_score(const PosteriorEnsemble& ensemble,
                   const ClassifierModel& classifier);

// Score of the coordinate-wise ensemble mean.
double ssc_mean_score(const PosteriorEnsemble& ensemble,
                      const ClassifierModel& classifier);

// Score of one uniformly chosen ensemble sample.
double ssc_random_score(const PosteriorEnsemble& ensemble, RngStream& stream,
                        const ClassifierModel& classifier);

// Strict threshold: a score exactly equal to the threshold maps to 0.
int decide(double score, double decision_threshold);

struct LogisticTrainParams {
  int iterations = 500;
  double learning_rate = 0.5;
  // 0 trains on the full set every step; otherwise mini-batches of this
  // size are drawn from a per-iteration shuffle.
  int batch_size = 0;
};

struct LogisticFit {
  LogisticClassifier model;
  std::vector<double> loss_trace;
};

// Gradient descent on mean binary cross-entropy from zero-initialised
// parameters. Requires both classes present.
LogisticFit train_logistic(const Mat& inputs, const std::vector<int>& labels,
                           const LogisticTrainParams& params,
                           RngStream& stream);

struct LogisticLossGrad {
  double loss = 0.0;
  Vec grad_weights;
  double grad_bias = 0.0;
};

// Mean binary cross-entropy and its exact gradient at (weights, bias).
LogisticLossGrad logistic_loss_and_gradient(const Vec& weights, double bias,
                                            const Mat& inputs,
                                            const std::vector<int>& labels);

// Draws batches of size 2b: each of b rounds picks a label uniformly, one
// positive example for it, and one negative example, where negatives for
// non-major labels are steered by a Bernoulli(major_ratio) draw of the
// major label's value.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(const Eigen::MatrixXi& labels, int batch_half_size,
                       int major_label, double major_ratio);

  // Indices into the training set, length exactly 2 * batch_half_size,
  // alternating positive/negative per round.
  std::vector<int> next(RngStream& stream) const;

  int batch_size() const { return 2 * batch_half_size_; }

 private:
  int batch_half_size_;
  int major_label_;
  double major_ratio_;
  std::vector<std::vector<int>> positives_;  // per label
  std::vector<std::vector<int>> negatives_;  // per label
  // negatives_by_major_[j][v]: indices with label j absent and the major
  // label equal to v. Only consulted for j != major_label_.
  std::vector<std::array<std::vector<int>, 2>> negatives_by_major_;
};

// Produces the posterior ensemble for one observation. The stream argument
// carries the identity the sampler may branch from; a sampler that spawns
// per-chain sub-streams uses stream_index .. stream_index + K - 1.
using PosteriorSampler =
    std::function<PosteriorEnsemble(const Vec& y, RngStream& stream)>;

struct StrategyHarnessConfig {
  int K = 100;
  double decision_threshold = 0.5;
  int n_workers = 1;
  // Stream identities reserved per item; 0 means K + 1 (K for the sampler,
  // one for the harness's own sample-index draw).
  std::uint64_t streams_per_item = 0;
};

// Scores every item under all five strategies. ORIGINAL_X applies f_x to
// the clean signal, ORIGINAL_Y applies f_y to the observation, the rest
// work from the sampled ensemble. Items are independent and may be
// processed on several workers; output is identical for any worker count.
std::vector<StrategyResult> strategy_harness(
    const Mat& xs, const Mat& ys, const std::vector<int>& labels,
    const PosteriorSampler& sampler, const ClassifierModel& f_x,
    const ClassifierModel& f_y, const StrategyHarnessConfig& config,
    const RngStream& base_stream);

// CSV with columns item_index, strategy, label_index, score, decision,
// true_label; rows grouped by strategy, items ascending.
void strategy_results_write_csv(const std::string& path,
                                const std::vector<StrategyResult>& results,
                                const std::vector<int>& true_labels);

}  // namespace esckit
