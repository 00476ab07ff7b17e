#include "esckit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <utility>

namespace esckit {

namespace {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

void check_binary_labels(const std::vector<int>& labels) {
  for (int c : labels) {
    if (c != 0 && c != 1) {
      throw ValidationError("labels must be 0 or 1");
    }
  }
}

}  // namespace

LogisticClassifier::LogisticClassifier(Vec weights, double bias)
    : weights_(std::move(weights)), bias_(bias) {
  if (!weights_.allFinite() || !std::isfinite(bias_)) {
    throw ValidationError("logistic classifier: parameters must be finite");
  }
}

double LogisticClassifier::score(const Vec& x) const {
  if (x.size() != weights_.size()) {
    throw ValidationError("logistic classifier: input dimension mismatch");
  }
  return sigmoid(weights_.dot(x) + bias_);
}

FunctionClassifier::FunctionClassifier(std::function<double(const Vec&)> fn)
    : fn_(std::move(fn)) {
  if (!fn_) throw ValidationError("function classifier: empty callable");
}

double FunctionClassifier::score(const Vec& x) const {
  const double s = fn_(x);
  if (!(s >= 0.0 && s <= 1.0)) {
    throw ValidationError("function classifier: score outside [0, 1]");
  }
  return s;
}

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kOriginalX:
      return "ORIGINAL_X";
    case Strategy::kOriginalY:
      return "ORIGINAL_Y";
    case Strategy::kSscMean:
      return "SSC_MEAN";
    case Strategy::kSscRandom:
      return "SSC_RANDOM";
    case Strategy::kEsc:
      return "ESC";
  }
  throw ValidationError("unknown strategy tag");
}

EscScore esc_score(const PosteriorEnsemble& ensemble,
                   const ClassifierModel& classifier) {
  const Eigen::Index K = ensemble.samples.rows();
  if (K < 1) throw ValidationError("esc_score: ensemble is empty");

  std::vector<double> per_sample(static_cast<std::size_t>(K));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < K; ++i) {
    const double s = classifier.score(ensemble.samples.row(i).transpose());
    per_sample[static_cast<std::size_t>(i)] = s;
    sum += s;
  }

  EscScore out;
  out.score = sum / static_cast<double>(K);
  out.sample_scores = make_score_set(std::move(per_sample));
  return out;
}

double ssc_mean_score(const PosteriorEnsemble& ensemble,
                      const ClassifierModel& classifier) {
  if (ensemble.samples.rows() < 1) {
    throw ValidationError("ssc_mean_score: ensemble is empty");
  }
  const Vec mean = ensemble.samples.colwise().mean().transpose();
  return classifier.score(mean);
}

double ssc_random_score(const PosteriorEnsemble& ensemble, RngStream& stream,
                        const ClassifierModel& classifier) {
  const Eigen::Index K = ensemble.samples.rows();
  if (K < 1) throw ValidationError("ssc_random_score: ensemble is empty");
  const auto pick = stream.uniform_below(static_cast<std::uint64_t>(K));
  return classifier.score(
      ensemble.samples.row(static_cast<Eigen::Index>(pick)).transpose());
}

int decide(double score, double decision_threshold) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("decide: score outside [0, 1]");
  }
  return score > decision_threshold ? 1 : 0;
}

LogisticLossGrad logistic_loss_and_gradient(const Vec& weights, double bias,
                                            const Mat& inputs,
                                            const std::vector<int>& labels) {
  const Eigen::Index n = inputs.rows();
  if (n < 1) throw ValidationError("logistic loss: empty input");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("logistic loss: label count mismatch");
  }
  if (inputs.cols() != weights.size()) {
    throw ValidationError("logistic loss: weight dimension mismatch");
  }

  LogisticLossGrad out;
  out.grad_weights = Vec::Zero(weights.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = static_cast<double>(labels[static_cast<std::size_t>(i)]);
    const double z = weights.dot(inputs.row(i).transpose()) + bias;
    out.loss += softplus(z) - c * z;
    const double r = sigmoid(z) - c;
    out.grad_weights += r * inputs.row(i).transpose();
    out.grad_bias += r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.grad_weights *= inv_n;
  out.grad_bias *= inv_n;
  return out;
}

LogisticFit train_logistic(const Mat& inputs, const std::vector<int>& labels,
                           const LogisticTrainParams& params,
                           RngStream& stream) {
  const Eigen::Index n = inputs.rows();
  if (n < 2) throw ValidationError("train_logistic: need at least two examples");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("train_logistic: label count mismatch");
  }
  check_binary_labels(labels);
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) {
    throw ValidationError("train_logistic: both classes must be present");
  }
  if (params.iterations < 0 || params.learning_rate <= 0.0 ||
      params.batch_size < 0) {
    throw ValidationError("train_logistic: bad hyperparameters");
  }

  Vec w = Vec::Zero(inputs.cols());
  double b = 0.0;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(params.iterations));

  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::size_t cursor = order.size();

  for (int it = 0; it < params.iterations; ++it) {
    const Mat* batch_x = &inputs;
    const std::vector<int>* batch_c = &labels;
    Mat mini_x;
    std::vector<int> mini_c;
    if (params.batch_size > 0 && params.batch_size < n) {
      mini_x.resize(params.batch_size, inputs.cols());
      mini_c.resize(static_cast<std::size_t>(params.batch_size));
      for (int k = 0; k < params.batch_size; ++k) {
        if (cursor == order.size()) {
          for (std::size_t j = order.size(); j > 1; --j) {
            const auto pick = stream.uniform_below(j);
            std::swap(order[j - 1], order[pick]);
          }
          cursor = 0;
        }
        const int row = order[cursor++];
        mini_x.row(k) = inputs.row(row);
        mini_c[static_cast<std::size_t>(k)] = labels[static_cast<std::size_t>(row)];
      }
      batch_x = &mini_x;
      batch_c = &mini_c;
    }

    const LogisticLossGrad lg = logistic_loss_and_gradient(w, b, *batch_x, *batch_c);
    if (!std::isfinite(lg.loss)) {
      throw TrainingError("train_logistic: loss diverged at iteration " +
                          std::to_string(it));
    }
    trace.push_back(lg.loss);
    w -= params.learning_rate * lg.grad_weights;
    b -= params.learning_rate * lg.grad_bias;
  }

  return LogisticFit{LogisticClassifier(std::move(w), b), std::move(trace)};
}

BalancedBatchSampler::BalancedBatchSampler(const Eigen::MatrixXi& labels,
                                           int batch_half_size,
                                           int major_label, double major_ratio)
    : batch_half_size_(batch_half_size),
      major_label_(major_label),
      major_ratio_(major_ratio) {
  const Eigen::Index n = labels.rows();
  const Eigen::Index L = labels.cols();
  if (n < 2 || L < 1) {
    throw ValidationError("balanced batches: need examples and labels");
  }
  if (batch_half_size < 1) {
    throw ValidationError("balanced batches: batch_half_size must be >= 1");
  }
  if (major_label < 0 || major_label >= L) {
    throw ValidationError("balanced batches: major label out of range");
  }
  if (!(major_ratio >= 0.0 && major_ratio <= 1.0)) {
    throw ValidationError("balanced batches: major_ratio must be in [0, 1]");
  }

  positives_.resize(static_cast<std::size_t>(L));
  negatives_.resize(static_cast<std::size_t>(L));
  negatives_by_major_.resize(static_cast<std::size_t>(L));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int mv = labels(i, major_label);
    if (mv != 0 && mv != 1) throw ValidationError("balanced batches: labels must be 0/1");
    for (Eigen::Index j = 0; j < L; ++j) {
      const int v = labels(i, j);
      if (v != 0 && v != 1) throw ValidationError("balanced batches: labels must be 0/1");
      auto& pos = positives_[static_cast<std::size_t>(j)];
      auto& neg = negatives_[static_cast<std::size_t>(j)];
      if (v == 1) {
        pos.push_back(static_cast<int>(i));
      } else {
        neg.push_back(static_cast<int>(i));
        negatives_by_major_[static_cast<std::size_t>(j)][static_cast<std::size_t>(mv)]
            .push_back(static_cast<int>(i));
      }
    }
  }
  for (Eigen::Index j = 0; j < L; ++j) {
    if (positives_[static_cast<std::size_t>(j)].empty()) {
      throw ValidationError("balanced batches: label " + std::to_string(j) +
                            " has no positive examples");
    }
    if (negatives_[static_cast<std::size_t>(j)].empty()) {
      throw ValidationError("balanced batches: label " + std::to_string(j) +
                            " has no negative examples");
    }
  }
}

std::vector<int> BalancedBatchSampler::next(RngStream& stream) const {
  const auto n_labels = positives_.size();
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(2 * batch_half_size_));

  const auto draw_from = [&stream](const std::vector<int>& pool) {
    return pool[static_cast<std::size_t>(
        stream.uniform_below(static_cast<std::uint64_t>(pool.size())))];
  };

  for (int round = 0; round < batch_half_size_; ++round) {
    const auto L = static_cast<std::size_t>(
        stream.uniform_below(static_cast<std::uint64_t>(n_labels)));
    batch.push_back(draw_from(positives_[L]));

    if (static_cast<int>(L) == major_label_) {
      batch.push_back(draw_from(negatives_[L]));
    } else {
      const int major_value = stream.uniform01() < major_ratio_ ? 1 : 0;
      const auto& pool =
          negatives_by_major_[L][static_cast<std::size_t>(major_value)];
      // The requested co-occurrence pool can be empty in small datasets;
      // fall back to any negative for the label so the batch stays full.
      batch.push_back(draw_from(pool.empty() ? negatives_[L] : pool));
    }
  }
  return batch;
}

std::vector<StrategyResult> strategy_harness(
    const Mat& xs, const Mat& ys, const std::vector<int>& labels,
    const PosteriorSampler& sampler, const ClassifierModel& f_x,
    const ClassifierModel& f_y, const StrategyHarnessConfig& config,
    const RngStream& base_stream) {
  const Eigen::Index n = xs.rows();
  if (n < 1) throw ValidationError("strategy_harness: empty dataset");
  if (ys.rows() != n || static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("strategy_harness: x, y and labels must align");
  }
  if (config.K < 1) throw ValidationError("strategy_harness: K must be >= 1");
  check_binary_labels(labels);
  if (!sampler) throw ValidationError("strategy_harness: missing sampler");

  const std::uint64_t stride =
      config.streams_per_item > 0
          ? config.streams_per_item
          : static_cast<std::uint64_t>(config.K) + 1;

  constexpr std::array<Strategy, 5> kOrder = {
      Strategy::kOriginalX, Strategy::kOriginalY, Strategy::kSscMean,
      Strategy::kSscRandom, Strategy::kEsc};
  std::vector<StrategyResult> results(kOrder.size());
  for (std::size_t s = 0; s < kOrder.size(); ++s) {
    results[s].strategy = kOrder[s];
    results[s].scores.resize(static_cast<std::size_t>(n));
    results[s].decisions.resize(static_cast<std::size_t>(n));
  }

  parallel_for_indexed(static_cast<int>(n), config.n_workers, [&](int i) {
    const std::uint64_t base =
        base_stream.stream_index() + static_cast<std::uint64_t>(i) * stride;
    RngStream sample_stream(base_stream.master_seed(), base);
    RngStream pick_stream(base_stream.master_seed(), base + stride - 1);

    const Vec y = ys.row(i).transpose();
    const PosteriorEnsemble ensemble = sampler(y, sample_stream);

    const auto idx = static_cast<std::size_t>(i);
    results[0].scores[idx] = f_x.score(xs.row(i).transpose());
    results[1].scores[idx] = f_y.score(y);
    results[2].scores[idx] = ssc_mean_score(ensemble, f_x);
    results[3].scores[idx] = ssc_random_score(ensemble, pick_stream, f_x);
    results[4].scores[idx] = esc_score(ensemble, f_x).score;
    for (std::size_t s = 0; s < kOrder.size(); ++s) {
      results[s].decisions[idx] =
          decide(results[s].scores[idx], config.decision_threshold);
    }
  });

  return results;
}

void strategy_results_write_csv(const std::string& path,
                                const std::vector<StrategyResult>& results,
                                const std::vector<int>& true_labels) {
  for (const auto& r : results) {
    if (r.scores.size() != true_labels.size() ||
        r.decisions.size() != true_labels.size()) {
      throw ValidationError("strategy csv: result length mismatch");
    }
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("strategy csv: cannot write " + path);
  out << "item_index,strategy,label_index,score,decision,true_label\n";
  for (const auto& r : results) {
    const std::string name = strategy_name(r.strategy);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      out << i << "," << name << "," << r.label_index << ","
          << format_double(r.scores[i]) << "," << r.decisions[i] << ","
          << true_labels[i] << "\n";
    }
  }
}

}  // namespace esckit
