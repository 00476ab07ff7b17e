#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "esckit/classify.hpp"
#include "esckit/core.hpp"

using esckit::Mat;
using esckit::RngStream;
using esckit::Vec;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

esckit::LogisticClassifier unit_classifier() {
  Vec w(1);
  w << 1.0;
  return esckit::LogisticClassifier(w, 0.0);
}

esckit::PosteriorEnsemble two_sample_ensemble() {
  Vec y(1);
  y << 0.5;
  esckit::PosteriorEnsemble ens;
  ens.condition = esckit::make_signal(y, 1.0);
  ens.samples = Mat(2, 1);
  ens.samples << 2.5, -1.5;
  ens.sample_rate_hz = 1.0;
  return ens;
}

}  // namespace

TEST_CASE("ensemble score vs mean-then-score hand case") {
  const auto ens = two_sample_ensemble();
  const auto clf = unit_classifier();

  const esckit::EscScore esc = esckit::esc_score(ens, clf);
  CHECK(esc.score == doctest::Approx(0.5532836718925565).epsilon(1e-15));
  REQUIRE(esc.sample_scores.scores.size() == 2);
  CHECK(esc.sample_scores.scores[0] ==
        doctest::Approx(sigmoid(2.5)).epsilon(1e-15));
  CHECK(esc.sample_scores.scores[1] ==
        doctest::Approx(sigmoid(-1.5)).epsilon(1e-15));

  // The sample mean is 0.5, and scoring it lands elsewhere: the two
  // operations do not commute.
  CHECK(esckit::ssc_mean_score(ens, clf) ==
        doctest::Approx(0.6224593312018546).epsilon(1e-15));
}

TEST_CASE("ssc_random returns one of the sample scores deterministically") {
  const auto ens = two_sample_ensemble();
  const auto clf = unit_classifier();
  RngStream a(19, 3);
  const double s1 = esckit::ssc_random_score(ens, a, clf);
  const bool is_sample = s1 == doctest::Approx(sigmoid(2.5)).epsilon(1e-15) ||
                         s1 == doctest::Approx(sigmoid(-1.5)).epsilon(1e-15);
  CHECK(is_sample);
  RngStream b(19, 3);
  CHECK(esckit::ssc_random_score(ens, b, clf) == s1);
}

TEST_CASE("decide uses a strict threshold") {
  CHECK(esckit::decide(0.5, 0.5) == 0);
  CHECK(esckit::decide(0.50001, 0.5) == 1);
  CHECK(esckit::decide(0.49999, 0.5) == 0);
  CHECK(esckit::decide(1.0, 0.5) == 1);
  CHECK(esckit::decide(1.0, 1.0) == 0);
  CHECK(esckit::decide(0.0, 0.0) == 0);
  CHECK_THROWS_AS((void)esckit::decide(1.5, 0.5), esckit::ValidationError);
}

TEST_CASE("logistic loss at zero parameters is ln 2") {
  Mat x(4, 2);
  x << 1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.25, -0.75;
  const std::vector<int> labels = {0, 1, 1, 0};
  const auto lg =
      esckit::logistic_loss_and_gradient(Vec::Zero(2), 0.0, x, labels);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("logistic gradient matches finite differences") {
  RngStream stream(23, 0);
  const int n = 12, d = 3;
  Mat x(n, d);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = stream.gaussian();
    labels[i] = static_cast<int>(stream.uniform_below(2));
  }
  Vec w(d);
  w << 0.3, -0.8, 0.1;
  const double b = 0.2;
  const auto lg = esckit::logistic_loss_and_gradient(w, b, x, labels);

  const double h = 1e-6;
  for (int j = 0; j < d; ++j) {
    Vec wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double numeric =
        (esckit::logistic_loss_and_gradient(wp, b, x, labels).loss -
         esckit::logistic_loss_and_gradient(wm, b, x, labels).loss) /
        (2.0 * h);
    CHECK(lg.grad_weights[j] == doctest::Approx(numeric).epsilon(1e-6));
  }
  const double numeric_b =
      (esckit::logistic_loss_and_gradient(w, b + h, x, labels).loss -
       esckit::logistic_loss_and_gradient(w, b - h, x, labels).loss) /
      (2.0 * h);
  CHECK(lg.grad_bias == doctest::Approx(numeric_b).epsilon(1e-6));
}

TEST_CASE("training separates a separable problem") {
  RngStream stream(29, 0);
  const int n = 200;
  Mat x(n, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    x(i, 0) = (c == 1 ? 1.5 : -1.5) + 0.3 * stream.gaussian();
    labels[i] = c;
  }
  esckit::LogisticTrainParams params;
  params.iterations = 400;
  const esckit::LogisticFit fit =
      esckit::train_logistic(x, labels, params, stream);
  REQUIRE(fit.loss_trace.size() == 400);
  CHECK(fit.loss_trace.back() < 0.25);
  CHECK(fit.loss_trace.back() < fit.loss_trace.front());

  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const int guess = fit.model.score(x.row(i).transpose()) > 0.5 ? 1 : 0;
    correct += guess == labels[i] ? 1 : 0;
  }
  CHECK(correct >= n * 95 / 100);
}

TEST_CASE("mini-batch training is deterministic per stream") {
  RngStream data(31, 0);
  const int n = 64;
  Mat x(n, 2);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    x(i, 0) = (c == 1 ? 1.0 : -1.0) + 0.5 * data.gaussian();
    x(i, 1) = data.gaussian();
    labels[i] = c;
  }
  esckit::LogisticTrainParams params;
  params.iterations = 50;
  params.batch_size = 8;
  RngStream s1(31, 1), s2(31, 1);
  const auto f1 = esckit::train_logistic(x, labels, params, s1);
  const auto f2 = esckit::train_logistic(x, labels, params, s2);
  CHECK(f1.model.bias() == f2.model.bias());
  CHECK((f1.model.weights() - f2.model.weights()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training requires both classes") {
  Mat x(4, 1);
  x << 1.0, 2.0, 3.0, 4.0;
  RngStream stream(33, 0);
  CHECK_THROWS_AS((void)esckit::train_logistic(x, {1, 1, 1, 1}, {}, stream),
                  esckit::ValidationError);
}

TEST_CASE("classifier input validation") {
  const auto clf = unit_classifier();
  Vec wrong(2);
  wrong << 1.0, 2.0;
  CHECK_THROWS_AS((void)clf.score(wrong), esckit::ValidationError);
  CHECK_THROWS_AS(
      (void)esckit::FunctionClassifier([](const Vec&) { return 1.5; })
          .score(Vec::Zero(1)),
      esckit::ValidationError);
}

TEST_CASE("balanced batches alternate positive and negative rows") {
  Eigen::MatrixXi labels(6, 1);
  labels << 1, 0, 1, 0, 1, 0;
  esckit::BalancedBatchSampler sampler(labels, 4, 0, 0.2);
  CHECK(sampler.batch_size() == 8);
  RngStream stream(35, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<int> batch = sampler.next(stream);
    REQUIRE(batch.size() == 8);
    for (int r = 0; r < 4; ++r) {
      CHECK(labels(batch[2 * r], 0) == 1);
      CHECK(labels(batch[2 * r + 1], 0) == 0);
    }
  }
}

TEST_CASE("balanced batches steer negatives by the major label") {
  // Rows 2 and 3 are positive only for label 1, so rounds that drew them
  // chose label 1 and steered the negative through the major-label draw.
  Eigen::MatrixXi labels(8, 2);
  labels << 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1;
  const double major_ratio = 0.2;
  esckit::BalancedBatchSampler sampler(labels, 8, 0, major_ratio);
  RngStream stream(37, 0);
  int steered_rounds = 0, major_one = 0;
  for (int rep = 0; rep < 600; ++rep) {
    const std::vector<int> batch = sampler.next(stream);
    for (int r = 0; r < 8; ++r) {
      const int pos = batch[2 * r];
      const int neg = batch[2 * r + 1];
      if (pos == 2 || pos == 3) {
        CHECK(labels(neg, 1) == 0);
        ++steered_rounds;
        major_one += labels(neg, 0);
      }
    }
  }
  REQUIRE(steered_rounds > 500);
  const double frac = static_cast<double>(major_one) / steered_rounds;
  CHECK(frac > major_ratio - 0.08);
  CHECK(frac < major_ratio + 0.08);
}

TEST_CASE("balanced batches validation") {
  Eigen::MatrixXi all_positive(3, 1);
  all_positive << 1, 1, 1;
  CHECK_THROWS_AS(esckit::BalancedBatchSampler(all_positive, 2, 0, 0.2),
                  esckit::ValidationError);
  Eigen::MatrixXi ok(4, 1);
  ok << 1, 0, 1, 0;
  CHECK_THROWS_AS(esckit::BalancedBatchSampler(ok, 0, 0, 0.2),
                  esckit::ValidationError);
  CHECK_THROWS_AS(esckit::BalancedBatchSampler(ok, 2, 5, 0.2),
                  esckit::ValidationError);
  CHECK_THROWS_AS(esckit::BalancedBatchSampler(ok, 2, 0, 1.5),
                  esckit::ValidationError);
}

TEST_CASE("strategy harness hand values and worker invariance") {
  const int n = 6;
  Mat xs(n, 1), ys(n, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    xs(i, 0) = -2.0 + i * 0.8;
    ys(i, 0) = xs(i, 0) + 0.1;
    labels[i] = xs(i, 0) > 0 ? 1 : 0;
  }
  // Deterministic two-sample ensemble around the observation.
  esckit::PosteriorSampler sampler = [](const Vec& y, RngStream&) {
    esckit::PosteriorEnsemble ens;
    ens.condition = esckit::make_signal(y, 1.0);
    ens.samples = Mat(2, 1);
    ens.samples << y[0] + 2.0, y[0] - 2.0;
    ens.sample_rate_hz = 1.0;
    return ens;
  };
  const auto clf = unit_classifier();

  esckit::StrategyHarnessConfig config;
  config.K = 2;
  config.n_workers = 1;
  const RngStream base(39, 1000);
  const auto r1 =
      esckit::strategy_harness(xs, ys, labels, sampler, clf, clf, config, base);
  REQUIRE(r1.size() == 5);

  config.n_workers = 3;
  const auto r3 =
      esckit::strategy_harness(xs, ys, labels, sampler, clf, clf, config, base);
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(r1[s].strategy == r3[s].strategy);
    CHECK(r1[s].scores == r3[s].scores);
    CHECK(r1[s].decisions == r3[s].decisions);
  }

  CHECK(r1[0].strategy == esckit::Strategy::kOriginalX);
  CHECK(r1[1].strategy == esckit::Strategy::kOriginalY);
  CHECK(r1[2].strategy == esckit::Strategy::kSscMean);
  CHECK(r1[3].strategy == esckit::Strategy::kSscRandom);
  CHECK(r1[4].strategy == esckit::Strategy::kEsc);

  for (int i = 0; i < n; ++i) {
    CHECK(r1[0].scores[i] ==
          doctest::Approx(sigmoid(xs(i, 0))).epsilon(1e-15));
    CHECK(r1[1].scores[i] ==
          doctest::Approx(sigmoid(ys(i, 0))).epsilon(1e-15));
    // The ensemble mean is exactly y.
    CHECK(r1[2].scores[i] ==
          doctest::Approx(sigmoid(ys(i, 0))).epsilon(1e-15));
    const double esc =
        0.5 * (sigmoid(ys(i, 0) + 2.0) + sigmoid(ys(i, 0) - 2.0));
    CHECK(r1[4].scores[i] == doctest::Approx(esc).epsilon(1e-15));
    CHECK(r1[4].decisions[i] == esckit::decide(esc, 0.5));
  }
}

TEST_CASE("strategy names") {
  CHECK(esckit::strategy_name(esckit::Strategy::kOriginalX) == "ORIGINAL_X");
  CHECK(esckit::strategy_name(esckit::Strategy::kOriginalY) == "ORIGINAL_Y");
  CHECK(esckit::strategy_name(esckit::Strategy::kSscMean) == "SSC_MEAN");
  CHECK(esckit::strategy_name(esckit::Strategy::kSscRandom) == "SSC_RANDOM");
  CHECK(esckit::strategy_name(esckit::Strategy::kEsc) == "ESC");
}

TEST_CASE("strategy results csv shape") {
  esckit::StrategyResult r;
  r.strategy = esckit::Strategy::kEsc;
  r.scores = {0.25, 0.75};
  r.decisions = {0, 1};
  const std::string path = "/tmp/esckit_test_strategies.csv";
  esckit::strategy_results_write_csv(path, {r}, {0, 1});
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "item_index,strategy,label_index,score,decision,true_label");
  REQUIRE(std::getline(in, line));
  CHECK(line == "0,ESC,0,0.25,0,0");
  REQUIRE(std::getline(in, line));
  CHECK(line == "1,ESC,0,0.75,1,1");
  CHECK_FALSE(std::getline(in, line));
}
