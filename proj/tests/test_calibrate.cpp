#include <doctest.h>

#include <cmath>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "esckit/calibrate.hpp"
#include "esckit/classify.hpp"
#include "esckit/core.hpp"
#include "esckit/experiments.hpp"
#include "esckit/toyworld.hpp"

using esckit::Mat;
using esckit::RngStream;
using esckit::Vec;

TEST_CASE("hoeffding radius") {
  CHECK(esckit::hoeffding_radius(5000, 0.1) ==
        doctest::Approx(0.015174271293851465).epsilon(1e-15));
  CHECK(esckit::hoeffding_radius(200, 0.1) ==
        doctest::Approx(0.07587135646925731).epsilon(1e-15));
  CHECK(esckit::hoeffding_radius(100, 0.1) ==
        doctest::Approx(0.10729830131446737).epsilon(1e-15));
  CHECK(esckit::hoeffding_radius(100, 1.0) == 0.0);
  CHECK_THROWS_AS((void)esckit::hoeffding_radius(0, 0.1),
                  esckit::ValidationError);
  CHECK_THROWS_AS((void)esckit::hoeffding_radius(100, 0.0),
                  esckit::ValidationError);
}

TEST_CASE("confidence folds the score") {
  CHECK(esckit::confidence(0.5) == 0.5);
  CHECK(esckit::confidence(0.9) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(esckit::confidence(0.1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(esckit::confidence(0.0) == 1.0);
  CHECK(esckit::confidence(1.0) == 1.0);
}

TEST_CASE("empirical selective risk is strict in lambda") {
  const std::vector<int> decisions = {1, 1, 0, 0};
  const std::vector<int> labels = {1, 0, 0, 1};
  const std::vector<double> conf = {0.9, 0.8, 0.7, 0.6};
  // Above 0.75 only the first two items remain; one of them is wrong.
  auto sr = esckit::empirical_selective_risk(decisions, labels, conf, 0.75);
  REQUIRE(sr.risk.has_value());
  CHECK(sr.n_selected == 2);
  CHECK(*sr.risk == doctest::Approx(0.5).epsilon(1e-15));
  // A confidence exactly at lambda is excluded.
  sr = esckit::empirical_selective_risk(decisions, labels, conf, 0.9);
  CHECK(sr.n_selected == 0);
  CHECK_FALSE(sr.risk.has_value());
  sr = esckit::empirical_selective_risk(decisions, labels, conf, 0.0);
  CHECK(sr.n_selected == 4);
  CHECK(*sr.risk == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("threshold selection picks the smallest certified lambda") {
  // 400 items, scores spread so confidence splits at 0.7: half the items
  // have confidence 0.95 and are always right, half have confidence 0.6
  // and are often wrong. With m = 400, r = sqrt(log(10)/800) ~ 0.0536,
  // so lambda must climb past 0.6 before the bound clears alpha = 0.1.
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    scores.push_back(0.95);
    labels.push_back(1);
    // Score 0.4 decides 0 with confidence 0.6; make 30% of them label 1
    // (wrong).
    scores.push_back(0.4);
    labels.push_back(i % 10 < 3 ? 1 : 0);
  }
  esckit::CalibrationConfig config;
  config.alpha = 0.1;
  config.delta = 0.1;
  config.lambda_grid = esckit::default_lambda_grid();
  const esckit::CalibrationOutcome out =
      esckit::calibrate_lambda(scores, labels, config);
  REQUIRE_FALSE(out.failed);
  // At lambda in [0.6, 0.95) only the perfect half is selected: risk 0,
  // bound 0.0536 < 0.1. The first such grid point is 0.6.
  CHECK(out.lambda_hat == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out.coverage_at_lambda_hat == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(out.trace.size() == config.lambda_grid.size());
  // Below the cut the bound includes the noisy half and fails.
  const auto& first = out.trace.front();
  REQUIRE(first.bound.has_value());
  CHECK(*first.bound > config.alpha);
}

TEST_CASE("small calibration sets cannot certify even zero error") {
  // With m = 100 the radius alone is 0.107 > alpha = 0.1, so no threshold
  // qualifies no matter how clean the scores are.
  std::vector<double> scores(100, 0.99);
  std::vector<int> labels(100, 1);
  esckit::CalibrationConfig config;
  config.alpha = 0.1;
  config.delta = 0.1;
  config.lambda_grid = esckit::default_lambda_grid();
  const esckit::CalibrationOutcome out =
      esckit::calibrate_lambda(scores, labels, config);
  CHECK(out.failed);
}

TEST_CASE("calibration validation") {
  esckit::CalibrationConfig config;
  config.lambda_grid = esckit::default_lambda_grid();
  CHECK_THROWS_AS(
      (void)esckit::calibrate_lambda({0.5}, {1, 0}, config),
      esckit::ValidationError);
  config.alpha = 0.0;
  CHECK_THROWS_AS((void)esckit::calibrate_lambda({0.5, 0.5}, {1, 0}, config),
                  esckit::ValidationError);
  config.alpha = 0.1;
  config.lambda_grid = {0.9, 0.4};
  CHECK_THROWS_AS((void)esckit::calibrate_lambda({0.5, 0.5}, {1, 0}, config),
                  esckit::ValidationError);
}

TEST_CASE("calibration report file") {
  std::vector<double> scores(400, 0.99);
  std::vector<int> labels(400, 1);
  esckit::CalibrationConfig config;
  config.lambda_grid = esckit::default_lambda_grid();
  const esckit::CalibrationOutcome out =
      esckit::calibrate_lambda(scores, labels, config);
  const std::string path = "/tmp/esckit_test_calibration.json";
  esckit::calibration_report_write(path, out, config, 400);

  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  CHECK(j["alpha"] == 0.1);
  CHECK(j["m"] == 400);
  CHECK(j["lambda_hat"].is_number());
  CHECK(j["trace"].size() == config.lambda_grid.size());
  // Rows where nothing is selected carry nulls.
  const auto& last = j["trace"].back();
  if (last["n_selected"] == 0) {
    CHECK(last["risk"].is_null());
    CHECK(last["bound"].is_null());
  }
}

TEST_CASE("audit validity rate on an honest pipeline") {
  // Exact posterior scoring with the oracle classifier keeps the guarantee
  // honest, so at least 1 - delta of trials must satisfy the bound.
  const esckit::GmmWorld world = esckit::preset_world("d1m2");
  const esckit::FunctionClassifier f_x = esckit::world_classifier_x(world);
  const esckit::PosteriorSampler sampler = esckit::exact_world_sampler(world, 25);
  esckit::ScorePipeline pipeline = [&](const Mat& ys, const RngStream& base) {
    std::vector<double> scores(static_cast<std::size_t>(ys.rows()));
    for (Eigen::Index i = 0; i < ys.rows(); ++i) {
      RngStream stream(base.master_seed(),
                       base.stream_index() + static_cast<std::uint64_t>(i) * 26);
      scores[static_cast<std::size_t>(i)] =
          esckit::esc_score(sampler(ys.row(i).transpose(), stream), f_x).score;
    }
    return scores;
  };
  esckit::CalibrationConfig config;
  config.alpha = 0.2;
  config.delta = 0.2;
  config.lambda_grid = esckit::default_lambda_grid();
  const esckit::AuditReport report = esckit::audit_guarantee(
      world, pipeline, config, 100, 400, 400, 4, RngStream(43, 0));
  CHECK(report.n_trials == 100);
  CHECK(report.n_failed + report.n_valid <= 100);
  if (report.n_failed < 100) {
    CHECK(report.validity_rate >= 0.7);
  }
}

TEST_CASE("audit requires enough trials") {
  const esckit::GmmWorld world = esckit::preset_world("d1m2");
  esckit::ScorePipeline pipeline = [](const Mat& ys, const RngStream&) {
    return std::vector<double>(static_cast<std::size_t>(ys.rows()), 0.5);
  };
  esckit::CalibrationConfig config;
  config.lambda_grid = esckit::default_lambda_grid();
  CHECK_THROWS_AS((void)esckit::audit_guarantee(world, pipeline, config, 10,
                                                100, 100, 1, RngStream(1, 0)),
                  esckit::ValidationError);
}

TEST_CASE("audit is deterministic in the worker count") {
  const esckit::GmmWorld world = esckit::preset_world("d1m2");
  const esckit::FunctionClassifier f_y = esckit::world_classifier_y(world);
  esckit::ScorePipeline pipeline = [&](const Mat& ys, const RngStream&) {
    std::vector<double> scores(static_cast<std::size_t>(ys.rows()));
    for (Eigen::Index i = 0; i < ys.rows(); ++i) {
      scores[static_cast<std::size_t>(i)] = f_y.score(ys.row(i).transpose());
    }
    return scores;
  };
  esckit::CalibrationConfig config;
  config.alpha = 0.15;
  config.delta = 0.1;
  config.lambda_grid = esckit::default_lambda_grid();
  const esckit::AuditReport a = esckit::audit_guarantee(
      world, pipeline, config, 100, 300, 200, 1, RngStream(47, 0));
  const esckit::AuditReport b = esckit::audit_guarantee(
      world, pipeline, config, 100, 300, 200, 8, RngStream(47, 0));
  CHECK(a.n_failed == b.n_failed);
  CHECK(a.n_valid == b.n_valid);
  CHECK(a.validity_rate == b.validity_rate);
}
