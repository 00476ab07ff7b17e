#include "esckit/calibrate.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "esckit/classify.hpp"

namespace esckit {

namespace {

void check_config(const CalibrationConfig& config) {
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) {
    throw ValidationError("calibration: alpha must be in (0, 1]");
  }
  if (!(config.delta > 0.0 && config.delta < 1.0)) {
    throw ValidationError("calibration: delta must be in (0, 1)");
  }
  if (config.lambda_grid.empty()) {
    throw ValidationError("calibration: lambda grid is empty");
  }
  double prev = -1.0;
  for (double l : config.lambda_grid) {
    if (!(l >= 0.0 && l <= 1.0)) {
      throw ValidationError("calibration: lambda grid must lie in [0, 1]");
    }
    if (l <= prev) {
      throw ValidationError("calibration: lambda grid must be strictly increasing");
    }
    prev = l;
  }
}

}  // namespace

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) {
    grid[static_cast<std::size_t>(i)] = 0.5 + 0.005 * static_cast<double>(i);
  }
  return grid;
}

double confidence(double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("confidence: score outside [0, 1]");
  }
  return std::max(score, 1.0 - score);
}

double hoeffding_radius(int m, double delta) {
  if (m < 1) throw ValidationError("hoeffding_radius: m must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw ValidationError("hoeffding_radius: delta must be in (0, 1]");
  }
  return std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(m)));
}

SelectiveRisk empirical_selective_risk(const std::vector<int>& decisions,
                                       const std::vector<int>& true_labels,
                                       const std::vector<double>& confidences,
                                       double lambda) {
  const std::size_t n = decisions.size();
  if (true_labels.size() != n || confidences.size() != n) {
    throw ValidationError("selective risk: vectors must have equal length");
  }
  if (n == 0) throw ValidationError("selective risk: empty input");

  int selected = 0;
  int wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (confidences[i] > lambda) {
      ++selected;
      if (decisions[i] != true_labels[i]) ++wrong;
    }
  }

  SelectiveRisk out;
  out.n_selected = selected;
  if (selected > 0) {
    out.risk = static_cast<double>(wrong) / static_cast<double>(selected);
  }
  return out;
}

CalibrationOutcome calibrate_lambda(const std::vector<double>& scores,
                                    const std::vector<int>& true_labels,
                                    const CalibrationConfig& config) {
  check_config(config);
  const std::size_t m = scores.size();
  if (m == 0) throw ValidationError("calibrate_lambda: empty calibration set");
  if (true_labels.size() != m) {
    throw ValidationError("calibrate_lambda: label count mismatch");
  }

  std::vector<int> decisions(m);
  std::vector<double> kappas(m);
  for (std::size_t i = 0; i < m; ++i) {
    decisions[i] = decide(scores[i], config.decision_threshold);
    kappas[i] = confidence(scores[i]);
  }

  const double radius = hoeffding_radius(static_cast<int>(m), config.delta);

  CalibrationOutcome out;
  out.trace.reserve(config.lambda_grid.size());
  for (double lambda : config.lambda_grid) {
    const SelectiveRisk sr =
        empirical_selective_risk(decisions, true_labels, kappas, lambda);
    BoundTraceRow row;
    row.lambda = lambda;
    row.n_selected = sr.n_selected;
    if (sr.risk) {
      row.risk = sr.risk;
      row.bound = *sr.risk + radius;
      if (out.failed && *row.bound < config.alpha) {
        out.failed = false;
        out.lambda_hat = lambda;
        out.coverage_at_lambda_hat =
            static_cast<double>(sr.n_selected) / static_cast<double>(m);
      }
    }
    out.trace.push_back(std::move(row));
  }
  return out;
}

void calibration_report_write(const std::string& path,
                              const CalibrationOutcome& outcome,
                              const CalibrationConfig& config, int m) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& row : outcome.trace) {
    nlohmann::json j;
    j["lambda"] = row.lambda;
    j["risk"] = row.risk ? nlohmann::json(*row.risk) : nlohmann::json(nullptr);
    j["bound"] = row.bound ? nlohmann::json(*row.bound) : nlohmann::json(nullptr);
    j["n_selected"] = row.n_selected;
    trace.push_back(std::move(j));
  }

  nlohmann::json report;
  report["alpha"] = config.alpha;
  report["delta"] = config.delta;
  report["m"] = m;
  if (outcome.failed) {
    report["lambda_hat"] = "FAILED";
    report["coverage"] = 0.0;
  } else {
    report["lambda_hat"] = outcome.lambda_hat;
    report["coverage"] = outcome.coverage_at_lambda_hat;
  }
  report["trace"] = std::move(trace);

  std::ofstream out(path);
  if (!out) throw ValidationError("calibration report: cannot write " + path);
  out << report.dump(2) << "\n";
}

AuditReport audit_guarantee(const GmmWorld& world,
                            const ScorePipeline& pipeline,
                            const CalibrationConfig& config, int n_trials,
                            int m_calibration, int n_test, int n_workers,
                            const RngStream& base_stream) {
  check_config(config);
  if (n_trials < 100) throw ValidationError("audit: need at least 100 trials");
  if (m_calibration < 1 || n_test < 1) {
    throw ValidationError("audit: set sizes must be positive");
  }
  if (!pipeline) throw ValidationError("audit: missing pipeline");

  const int d = static_cast<int>(world.means[0].size());
  constexpr std::uint64_t kTrialBlock = 1ull << 32;
  // Pipeline identities sit far inside the block so per-item sub-streams
  // (up to ~2^24 of them) cannot collide with the data stream at offset 0.
  constexpr std::uint64_t kCalOffset = 1ull << 25;
  constexpr std::uint64_t kTestOffset = 1ull << 30;

  enum class TrialOutcome { kFailed, kValid, kInvalid };
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(n_trials));

  parallel_for_indexed(n_trials, n_workers, [&](int t) {
    const std::uint64_t block = base_stream.stream_index() +
                                static_cast<std::uint64_t>(t) * kTrialBlock;
    RngStream data_stream(base_stream.master_seed(), block);

    const std::vector<JointSample> draws =
        sample_joint(world, data_stream, m_calibration + n_test);
    Mat cal_y(m_calibration, d);
    std::vector<int> cal_c(static_cast<std::size_t>(m_calibration));
    for (int i = 0; i < m_calibration; ++i) {
      cal_y.row(i) = draws[static_cast<std::size_t>(i)].y.transpose();
      cal_c[static_cast<std::size_t>(i)] = draws[static_cast<std::size_t>(i)].c;
    }
    Mat test_y(n_test, d);
    std::vector<int> test_c(static_cast<std::size_t>(n_test));
    for (int i = 0; i < n_test; ++i) {
      const auto& js = draws[static_cast<std::size_t>(m_calibration + i)];
      test_y.row(i) = js.y.transpose();
      test_c[static_cast<std::size_t>(i)] = js.c;
    }

    const RngStream cal_stream(base_stream.master_seed(), block + kCalOffset);
    const std::vector<double> cal_scores = pipeline(cal_y, cal_stream);
    if (static_cast<int>(cal_scores.size()) != m_calibration) {
      throw ValidationError("audit: pipeline returned wrong score count");
    }

    const CalibrationOutcome cal = calibrate_lambda(cal_scores, cal_c, config);
    if (cal.failed) {
      outcomes[static_cast<std::size_t>(t)] = TrialOutcome::kFailed;
      return;
    }

    const RngStream test_stream(base_stream.master_seed(), block + kTestOffset);
    const std::vector<double> test_scores = pipeline(test_y, test_stream);
    if (static_cast<int>(test_scores.size()) != n_test) {
      throw ValidationError("audit: pipeline returned wrong score count");
    }

    std::vector<int> decisions(static_cast<std::size_t>(n_test));
    std::vector<double> kappas(static_cast<std::size_t>(n_test));
    for (std::size_t i = 0; i < test_scores.size(); ++i) {
      decisions[i] = decide(test_scores[i], config.decision_threshold);
      kappas[i] = confidence(test_scores[i]);
    }
    const SelectiveRisk sr =
        empirical_selective_risk(decisions, test_c, kappas, cal.lambda_hat);
    const bool valid = !sr.risk || *sr.risk < config.alpha;
    outcomes[static_cast<std::size_t>(t)] =
        valid ? TrialOutcome::kValid : TrialOutcome::kInvalid;
  });

  AuditReport report;
  report.n_trials = n_trials;
  for (TrialOutcome o : outcomes) {
    if (o == TrialOutcome::kFailed) ++report.n_failed;
    if (o == TrialOutcome::kValid) ++report.n_valid;
  }
  const int completed = report.n_trials - report.n_failed;
  report.validity_rate =
      completed > 0
          ? static_cast<double>(report.n_valid) / static_cast<double>(completed)
          : 1.0;
  return report;
}

}  // namespace esckit
