#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace esckit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Input or file content violates a documented precondition.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A file could not be parsed; message names the offending row/column.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical routine left its domain (singular matrix, negative
// eigenvalue beyond tolerance, non-finite intermediate).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model training diverged or was misconfigured.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic counter-based random stream (Philox-4x64 with 10 rounds).
// The (master_seed, stream_index) pair is the 128-bit cipher key, the draw
// position is the counter, so equal identities replay the exact sequence and
// distinct stream indices give structurally disjoint streams. Instances are
// single-owner: one consumer per stream.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }

  std::uint64_t next_u64();
  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  // Unbiased integer in [0, bound) via rejection; bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);
  // Standard normal variate (Marsaglia polar method, second value cached).
  double gaussian();

 private:
  void refill();

  std::uint64_t key_[2];
  std::uint64_t counter_[4];
  std::uint64_t buffer_[4];
  int buffer_pos_;
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  double cached_gaussian_;
  bool has_cached_gaussian_;
};

// n i.i.d. standard-normal variates drawn from the stream.
Vec gaussian_draw(RngStream& stream, int n);

// A finite real-valued signal with its sampling rate.
struct Signal {
  Vec values;
  double sample_rate_hz = 1.0;
};

// Validates finiteness, d >= 1 and a positive rate.
Signal make_signal(Vec values, double sample_rate_hz);

struct LabeledSignal {
  Signal signal;
  std::vector<int> labels;  // each 0 or 1
};

// K candidate reconstructions drawn for one observed condition.
// Samples are stored one per row (K x d).
struct PosteriorEnsemble {
  Signal condition;
  Mat samples;
  double sample_rate_hz = 1.0;
};

// Classifier scores for an ensemble, one per sample, each in [0, 1].
struct ScoreSet {
  std::vector<double> scores;
};

ScoreSet make_score_set(std::vector<double> scores);

// In-memory dataset: one signal per row, optional binary labels.
struct Dataset {
  Mat signals;
  double sample_rate_hz = 1.0;
  std::vector<std::string> label_names;
  Eigen::MatrixXi labels;  // n x label_names.size(), entries 0/1
};

// CSV with one signal per row; when labels are present a header row declares
// columns x0..x{d-1},label_0..label_{L-1}. A JSON sidecar (<base>.meta.json)
// carries sample_rate_hz, d, n_signals and label_names.
Dataset dataset_read(const std::string& csv_path);
void dataset_write(const std::string& csv_path, const Dataset& dataset);

// Locale-independent decimal round-trip formatting (17 significant digits).
std::string format_double(double value);
// Strict full-string parse; context only flavors the error message.
double parse_double(const std::string& text, const std::string& context);

// Runs body(0..n-1) on up to n_workers threads. Results must be written to
// index-addressed slots so the outcome is identical for any worker count.
// The first exception thrown by any body call is rethrown to the caller.
void parallel_for_indexed(int n, int n_workers,
                          const std::function<void(int)>& body);

}  // namespace esckit
