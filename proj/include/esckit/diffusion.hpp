#pragma once

#include "esckit/core.hpp"
#include "esckit/toyworld.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace esckit {

// Variance-preserving schedule: betas rise linearly, alphas_bar holds the
// running products of (1 - beta). DDIM walks a strided sub-sequence of the
// training steps.
struct NoiseSchedule {
  int n_train_steps = 1000;
  Vec betas;
  Vec alphas_bar;
  int ddim_stride = 10;

  // alpha_bar at a training step; step -1 denotes the clean endpoint (1.0).
  double alpha_bar_at(int step_index) const;
  // Descending DDIM steps: n-1, n-1-stride, ..., stride-1.
  std::vector<int> ddim_time_sequence() const;
};

NoiseSchedule make_noise_schedule(int n_train_steps = 1000,
                                  double beta_start = 1e-6,
                                  double beta_end = 1e-2, int ddim_stride = 10);

// Conditional noise predictor interface: given a noised signal, the
// conditioning observation, and the training-step index, estimate the noise.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;
  virtual Vec predict(const Vec& x_t, const Vec& y, int step_index) const = 0;
  // Length of the signals this model denoises.
  virtual int dim() const = 0;
};

// x_t = sqrt(abar) x0 + sqrt(1-abar) eps; returns (x_t, eps).
std::pair<Vec, Vec> forward_noising(const Vec& x0, int step_index,
                                    RngStream& stream,
                                    const NoiseSchedule& schedule);

// Deterministic update: xhat0 = (x_t - sqrt(1-abar_t) eps)/sqrt(abar_t);
// x_prev = sqrt(abar_prev) xhat0 + sqrt(1-abar_prev) eps. prev_step_index
// may be -1 for the final move onto the clean sample.
Vec ddim_step(const Vec& x_t, const Vec& epsilon_hat, int step_index,
              int prev_step_index, const NoiseSchedule& schedule);

// K independent chains, chain i seeded from (master_seed, base + i) where
// base is the identity of the passed stream (whose own state is untouched).
// Each chain starts at standard normal noise and walks the DDIM sub-sequence.
PosteriorEnsemble ddim_sample(const DenoiserModel& denoiser, const Vec& y,
                              const RngStream& stream,
                              const NoiseSchedule& schedule, int K);

// Exact conditional denoiser for a GmmWorld: the diffused posterior at level
// t is a mixture with means sqrt(abar) mu_k|y and covariances
// abar Sigma_k|y + (1-abar) I, and the ideal prediction is
// -sqrt(1-abar) times the score of that mixture.
std::unique_ptr<DenoiserModel> analytic_gmm_denoiser(
    const GmmWorld& world, const Vec& y, const NoiseSchedule& schedule);

// Fully-connected noise predictor [x_t | y | timestep embedding] ->
// hidden -> hidden -> eps_hat with SiLU activations and a sinusoidal
// embedding of the training-step index.
class MlpDenoiser : public DenoiserModel {
 public:
  MlpDenoiser(int d, int d_y, int hidden_width, int t_emb_width,
              RngStream& stream);

  Vec predict(const Vec& x_t, const Vec& y, int step_index) const override;

  int dim() const override { return d_; }
  int condition_dim() const { return d_y_; }
  int hidden_width() const { return static_cast<int>(b1_.size()); }
  int t_emb_width() const { return t_emb_width_; }

  // Flat parameter views for optimizers and finite-difference checks.
  Vec flat_params() const;
  void set_flat_params(const Vec& theta);
  int n_params() const;

  // Mean over the batch of ||eps - eps_hat||^2 and its parameter gradient.
  // Batch rows: x_t | y | step_index (as double) | eps.
  double loss_and_gradient(const Mat& x_t, const Mat& y,
                           const std::vector<int>& step_index, const Mat& eps,
                           Vec* gradient) const;

  Vec timestep_embedding(int step_index) const;

 private:
  int d_;
  int d_y_;
  int t_emb_width_;
  Mat w1_, w2_, w3_;
  Vec b1_, b2_, b3_;

  friend MlpDenoiser mlp_denoiser_from_json_impl(const std::string&);
  friend std::string mlp_denoiser_to_json_impl(const MlpDenoiser&,
                                               const NoiseSchedule&);
};

struct TrainHyperparams {
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-4;
  int hidden_width = 128;
  int t_emb_width = 16;
  double val_fraction = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct LossTrace {
  std::vector<double> train;
  std::vector<double> val;
};

struct TrainedDenoiser {
  MlpDenoiser model;
  LossTrace trace;
};

// Minimizes the noise-prediction loss over random (step, noise) draws with
// Adam (bias-corrected). Deterministic given the stream. Throws
// TrainingError naming the epoch if the loss diverges.
TrainedDenoiser train_mlp_denoiser(const Mat& x0_rows, const Mat& y_rows,
                                   const NoiseSchedule& schedule,
                                   const TrainHyperparams& hp,
                                   RngStream& stream);

// Checkpoint: JSON with layer shapes, row-major weights and the schedule.
void mlp_denoiser_save(const std::string& path, const MlpDenoiser& model,
                       const NoiseSchedule& schedule);
std::pair<MlpDenoiser, NoiseSchedule> mlp_denoiser_load(const std::string& path);

}  // namespace esckit
