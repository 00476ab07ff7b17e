#include "esckit/diffusion.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace esckit {

double NoiseSchedule::alpha_bar_at(int step_index) const {
  if (step_index == -1) return 1.0;
  if (step_index < 0 || step_index >= n_train_steps) {
    throw ValidationError("schedule: step index out of range");
  }
  return alphas_bar[step_index];
}

std::vector<int> NoiseSchedule::ddim_time_sequence() const {
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(n_train_steps / ddim_stride));
  for (int t = n_train_steps - 1; t >= 0; t -= ddim_stride) steps.push_back(t);
  return steps;
}

NoiseSchedule make_noise_schedule(int n_train_steps, double beta_start,
                                  double beta_end, int ddim_stride) {
  if (n_train_steps < 1) throw ValidationError("schedule: need >= 1 step");
  if (ddim_stride < 1 || n_train_steps % ddim_stride != 0) {
    throw ValidationError("schedule: n_train_steps must be divisible by stride");
  }
  NoiseSchedule s;
  s.n_train_steps = n_train_steps;
  s.ddim_stride = ddim_stride;
  s.betas.resize(n_train_steps);
  s.alphas_bar.resize(n_train_steps);
  double prod = 1.0;
  for (int t = 0; t < n_train_steps; ++t) {
    const double frac =
        n_train_steps == 1 ? 0.0
                           : static_cast<double>(t) /
                                 static_cast<double>(n_train_steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    if (!(beta > 0.0 && beta < 1.0)) {
      throw ValidationError("schedule: betas must lie in (0,1)");
    }
    if (t > 0 && beta <= s.betas[t - 1]) {
      throw ValidationError("schedule: betas must be strictly increasing");
    }
    s.betas[t] = beta;
    prod *= 1.0 - beta;
    s.alphas_bar[t] = prod;
  }
  if (!(s.alphas_bar[n_train_steps - 1] > 0.0)) {
    throw ValidationError("schedule: alphas_bar must stay positive");
  }
  return s;
}

std::pair<Vec, Vec> forward_noising(const Vec& x0, int step_index,
                                    RngStream& stream,
                                    const NoiseSchedule& schedule) {
  const double abar = schedule.alpha_bar_at(step_index);
  const Vec eps = gaussian_draw(stream, static_cast<int>(x0.size()));
  const Vec x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
  return {x_t, eps};
}

Vec ddim_step(const Vec& x_t, const Vec& epsilon_hat, int step_index,
              int prev_step_index, const NoiseSchedule& schedule) {
  if (prev_step_index >= step_index) {
    throw ValidationError("ddim_step: prev_step_index must precede step_index");
  }
  const double abar_t = schedule.alpha_bar_at(step_index);
  if (!(abar_t > 0.0)) throw ValidationError("ddim_step: alpha_bar not positive");
  const double abar_prev = schedule.alpha_bar_at(prev_step_index);

  const Vec x_hat0 =
      (x_t - std::sqrt(1.0 - abar_t) * epsilon_hat) / std::sqrt(abar_t);
  return std::sqrt(abar_prev) * x_hat0 +
         std::sqrt(1.0 - abar_prev) * epsilon_hat;
}

PosteriorEnsemble ddim_sample(const DenoiserModel& denoiser, const Vec& y,
                              const RngStream& stream,
                              const NoiseSchedule& schedule, int K) {
  if (K < 1) throw ValidationError("ddim_sample: K must be >= 1");
  const std::vector<int> steps = schedule.ddim_time_sequence();
  const int d = denoiser.dim();

  Mat samples(K, d);
  for (int chain = 0; chain < K; ++chain) {
    RngStream chain_stream(stream.master_seed(),
                           stream.stream_index() + static_cast<std::uint64_t>(chain));
    Vec x = gaussian_draw(chain_stream, d);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      const int t = steps[j];
      const Vec eps_hat = denoiser.predict(x, y, t);
      if (!eps_hat.allFinite()) {
        throw NumericalError("ddim_sample: non-finite denoiser output at step " +
                             std::to_string(t));
      }
      const int t_prev = j + 1 < steps.size() ? steps[j + 1] : -1;
      x = ddim_step(x, eps_hat, t, t_prev, schedule);
    }
    samples.row(chain) = x.transpose();
  }

  PosteriorEnsemble ens;
  ens.condition = make_signal(y, 1.0);
  ens.samples = std::move(samples);
  ens.sample_rate_hz = 1.0;
  return ens;
}

namespace {

// Exact denoiser for the toy world. All per-step mixture quantities are
// precomputed at construction so predict stays read-only and cheap.
class AnalyticGmmDenoiser final : public DenoiserModel {
 public:
  AnalyticGmmDenoiser(const GmmWorld& world, const Vec& y,
                      const NoiseSchedule& schedule)
      : y_(y), n_steps_(schedule.n_train_steps) {
    const PosteriorGmm post = posterior_given_y(world, y);
    const int M = static_cast<int>(post.weights_given_y.size());
    const int d = static_cast<int>(post.means_given_y[0].size());
    d_ = d;
    log_weights_.resize(M);
    for (int k = 0; k < M; ++k) {
      log_weights_[k] = std::log(post.weights_given_y[k]);
    }

    steps_.resize(static_cast<std::size_t>(n_steps_));
    for (int t = 0; t < n_steps_; ++t) {
      const double abar = schedule.alphas_bar[t];
      StepData& sd = steps_[static_cast<std::size_t>(t)];
      sd.sqrt_one_minus_abar = std::sqrt(1.0 - abar);
      sd.means.resize(M);
      sd.inv_covs.resize(M);
      sd.log_dets.resize(M);
      for (int k = 0; k < M; ++k) {
        sd.means[k] = std::sqrt(abar) * post.means_given_y[k];
        Mat C = abar * post.covs_given_y[k];
        C.diagonal().array() += 1.0 - abar;
        Eigen::LLT<Mat> llt(C);
        if (llt.info() != Eigen::Success) {
          throw NumericalError("analytic denoiser: diffused covariance singular");
        }
        sd.inv_covs[k] = llt.solve(Mat::Identity(d, d));
        double log_det = 0.0;
        const auto& L = llt.matrixL();
        for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(L(i, i));
        sd.log_dets[k] = log_det;
      }
    }
  }

  Vec predict(const Vec& x_t, const Vec& y, int step_index) const override {
    if (y.size() != y_.size() || (y - y_).cwiseAbs().maxCoeff() != 0.0) {
      throw ValidationError(
          "analytic denoiser: condition differs from the bound observation");
    }
    if (step_index < 0 || step_index >= n_steps_) {
      throw ValidationError("analytic denoiser: step index out of range");
    }
    const StepData& sd = steps_[static_cast<std::size_t>(step_index)];
    const int M = static_cast<int>(log_weights_.size());

    Vec log_resp(M);
    std::vector<Vec> grads(static_cast<std::size_t>(M));
    for (int k = 0; k < M; ++k) {
      const Vec r = x_t - sd.means[k];
      const Vec cinv_r = sd.inv_covs[k] * r;
      log_resp[k] = log_weights_[k] - 0.5 * r.dot(cinv_r) - 0.5 * sd.log_dets[k];
      grads[static_cast<std::size_t>(k)] = -cinv_r;
    }
    const double m = log_resp.maxCoeff();
    Vec resp = (log_resp.array() - m).exp();
    resp /= resp.sum();

    Vec score = Vec::Zero(x_t.size());
    for (int k = 0; k < M; ++k) {
      score += resp[k] * grads[static_cast<std::size_t>(k)];
    }
    return -sd.sqrt_one_minus_abar * score;
  }

  int dim() const override { return d_; }

 private:
  struct StepData {
    double sqrt_one_minus_abar = 0.0;
    std::vector<Vec> means;
    std::vector<Mat> inv_covs;
    std::vector<double> log_dets;
  };

  Vec y_;
  int d_ = 0;
  int n_steps_;
  std::vector<double> log_weights_;
  std::vector<StepData> steps_;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_prime(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

std::unique_ptr<DenoiserModel> analytic_gmm_denoiser(
    const GmmWorld& world, const Vec& y, const NoiseSchedule& schedule) {
  return std::make_unique<AnalyticGmmDenoiser>(world, y, schedule);
}

MlpDenoiser::MlpDenoiser(int d, int d_y, int hidden_width, int t_emb_width,
                         RngStream& stream)
    : d_(d), d_y_(d_y), t_emb_width_(t_emb_width) {
  if (d < 1 || d_y < 1 || hidden_width < 1 || t_emb_width < 2 ||
      t_emb_width % 2 != 0) {
    throw ValidationError("mlp denoiser: bad architecture parameters");
  }
  const int in_dim = d + d_y + t_emb_width;
  const auto init = [&stream](Mat& w, int rows, int cols) {
    w.resize(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) w(r, c) = scale * stream.gaussian();
    }
  };
  init(w1_, hidden_width, in_dim);
  init(w2_, hidden_width, hidden_width);
  init(w3_, d, hidden_width);
  b1_ = Vec::Zero(hidden_width);
  b2_ = Vec::Zero(hidden_width);
  b3_ = Vec::Zero(d);
}

Vec MlpDenoiser::timestep_embedding(int step_index) const {
  Vec emb(t_emb_width_);
  const int half = t_emb_width_ / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    emb[2 * i] = std::sin(static_cast<double>(step_index) * freq);
    emb[2 * i + 1] = std::cos(static_cast<double>(step_index) * freq);
  }
  return emb;
}

Vec MlpDenoiser::predict(const Vec& x_t, const Vec& y, int step_index) const {
  if (static_cast<int>(x_t.size()) != d_ || static_cast<int>(y.size()) != d_y_) {
    throw ValidationError("mlp denoiser: input dimension mismatch");
  }
  Vec in(d_ + d_y_ + t_emb_width_);
  in << x_t, y, timestep_embedding(step_index);
  Vec z1 = w1_ * in + b1_;
  for (Eigen::Index i = 0; i < z1.size(); ++i) z1[i] = silu(z1[i]);
  Vec z2 = w2_ * z1 + b2_;
  for (Eigen::Index i = 0; i < z2.size(); ++i) z2[i] = silu(z2[i]);
  return w3_ * z2 + b3_;
}

int MlpDenoiser::n_params() const {
  return static_cast<int>(w1_.size() + w2_.size() + w3_.size() + b1_.size() +
                          b2_.size() + b3_.size());
}

Vec MlpDenoiser::flat_params() const {
  Vec theta(n_params());
  Eigen::Index at = 0;
  const auto put = [&theta, &at](const double* data, Eigen::Index n) {
    theta.segment(at, n) = Eigen::Map<const Vec>(data, n);
    at += n;
  };
  put(w1_.data(), w1_.size());
  put(b1_.data(), b1_.size());
  put(w2_.data(), w2_.size());
  put(b2_.data(), b2_.size());
  put(w3_.data(), w3_.size());
  put(b3_.data(), b3_.size());
  return theta;
}

void MlpDenoiser::set_flat_params(const Vec& theta) {
  if (theta.size() != n_params()) {
    throw ValidationError("mlp denoiser: parameter vector size mismatch");
  }
  Eigen::Index at = 0;
  const auto take = [&theta, &at](double* data, Eigen::Index n) {
    Eigen::Map<Vec>(data, n) = theta.segment(at, n);
    at += n;
  };
  take(w1_.data(), w1_.size());
  take(b1_.data(), b1_.size());
  take(w2_.data(), w2_.size());
  take(b2_.data(), b2_.size());
  take(w3_.data(), w3_.size());
  take(b3_.data(), b3_.size());
}

double MlpDenoiser::loss_and_gradient(const Mat& x_t, const Mat& y,
                                      const std::vector<int>& step_index,
                                      const Mat& eps, Vec* gradient) const {
  const int B = static_cast<int>(x_t.rows());
  if (B == 0 || y.rows() != B || eps.rows() != B ||
      static_cast<int>(step_index.size()) != B) {
    throw ValidationError("mlp denoiser: batch shape mismatch");
  }
  const int in_dim = d_ + d_y_ + t_emb_width_;

  // Batch as columns for one pass of matrix products.
  Mat in(in_dim, B);
  for (int i = 0; i < B; ++i) {
    in.col(i).head(d_) = x_t.row(i).transpose();
    in.col(i).segment(d_, d_y_) = y.row(i).transpose();
    in.col(i).tail(t_emb_width_) = timestep_embedding(step_index[i]);
  }

  const Mat z1 = (w1_ * in).colwise() + b1_;
  Mat a1 = z1;
  for (Eigen::Index i = 0; i < a1.size(); ++i) a1.data()[i] = silu(z1.data()[i]);
  const Mat z2 = (w2_ * a1).colwise() + b2_;
  Mat a2 = z2;
  for (Eigen::Index i = 0; i < a2.size(); ++i) a2.data()[i] = silu(z2.data()[i]);
  const Mat out = (w3_ * a2).colwise() + b3_;

  const Mat diff = out - eps.transpose();
  const double loss = diff.squaredNorm() / static_cast<double>(B);

  if (gradient != nullptr) {
    const Mat d_out = 2.0 * diff / static_cast<double>(B);
    const Mat g_w3 = d_out * a2.transpose();
    const Vec g_b3 = d_out.rowwise().sum();
    Mat d_a2 = w3_.transpose() * d_out;
    for (Eigen::Index i = 0; i < d_a2.size(); ++i) {
      d_a2.data()[i] *= silu_prime(z2.data()[i]);
    }
    const Mat g_w2 = d_a2 * a1.transpose();
    const Vec g_b2 = d_a2.rowwise().sum();
    Mat d_a1 = w2_.transpose() * d_a2;
    for (Eigen::Index i = 0; i < d_a1.size(); ++i) {
      d_a1.data()[i] *= silu_prime(z1.data()[i]);
    }
    const Mat g_w1 = d_a1 * in.transpose();
    const Vec g_b1 = d_a1.rowwise().sum();

    gradient->resize(n_params());
    Eigen::Index at = 0;
    const auto put = [gradient, &at](const double* data, Eigen::Index n) {
      gradient->segment(at, n) = Eigen::Map<const Vec>(data, n);
      at += n;
    };
    put(g_w1.data(), g_w1.size());
    put(g_b1.data(), g_b1.size());
    put(g_w2.data(), g_w2.size());
    put(g_b2.data(), g_b2.size());
    put(g_w3.data(), g_w3.size());
    put(g_b3.data(), g_b3.size());
  }
  return loss;
}

TrainedDenoiser train_mlp_denoiser(const Mat& x0_rows, const Mat& y_rows,
                                   const NoiseSchedule& schedule,
                                   const TrainHyperparams& hp,
                                   RngStream& stream) {
  const int n = static_cast<int>(x0_rows.rows());
  if (n == 0) throw ValidationError("train_mlp_denoiser: empty dataset");
  if (y_rows.rows() != n) {
    throw ValidationError("train_mlp_denoiser: x0/y row count mismatch");
  }
  const int d = static_cast<int>(x0_rows.cols());
  const int d_y = static_cast<int>(y_rows.cols());

  const int n_val = std::min(
      n - 1, static_cast<int>(std::round(hp.val_fraction * n)));
  const int n_train = n - n_val;

  MlpDenoiser model(d, d_y, hp.hidden_width, hp.t_emb_width, stream);
  Vec theta = model.flat_params();
  Vec adam_m = Vec::Zero(theta.size());
  Vec adam_v = Vec::Zero(theta.size());
  long step_count = 0;

  LossTrace trace;
  const int batch = std::max(1, std::min(hp.batch_size, n_train));
  const int batches_per_epoch = (n_train + batch - 1) / batch;

  const auto make_batch = [&](int size, bool validation, Mat& bx, Mat& by,
                              std::vector<int>& bt, Mat& beps) {
    bx.resize(size, d);
    by.resize(size, d_y);
    beps.resize(size, d);
    bt.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      const int base = validation ? n_train : 0;
      const int pool = validation ? n_val : n_train;
      const int row =
          base + static_cast<int>(stream.uniform_below(
                     static_cast<std::uint64_t>(pool)));
      const int t = static_cast<int>(stream.uniform_below(
          static_cast<std::uint64_t>(schedule.n_train_steps)));
      const double abar = schedule.alphas_bar[t];
      const Vec eps = gaussian_draw(stream, d);
      bx.row(i) = (std::sqrt(abar) * x0_rows.row(row).transpose() +
                   std::sqrt(1.0 - abar) * eps)
                      .transpose();
      by.row(i) = y_rows.row(row);
      beps.row(i) = eps.transpose();
      bt[static_cast<std::size_t>(i)] = t;
    }
  };

  Mat bx, by, beps;
  std::vector<int> bt;
  Vec grad;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      make_batch(batch, false, bx, by, bt, beps);
      const double loss = model.loss_and_gradient(bx, by, bt, beps, &grad);
      if (!std::isfinite(loss) || loss > 1e6) {
        throw TrainingError("denoiser training diverged at epoch " +
                            std::to_string(epoch));
      }
      epoch_loss += loss;
      ++step_count;
      const double bc1 = 1.0 - std::pow(hp.adam_beta1, step_count);
      const double bc2 = 1.0 - std::pow(hp.adam_beta2, step_count);
      adam_m = hp.adam_beta1 * adam_m + (1.0 - hp.adam_beta1) * grad;
      adam_v = hp.adam_beta2 * adam_v.array().matrix() +
               (1.0 - hp.adam_beta2) * grad.array().square().matrix();
      theta.array() -= hp.learning_rate * (adam_m.array() / bc1) /
                       ((adam_v.array() / bc2).sqrt() + hp.adam_eps);
      model.set_flat_params(theta);
    }
    trace.train.push_back(epoch_loss / batches_per_epoch);

    if (n_val > 0) {
      make_batch(std::min(n_val, 512), true, bx, by, bt, beps);
      trace.val.push_back(model.loss_and_gradient(bx, by, bt, beps, nullptr));
    } else {
      trace.val.push_back(trace.train.back());
    }
  }
  return TrainedDenoiser{std::move(model), std::move(trace)};
}

namespace {

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ParseError("checkpoint: empty matrix");
  Mat m(static_cast<Eigen::Index>(rows.size()),
        static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw ParseError("checkpoint: ragged matrix");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

}  // namespace

void mlp_denoiser_save(const std::string& path, const MlpDenoiser& model,
                       const NoiseSchedule& schedule) {
  nlohmann::json j;
  j["kind"] = "mlp_denoiser";
  j["d"] = model.dim();
  j["d_y"] = model.condition_dim();
  j["hidden_width"] = model.hidden_width();
  j["t_emb_width"] = model.t_emb_width();
  const Vec theta = model.flat_params();
  j["params"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  j["schedule"] = {{"n_train_steps", schedule.n_train_steps},
                   {"beta_start", schedule.betas[0]},
                   {"beta_end", schedule.betas[schedule.n_train_steps - 1]},
                   {"ddim_stride", schedule.ddim_stride}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::pair<MlpDenoiser, NoiseSchedule> mlp_denoiser_load(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "mlp_denoiser") {
      throw ParseError(path + ": not a denoiser checkpoint");
    }
    const auto& js = j.at("schedule");
    const NoiseSchedule schedule = make_noise_schedule(
        js.at("n_train_steps").get<int>(), js.at("beta_start").get<double>(),
        js.at("beta_end").get<double>(), js.at("ddim_stride").get<int>());
    RngStream dummy(0, 0);
    MlpDenoiser model(j.at("d").get<int>(), j.at("d_y").get<int>(),
                      j.at("hidden_width").get<int>(),
                      j.at("t_emb_width").get<int>(), dummy);
    const auto params = j.at("params").get<std::vector<double>>();
    model.set_flat_params(Eigen::Map<const Vec>(
        params.data(), static_cast<Eigen::Index>(params.size())));
    return {std::move(model), schedule};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace esckit
