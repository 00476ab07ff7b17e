#include "esckit/toyworld.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace esckit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// log N(r; 0, C) for precomputed solver; r is (point - mean).
double gaussian_log_density(const Vec& r, const Eigen::LLT<Mat>& llt) {
  const Vec z = llt.matrixL().solve(r);
  double log_det = 0.0;
  const auto& L = llt.matrixL();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    log_det += std::log(L(i, i));
  }
  return -0.5 * z.squaredNorm() - log_det -
         0.5 * static_cast<double>(r.size()) * kLog2Pi;
}

// Normalizes a vector of log-weights in place via log-sum-exp.
void normalize_log_weights(Vec& log_w) {
  const double m = log_w.maxCoeff();
  log_w = (log_w.array() - m).exp();
  log_w /= log_w.sum();
}

}  // namespace

GmmWorld make_gmm_world(Vec weights, std::vector<Vec> means,
                        std::vector<Mat> covariances,
                        std::vector<int> component_class,
                        double channel_sigma) {
  const int M = static_cast<int>(weights.size());
  if (M < 1) throw ValidationError("world needs at least one component");
  if (static_cast<int>(means.size()) != M ||
      static_cast<int>(covariances.size()) != M ||
      static_cast<int>(component_class.size()) != M) {
    throw ValidationError("world: component count mismatch across fields");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw ValidationError("world: weights must sum to 1");
  }
  for (int k = 0; k < M; ++k) {
    if (!(weights[k] > 0.0)) throw ValidationError("world: weights must be > 0");
    if (component_class[k] != 0 && component_class[k] != 1) {
      throw ValidationError("world: component_class entries must be 0 or 1");
    }
  }
  const int d = static_cast<int>(means[0].size());
  if (d < 1) throw ValidationError("world: dimension must be >= 1");
  if (d > 16) {
    for (const Mat& S : covariances) {
      if (!S.isDiagonal(0.0)) {
        throw ValidationError(
            "world: full covariances supported only for d <= 16");
      }
    }
  }
  for (int k = 0; k < M; ++k) {
    if (static_cast<int>(means[k].size()) != d) {
      throw ValidationError("world: mean dimension mismatch");
    }
    const Mat& S = covariances[k];
    if (S.rows() != d || S.cols() != d) {
      throw ValidationError("world: covariance shape mismatch");
    }
    if (!S.isApprox(S.transpose(), 1e-12)) {
      throw ValidationError("world: covariance not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw ValidationError("world: covariance not positive definite");
    }
  }
  if (!(channel_sigma > 0.0)) {
    throw ValidationError("world: channel_sigma must be > 0");
  }
  return GmmWorld{std::move(weights), std::move(means), std::move(covariances),
                  std::move(component_class), channel_sigma};
}

GmmWorld gmm_world_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("world json: ") + e.what());
  }
  try {
    const auto wts = j.at("weights").get<std::vector<double>>();
    const int M = static_cast<int>(wts.size());
    Vec weights(M);
    for (int k = 0; k < M; ++k) weights[k] = wts[k];

    std::vector<Vec> means;
    for (const auto& m : j.at("means")) {
      const auto v = m.get<std::vector<double>>();
      means.push_back(Eigen::Map<const Vec>(v.data(), v.size()));
    }
    const int d = means.empty() ? 0 : static_cast<int>(means[0].size());

    std::vector<Mat> covs;
    if (j.contains("covariances_diag")) {
      for (const auto& c : j["covariances_diag"]) {
        const auto v = c.get<std::vector<double>>();
        covs.push_back(Eigen::Map<const Vec>(v.data(), v.size()).asDiagonal());
      }
    } else {
      for (const auto& c : j.at("covariances")) {
        Mat S(d, d);
        const auto rows = c.get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != d) {
          throw ParseError("world json: covariance row count mismatch");
        }
        for (int r = 0; r < d; ++r) {
          if (static_cast<int>(rows[r].size()) != d) {
            throw ParseError("world json: covariance column count mismatch");
          }
          for (int cc = 0; cc < d; ++cc) S(r, cc) = rows[r][cc];
        }
        covs.push_back(std::move(S));
      }
    }
    const auto classes = j.at("component_class").get<std::vector<int>>();
    const double sigma = j.at("channel_sigma").get<double>();
    return make_gmm_world(std::move(weights), std::move(means),
                          std::move(covs), classes, sigma);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("world json: ") + e.what());
  }
}

GmmWorld gmm_world_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return gmm_world_from_json(text);
}

std::string gmm_world_to_json(const GmmWorld& world) {
  nlohmann::json j;
  j["weights"] = std::vector<double>(world.weights.data(),
                                     world.weights.data() + world.weights.size());
  for (const Vec& m : world.means) {
    j["means"].push_back(std::vector<double>(m.data(), m.data() + m.size()));
  }
  for (const Mat& S : world.covariances) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
      rows.push_back(std::vector<double>(S.row(r).begin(), S.row(r).end()));
    }
    j["covariances"].push_back(rows);
  }
  j["component_class"] = world.component_class;
  j["channel_sigma"] = world.channel_sigma;
  return j.dump(2);
}

std::vector<JointSample> sample_joint(const GmmWorld& world, RngStream& stream,
                                      int n) {
  if (n < 1) throw ValidationError("sample_joint: n must be >= 1");
  const int d = world.dim();
  const int M = world.n_components();

  std::vector<Eigen::LLT<Mat>> chols;
  chols.reserve(M);
  for (int k = 0; k < M; ++k) {
    chols.emplace_back(world.covariances[k]);
    if (chols.back().info() != Eigen::Success) {
      throw NumericalError("sample_joint: covariance Cholesky failed");
    }
  }

  std::vector<JointSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = stream.uniform01();
    int k = M - 1;
    double acc = 0.0;
    for (int j = 0; j < M; ++j) {
      acc += world.weights[j];
      if (u < acc) {
        k = j;
        break;
      }
    }
    JointSample s;
    s.x = world.means[k] + chols[k].matrixL() * gaussian_draw(stream, d);
    s.y = s.x + world.channel_sigma * gaussian_draw(stream, d);
    s.c = world.component_class[k];
    out.push_back(std::move(s));
  }
  return out;
}

PosteriorGmm posterior_given_y(const GmmWorld& world, const Vec& y) {
  const int d = world.dim();
  const int M = world.n_components();
  if (static_cast<int>(y.size()) != d) {
    throw ValidationError("posterior_given_y: y dimension mismatch");
  }
  if (!y.allFinite()) throw ValidationError("posterior_given_y: y not finite");

  PosteriorGmm post;
  post.weights_given_y.resize(M);
  post.means_given_y.resize(M);
  post.covs_given_y.resize(M);

  Vec log_w(M);
  const double s2 = world.channel_sigma * world.channel_sigma;
  for (int k = 0; k < M; ++k) {
    Mat S_channel = world.covariances[k];
    S_channel.diagonal().array() += s2;
    Eigen::LLT<Mat> llt(S_channel);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("posterior_given_y: channel covariance singular");
    }
    const Vec r = y - world.means[k];
    log_w[k] = std::log(world.weights[k]) + gaussian_log_density(r, llt);
    // Gain G = Sigma (Sigma + sigma^2 I)^{-1}, applied as solves against the
    // factorized channel covariance to stay symmetric.
    const Mat gain = llt.solve(world.covariances[k]).transpose();
    post.means_given_y[k] = world.means[k] + gain * r;
    Mat cov = world.covariances[k] - gain * world.covariances[k];
    post.covs_given_y[k] = 0.5 * (cov + cov.transpose());
  }
  normalize_log_weights(log_w);
  post.weights_given_y = log_w;
  return post;
}

Mat posterior_sample(const PosteriorGmm& posterior, RngStream& stream, int K) {
  if (K < 1) throw ValidationError("posterior_sample: K must be >= 1");
  const int M = static_cast<int>(posterior.weights_given_y.size());
  const int d = static_cast<int>(posterior.means_given_y[0].size());

  std::vector<Eigen::LLT<Mat>> chols;
  chols.reserve(M);
  for (int k = 0; k < M; ++k) {
    Mat S = posterior.covs_given_y[k];
    // Conditioning can make tiny eigenvalues slightly negative in floating
    // point; nudge the diagonal before factorizing.
    S.diagonal().array() += 1e-15;
    chols.emplace_back(S);
    if (chols.back().info() != Eigen::Success) {
      throw NumericalError("posterior_sample: Cholesky failed");
    }
  }

  Mat out(K, d);
  for (int i = 0; i < K; ++i) {
    const double u = stream.uniform01();
    int k = M - 1;
    double acc = 0.0;
    for (int j = 0; j < M; ++j) {
      acc += posterior.weights_given_y[j];
      if (u < acc) {
        k = j;
        break;
      }
    }
    out.row(i) = (posterior.means_given_y[k] +
                  chols[k].matrixL() * gaussian_draw(stream, d))
                     .transpose();
  }
  return out;
}

double class_posterior_x(const GmmWorld& world, const Vec& x) {
  const int M = world.n_components();
  if (static_cast<int>(x.size()) != world.dim()) {
    throw ValidationError("class_posterior_x: x dimension mismatch");
  }
  Vec log_w(M);
  for (int k = 0; k < M; ++k) {
    Eigen::LLT<Mat> llt(world.covariances[k]);
    log_w[k] = std::log(world.weights[k]) +
               gaussian_log_density(x - world.means[k], llt);
  }
  normalize_log_weights(log_w);
  double p = 0.0;
  for (int k = 0; k < M; ++k) {
    if (world.component_class[k] == 1) p += log_w[k];
  }
  return std::min(1.0, std::max(0.0, p));
}

double class_posterior_y(const GmmWorld& world, const Vec& y) {
  const PosteriorGmm post = posterior_given_y(world, y);
  double p = 0.0;
  for (int k = 0; k < world.n_components(); ++k) {
    if (world.component_class[k] == 1) p += post.weights_given_y[k];
  }
  return std::min(1.0, std::max(0.0, p));
}

Vec mmse_estimate(const PosteriorGmm& posterior) {
  const int M = static_cast<int>(posterior.weights_given_y.size());
  Vec out = Vec::Zero(posterior.means_given_y[0].size());
  for (int k = 0; k < M; ++k) {
    out += posterior.weights_given_y[k] * posterior.means_given_y[k];
  }
  return out;
}

GmmWorld preset_world(const std::string& name) {
  if (name == "d1m2") {
    Vec w(2);
    w << 0.5, 0.5;
    std::vector<Vec> means{Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)};
    std::vector<Mat> covs{Mat::Identity(1, 1), Mat::Identity(1, 1)};
    return make_gmm_world(w, means, covs, {0, 1}, 1.0);
  }
  if (name == "d2m4") {
    // Four narrow modes on a slightly irregular ring. The posterior at the
    // origin then has mean near zero and unit-scale variance, so DDIM chains
    // started from standard normal noise see no initialization offset and
    // the remaining sampler error is pure discretization.
    const double angles[4] = {0.4, 1.9, 3.5, 5.1};
    const double radii[4] = {1.45, 1.392, 1.566, 1.45};
    Vec w(4);
    w << 0.30, 0.22, 0.26, 0.22;
    std::vector<Vec> means;
    std::vector<Mat> covs;
    for (int k = 0; k < 4; ++k) {
      Vec m(2);
      m << radii[k] * std::cos(angles[k]), radii[k] * std::sin(angles[k]);
      means.push_back(m);
      covs.push_back(0.12 * Mat::Identity(2, 2));
    }
    return make_gmm_world(w, means, covs, {0, 1, 0, 1}, 0.7);
  }
  if (name == "d8m2") {
    const int d = 8;
    Vec w(2);
    w << 0.55, 0.45;
    Vec m0(d), m1(d);
    for (int i = 0; i < d; ++i) {
      const double sign = (i % 2 == 0) ? 1.0 : -1.0;
      m0[i] = 0.7 * sign;
      m1[i] = -0.7 * sign;
    }
    Mat S = 0.25 * Mat::Identity(d, d);
    return make_gmm_world(w, {m0, m1}, {S, S}, {1, 0}, 0.8);
  }
  throw ValidationError("unknown preset world: " + name);
}

}  // namespace esckit
