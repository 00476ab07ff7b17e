#pragma once

#include "esckit/core.hpp"

#include <string>
#include <vector>

namespace esckit {

// Analytic ground-truth world: Gaussian-mixture prior over the source space,
// additive isotropic Gaussian channel y = x + channel_sigma * xi, and a
// binary class attached to each mixture component. Everything downstream
// (posterior, class posteriors, MMSE estimate) is available in closed form,
// which makes this the reference oracle for the samplers and classifiers.
struct GmmWorld {
  Vec weights;                      // simplex, length M
  std::vector<Vec> means;           // M vectors in R^d
  std::vector<Mat> covariances;     // M SPD d x d matrices
  std::vector<int> component_class; // M entries in {0,1}
  double channel_sigma = 1.0;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int n_components() const { return static_cast<int>(weights.size()); }
};

// Validates the mixture invariants (simplex weights, SPD covariances,
// binary classes, positive channel noise). Full covariances are accepted
// only up to d = 16; use diagonal matrices beyond that.
GmmWorld make_gmm_world(Vec weights, std::vector<Vec> means,
                        std::vector<Mat> covariances,
                        std::vector<int> component_class,
                        double channel_sigma);

GmmWorld gmm_world_from_json(const std::string& json_text);
GmmWorld gmm_world_load(const std::string& path);
std::string gmm_world_to_json(const GmmWorld& world);

// Exact posterior of the source given one observation: still a Gaussian
// mixture, by per-component Gaussian conditioning.
struct PosteriorGmm {
  Vec weights_given_y;
  std::vector<Vec> means_given_y;
  std::vector<Mat> covs_given_y;
};

struct JointSample {
  Vec x;
  Vec y;
  int c = 0;
};

// Draw n joint (x, y, c) triples: component, then x, then the noisy channel.
std::vector<JointSample> sample_joint(const GmmWorld& world, RngStream& stream,
                                      int n);

// weights_k ∝ w_k N(y; mu_k, Sigma_k + sigma^2 I), normalized with
// log-sum-exp; means and covariances by Gaussian conditioning.
PosteriorGmm posterior_given_y(const GmmWorld& world, const Vec& y);

// K i.i.d. exact posterior draws (categorical component, then Cholesky).
Mat posterior_sample(const PosteriorGmm& posterior, RngStream& stream, int K);

// pi(C=1 | x): class-1 responsibility mass under the prior mixture.
double class_posterior_x(const GmmWorld& world, const Vec& x);
// pi(C=1 | y): class-1 mass of the posterior mixture weights.
double class_posterior_y(const GmmWorld& world, const Vec& y);

// Posterior mean: sum_k w_k mu_k.
Vec mmse_estimate(const PosteriorGmm& posterior);

// Built-in desk-scale worlds, by name:
//   "d1m2"  — 1-D two-component world with the hand-checkable geometry
//   "d2m4"  — 2-D four-component pinwheel, two classes
//   "d8m2"  — 8-D two-component world with diagonal covariances
GmmWorld preset_world(const std::string& name);

}  // namespace esckit
