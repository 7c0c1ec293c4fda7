#pragma once

#include <cmath>
#include <vector>

#include "reverbdoa/networks.hpp"
#include "reverbdoa/tape.hpp"

namespace reverbdoa {

constexpr double kLogGuard = 1e-12;

// Per-sample subgraph shared by the objective terms: the constant input, the
// inference conv trunk (label independent, so computed once and reused by all
// label enumerations), classifier probabilities, and the constant tensors of
// the unit-variance decoder likelihood and the standard-normal prior.
struct ObjectiveGraph {
  Tape::NodeId x;
  Tape::NodeId trunk;
  Tape::NodeId probs;
  Tape::NodeId ones_x;
  Tape::NodeId zeros_z;
  Tape::NodeId ones_z;
};

inline ObjectiveGraph begin_objective(Tape& t, const ModelNodes& m,
                                      const ArchConfig& arch,
                                      const Tensor& x) {
  if (x.shape != std::vector<int>{1, arch.in_h, arch.in_w}) {
    throw dimension_error("objective: input shape " + x.shape_str() +
                          " does not match architecture");
  }
  ObjectiveGraph g;
  g.x = t.constant(x);
  g.trunk = inference_trunk(t, m.inference, arch, g.x);
  g.probs = classifier_probs(t, m.classifier, arch, g.x);
  g.ones_x = t.constant(Tensor({1, arch.in_h, arch.in_w}, 1.0));
  g.zeros_z = t.constant(Tensor({arch.M}));
  g.ones_z = t.constant(Tensor({arch.M}, 1.0));
  return g;
}

// Negative variational bound for one (input, label) pair:
//   C = -[ ln p(x | y, z) + ln p(y) + ln p(z) - ln q(z | x, y) ]
// with z = mu + sqrt(var) * eps drawn once, a uniform label prior
// p(y) = 1/T, unit decoder variance, and a standard-normal latent prior.
inline Tape::NodeId labeled_bound(Tape& t, const ModelNodes& m,
                                  const ArchConfig& arch,
                                  const ObjectiveGraph& g, int y,
                                  const Tensor& eps) {
  auto [mu, var] = inference_posterior(t, m.inference, arch, g.trunk, y);
  auto z = t.reparameterize(mu, var, eps);
  auto xhat = generative_mean(t, m.generative, arch, y, z);
  auto ll_x = t.gaussian_log_prob(g.x, xhat, g.ones_x);
  auto ll_prior = t.gaussian_log_prob(z, g.zeros_z, g.ones_z);
  auto ll_posterior = t.gaussian_log_prob(z, mu, var);
  auto elbo = t.add_n({ll_x, ll_prior, t.scale(ll_posterior, -1.0)});
  return t.add_scalar(t.scale(elbo, -1.0),
                      std::log(static_cast<double>(arch.T)));
}

// Classifier cross-entropy term -ln q(y | x) added for labeled samples.
inline Tape::NodeId classifier_nll(Tape& t, const ObjectiveGraph& g, int y,
                                   double guard = kLogGuard) {
  return t.scale(t.categorical_log_prob(y, g.probs, guard), -1.0);
}

// Negative bound for an unlabeled input, with the label marginalized by
// direct enumeration:
//   D = sum_y q(y|x) [ C(x, y) + ln q(y|x) ]
// eps supplies the latent draw per enumerated label: either one tensor
// shared by every label or one tensor per label.
inline Tape::NodeId unlabeled_bound(Tape& t, const ModelNodes& m,
                                    const ArchConfig& arch,
                                    const ObjectiveGraph& g,
                                    const std::vector<Tensor>& eps,
                                    double guard = kLogGuard) {
  if (eps.size() != 1 && eps.size() != static_cast<std::size_t>(arch.T)) {
    throw dimension_error("unlabeled_bound: need 1 or T latent draws");
  }
  std::vector<Tape::NodeId> terms;
  terms.reserve(static_cast<std::size_t>(arch.T));
  for (int y = 0; y < arch.T; ++y) {
    const Tensor& e = eps.size() == 1 ? eps[0] : eps[static_cast<std::size_t>(y)];
    auto c = labeled_bound(t, m, arch, g, y, e);
    auto q = t.slice(g.probs, y, 1);
    auto ln_q = t.log_guarded(q, guard);
    terms.push_back(t.mul(q, t.add(c, ln_q)));
  }
  return t.add_n(terms);
}

// Classifier-only cross-entropy on its own graph, for the supervised
// baseline.
inline Tape::NodeId supervised_nll(Tape& t, const ClassifierNodes& n,
                                   const ArchConfig& arch, const Tensor& x,
                                   int y, double guard = kLogGuard) {
  if (x.shape != std::vector<int>{1, arch.in_h, arch.in_w}) {
    throw dimension_error("supervised_nll: input shape " + x.shape_str() +
                          " does not match architecture");
  }
  auto probs = classifier_probs(t, n, arch, t.constant(x));
  return t.scale(t.categorical_log_prob(y, probs, guard), -1.0);
}

}  // namespace reverbdoa
