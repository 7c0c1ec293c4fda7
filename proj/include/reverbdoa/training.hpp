#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reverbdoa/adam.hpp"
#include "reverbdoa/features.hpp"
#include "reverbdoa/objectives.hpp"
#include "reverbdoa/rng.hpp"

namespace reverbdoa {

struct TrainConfig {
  double alpha = 10.0;
  double lr = 5e-5;
  int batch = 256;
  int epochs = 300;
  std::uint64_t seed = 1;
  double log_guard = kLogGuard;
  // One latent draw shared across the enumerated labels of an unlabeled
  // sample (false draws one per label).
  bool shared_eps = true;
  bool checked = false;

  void validate() const {
    if (batch < 1) throw config_error("train: batch < 1");
    if (epochs < 1) throw config_error("train: epochs < 1");
    if (alpha < 0.0) throw config_error("train: negative alpha");
    if (!(lr > 0.0)) throw config_error("train: non-positive lr");
  }
};

struct EpochStats {
  double labeled_sum = 0.0;      // sum of labeled bounds processed
  double unlabeled_sum = 0.0;    // sum of unlabeled bounds processed
  double classifier_sum = 0.0;   // sum of -ln q(y|x) over labeled instances
  double objective = 0.0;        // labeled_sum + unlabeled_sum
  double objective_alpha = 0.0;  // objective + alpha * classifier_sum
  long long labeled_instances = 0;
  long long unlabeled_instances = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // epoch whose parameters were kept
  double best_val_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Balanced labeled subset: J/T windows per direction, chosen by a seeded
// shuffle of each direction's windows. Returns indices into set.samples.
inline std::vector<int> select_labeled_windows(const FeatureSet& set, int J,
                                               std::uint64_t seed) {
  const int T = set.grid.size();
  if (J < T || J % T != 0) {
    throw config_error("labeled selection: J must be a positive multiple of " +
                       std::to_string(T));
  }
  const int per = J / T;
  std::vector<std::vector<int>> by_label(static_cast<std::size_t>(T));
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const int y = set.samples[i].label;
    if (y >= 0) by_label[static_cast<std::size_t>(y)].push_back(static_cast<int>(i));
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(J));
  for (int t = 0; t < T; ++t) {
    auto& pool = by_label[static_cast<std::size_t>(t)];
    if (static_cast<int>(pool.size()) < per) {
      throw config_error("labeled selection: direction " + std::to_string(t) +
                         " has only " + std::to_string(pool.size()) +
                         " labeled windows, need " + std::to_string(per));
    }
    Rng rng(derive_seed(seed, "labeled-subset", static_cast<std::uint64_t>(t)));
    rng.shuffle(pool);
    out.insert(out.end(), pool.begin(), pool.begin() + per);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Evenly spreads n_s supervised slots among n_s + n_u batch slots; slot p is
// supervised when the running quota crosses an integer there.
inline std::vector<std::uint8_t> interleave_supervised(int n_u, int n_s) {
  const int total = n_u + n_s;
  std::vector<std::uint8_t> slots(static_cast<std::size_t>(total), 0);
  for (int p = 0; p < total; ++p) {
    const long long before = static_cast<long long>(p) * n_s / total;
    const long long after = static_cast<long long>(p + 1) * n_s / total;
    if (after > before) slots[static_cast<std::size_t>(p)] = 1;
  }
  return slots;
}

namespace detail {

inline void require_ready(const std::vector<const InputSample*>& set,
                          const ArchConfig& arch, bool need_labels,
                          const char* what) {
  for (const InputSample* s : set) {
    if (!s->normalized) {
      throw contract_error(std::string(what) + ": unnormalized sample");
    }
    if (s->x.shape != std::vector<int>{1, arch.in_h, arch.in_w}) {
      throw dimension_error(std::string(what) + ": sample shape " +
                            s->x.shape_str() + " does not match architecture");
    }
    if (need_labels && (s->label < 0 || s->label >= arch.T)) {
      throw contract_error(std::string(what) + ": sample without valid label");
    }
  }
}

// Reusable forward-only classifier; truncating back to the parameter prefix
// between inputs keeps one set of parameter copies alive.
class ClassifierEvaluator {
 public:
  ClassifierEvaluator(const ModelParams& p)
      : arch_(p.arch), nodes_(add_network(tape_, p.classifier, false)) {
    prefix_ = tape_.size();
  }

  Tensor probabilities(const Tensor& x) {
    tape_.truncate(prefix_);
    auto probs = classifier_probs(tape_, nodes_, arch_, tape_.constant(x));
    return tape_.value(probs);
  }

  int predict(const Tensor& x) { return argmax_index(probabilities(x)); }

 private:
  Tape tape_;
  ArchConfig arch_;
  ClassifierNodes nodes_;
  int prefix_ = 0;
};

inline double accuracy_on(ClassifierEvaluator& eval,
                          const std::vector<const InputSample*>& set) {
  if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
  long long hits = 0;
  for (const InputSample* s : set) {
    if (eval.predict(s->x) == s->label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

inline Tensor latent_draw(std::uint64_t seed, const char* tag, int epoch,
                          std::size_t index, int M) {
  Rng rng(derive_seed(seed, tag, static_cast<std::uint64_t>(epoch), index));
  Tensor e({M});
  for (double& v : e.values) v = rng.gaussian();
  return e;
}

}  // namespace detail

inline double accuracy(const ModelParams& params,
                       const std::vector<const InputSample*>& set) {
  detail::ClassifierEvaluator eval(params);
  return detail::accuracy_on(eval, set);
}

// Semi-supervised training. Each epoch walks the shuffled unlabeled set once
// in batches and revisits the labeled set in supervised batches interleaved
// at roughly J : U frequency; every batch ends with one Adam step on the
// summed batch loss. Parameters with the best validation accuracy are kept
// (earliest epoch wins ties). With an empty validation set the final
// parameters are returned instead.
inline TrainResult train_vae_ssl(const std::vector<const InputSample*>& labeled,
                                 const std::vector<const InputSample*>& unlabeled,
                                 const std::vector<const InputSample*>& validation,
                                 const ArchConfig& arch, const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  if (labeled.empty()) {
    throw config_error("train_vae_ssl: need at least one labeled sample");
  }
  detail::require_ready(labeled, arch, true, "train_vae_ssl labeled");
  detail::require_ready(unlabeled, arch, false, "train_vae_ssl unlabeled");
  detail::require_ready(validation, arch, true, "train_vae_ssl validation");

  const int J = static_cast<int>(labeled.size());
  const int U = static_cast<int>(unlabeled.size());

  ModelParams params = ModelParams::init(arch, cfg.seed);
  auto named = params.named_tensors();
  std::vector<Tensor*> tensors;
  tensors.reserve(named.size());
  for (auto& [name, t] : named) tensors.push_back(t);
  std::vector<Tensor> grads;
  grads.reserve(tensors.size());
  for (Tensor* t : tensors) grads.emplace_back(t->shape);
  std::vector<const Tensor*> grad_ptrs;
  grad_ptrs.reserve(grads.size());
  for (Tensor& g : grads) grad_ptrs.push_back(&g);

  AdamState adam(AdamConfig{.lr = cfg.lr});
  Tape tape(Tape::Options{.checked = cfg.checked});

  TrainResult result;
  result.params = params;
  result.report.best_val_accuracy = -1.0;

  const int sup_size = std::min(cfg.batch, J);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order_u(static_cast<std::size_t>(U));
    for (int i = 0; i < U; ++i) order_u[static_cast<std::size_t>(i)] = i;
    Rng shuffle_u(derive_seed(cfg.seed, "epoch-order-u",
                              static_cast<std::uint64_t>(epoch)));
    shuffle_u.shuffle(order_u);
    std::vector<int> order_l(static_cast<std::size_t>(J));
    for (int i = 0; i < J; ++i) order_l[static_cast<std::size_t>(i)] = i;
    Rng shuffle_l(derive_seed(cfg.seed, "epoch-order-l",
                              static_cast<std::uint64_t>(epoch)));
    shuffle_l.shuffle(order_l);

    const int n_u = (U + cfg.batch - 1) / cfg.batch;
    int n_s;
    if (U == 0) {
      n_s = (J + cfg.batch - 1) / cfg.batch;
    } else {
      n_s = std::max<int>(1, static_cast<int>(std::llround(
                                 static_cast<double>(n_u) * J / U)));
    }
    const std::vector<std::uint8_t> slots = interleave_supervised(n_u, n_s);

    EpochStats stats;
    int u_next = 0;
    int l_next = 0;  // cyclic cursor into order_l
    for (std::size_t slot = 0; slot < slots.size(); ++slot) {
      for (Tensor& g : grads) g.fill(0.0);
      tape.truncate(0);
      const ModelNodes nodes = add_model(tape, params, true);
      const std::vector<Tape::NodeId> param_nodes = nodes.tensor_nodes();
      const int prefix = tape.size();

      if (slots[slot]) {
        for (int i = 0; i < sup_size; ++i) {
          const int idx = order_l[static_cast<std::size_t>(l_next)];
          l_next = (l_next + 1) % J;
          const InputSample& s = *labeled[static_cast<std::size_t>(idx)];
          const Tensor eps = detail::latent_draw(
              cfg.seed, "eps-labeled", epoch, static_cast<std::size_t>(idx),
              arch.M);
          auto g = begin_objective(tape, nodes, arch, s.x);
          auto c = labeled_bound(tape, nodes, arch, g, s.label, eps);
          auto nll = classifier_nll(tape, g, s.label, cfg.log_guard);
          auto loss = tape.add(c, tape.scale(nll, cfg.alpha));
          tape.backward(loss);
          for (std::size_t k = 0; k < grads.size(); ++k) {
            const Tensor& pg = tape.grad(param_nodes[k]);
            for (int e = 0; e < grads[k].numel(); ++e) grads[k][e] += pg[e];
          }
          stats.labeled_sum += tape.value(c)[0];
          stats.classifier_sum += tape.value(nll)[0];
          ++stats.labeled_instances;
          tape.truncate(prefix);
        }
      } else {
        const int take = std::min(cfg.batch, U - u_next);
        for (int i = 0; i < take; ++i) {
          const int idx = order_u[static_cast<std::size_t>(u_next++)];
          const InputSample& s = *unlabeled[static_cast<std::size_t>(idx)];
          std::vector<Tensor> eps;
          const int draws = cfg.shared_eps ? 1 : arch.T;
          eps.reserve(static_cast<std::size_t>(draws));
          for (int d = 0; d < draws; ++d) {
            eps.push_back(detail::latent_draw(
                cfg.seed, "eps-unlabeled", epoch,
                static_cast<std::size_t>(idx) * static_cast<std::size_t>(draws) + d,
                arch.M));
          }
          auto g = begin_objective(tape, nodes, arch, s.x);
          auto d_node = unlabeled_bound(tape, nodes, arch, g, eps, cfg.log_guard);
          tape.backward(d_node);
          for (std::size_t k = 0; k < grads.size(); ++k) {
            const Tensor& pg = tape.grad(param_nodes[k]);
            for (int e = 0; e < grads[k].numel(); ++e) grads[k][e] += pg[e];
          }
          stats.unlabeled_sum += tape.value(d_node)[0];
          ++stats.unlabeled_instances;
          tape.truncate(prefix);
        }
      }
      adam.step(tensors, grad_ptrs);
    }
    tape.truncate(0);

    stats.objective = stats.labeled_sum + stats.unlabeled_sum;
    stats.objective_alpha = stats.objective + cfg.alpha * stats.classifier_sum;
    detail::ClassifierEvaluator eval(params);
    stats.train_accuracy = detail::accuracy_on(eval, labeled);
    stats.val_accuracy = detail::accuracy_on(eval, validation);
    result.report.epochs.push_back(stats);

    if (!validation.empty() &&
        stats.val_accuracy > result.report.best_val_accuracy) {
      result.report.best_val_accuracy = stats.val_accuracy;
      result.report.best_epoch = epoch;
      result.params = params;
    }
  }

  if (validation.empty()) {
    result.params = std::move(params);
    result.report.best_epoch = cfg.epochs - 1;
    result.report.best_val_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// Supervised baseline: the classifier alone under summed cross-entropy, same
// batching, optimizer and model selection rules.
inline TrainResult train_classifier(const std::vector<const InputSample*>& labeled,
                                    const std::vector<const InputSample*>& validation,
                                    const ArchConfig& arch,
                                    const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  if (labeled.empty()) {
    throw config_error("train_classifier: need at least one labeled sample");
  }
  detail::require_ready(labeled, arch, true, "train_classifier labeled");
  detail::require_ready(validation, arch, true, "train_classifier validation");

  const int J = static_cast<int>(labeled.size());
  ModelParams params = ModelParams::init(arch, cfg.seed);
  std::vector<Tensor*> tensors = {
      &params.classifier.conv1.w, &params.classifier.conv1.b,
      &params.classifier.conv2.w, &params.classifier.conv2.b,
      &params.classifier.fc1.w,   &params.classifier.fc1.b,
      &params.classifier.out.w,   &params.classifier.out.b};
  std::vector<Tensor> grads;
  for (Tensor* t : tensors) grads.emplace_back(t->shape);
  std::vector<const Tensor*> grad_ptrs;
  for (Tensor& g : grads) grad_ptrs.push_back(&g);

  AdamState adam(AdamConfig{.lr = cfg.lr});
  Tape tape(Tape::Options{.checked = cfg.checked});

  TrainResult result;
  result.params = params;
  result.report.best_val_accuracy = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(J));
    for (int i = 0; i < J; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_l(derive_seed(cfg.seed, "epoch-order-l",
                              static_cast<std::uint64_t>(epoch)));
    shuffle_l.shuffle(order);

    EpochStats stats;
    for (int start = 0; start < J; start += cfg.batch) {
      for (Tensor& g : grads) g.fill(0.0);
      tape.truncate(0);
      const ClassifierNodes nodes = add_network(tape, params.classifier, true);
      const std::vector<Tape::NodeId> param_nodes = {
          nodes.conv1.w, nodes.conv1.b, nodes.conv2.w, nodes.conv2.b,
          nodes.fc1.w,   nodes.fc1.b,   nodes.out.w,   nodes.out.b};
      const int prefix = tape.size();
      const int end = std::min(J, start + cfg.batch);
      for (int i = start; i < end; ++i) {
        const InputSample& s = *labeled[static_cast<std::size_t>(
            order[static_cast<std::size_t>(i)])];
        auto loss = supervised_nll(tape, nodes, arch, s.x, s.label,
                                   cfg.log_guard);
        tape.backward(loss);
        for (std::size_t k = 0; k < grads.size(); ++k) {
          const Tensor& pg = tape.grad(param_nodes[k]);
          for (int e = 0; e < grads[k].numel(); ++e) grads[k][e] += pg[e];
        }
        stats.classifier_sum += tape.value(loss)[0];
        ++stats.labeled_instances;
        tape.truncate(prefix);
      }
      adam.step(tensors, grad_ptrs);
    }
    tape.truncate(0);

    stats.objective = stats.classifier_sum;
    stats.objective_alpha = stats.classifier_sum;
    detail::ClassifierEvaluator eval(params);
    stats.train_accuracy = detail::accuracy_on(eval, labeled);
    stats.val_accuracy = detail::accuracy_on(eval, validation);
    result.report.epochs.push_back(stats);

    if (!validation.empty() &&
        stats.val_accuracy > result.report.best_val_accuracy) {
      result.report.best_val_accuracy = stats.val_accuracy;
      result.report.best_epoch = epoch;
      result.params = params;
    }
  }

  if (validation.empty()) {
    result.params = std::move(params);
    result.report.best_epoch = cfg.epochs - 1;
    result.report.best_val_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// Objective totals over fixed sets with caller-supplied latent draws, without
// touching parameters. Used to audit the training loss bookkeeping; summing
// results over any partition of the sets reproduces the whole-set totals.
struct ObjectiveTotals {
  double labeled_sum = 0.0;
  double unlabeled_sum = 0.0;
  double classifier_sum = 0.0;

  double objective() const { return labeled_sum + unlabeled_sum; }
  double objective_alpha(double alpha) const {
    return objective() + alpha * classifier_sum;
  }
};

inline ObjectiveTotals evaluate_objective(
    const ModelParams& params, const std::vector<const InputSample*>& labeled,
    const std::vector<const InputSample*>& unlabeled,
    const std::vector<Tensor>& eps_labeled,
    const std::vector<std::vector<Tensor>>& eps_unlabeled,
    double log_guard = kLogGuard) {
  if (eps_labeled.size() != labeled.size() ||
      eps_unlabeled.size() != unlabeled.size()) {
    throw dimension_error("evaluate_objective: latent draw count mismatch");
  }
  const ArchConfig& arch = params.arch;
  detail::require_ready(labeled, arch, true, "evaluate_objective labeled");
  detail::require_ready(unlabeled, arch, false, "evaluate_objective unlabeled");
  Tape tape;
  const ModelNodes nodes = add_model(tape, params, false);
  const int prefix = tape.size();
  ObjectiveTotals totals;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    auto g = begin_objective(tape, nodes, arch, labeled[i]->x);
    auto c = labeled_bound(tape, nodes, arch, g, labeled[i]->label,
                           eps_labeled[i]);
    auto nll = classifier_nll(tape, g, labeled[i]->label, log_guard);
    totals.labeled_sum += tape.value(c)[0];
    totals.classifier_sum += tape.value(nll)[0];
    tape.truncate(prefix);
  }
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    auto g = begin_objective(tape, nodes, arch, unlabeled[i]->x);
    auto d = unlabeled_bound(tape, nodes, arch, g, eps_unlabeled[i], log_guard);
    totals.unlabeled_sum += tape.value(d)[0];
    tape.truncate(prefix);
  }
  return totals;
}

// Decoder mean for one (label, latent) pair, on the normalized feature scale.
inline Tensor generate_rtf_phase(const ModelParams& params, int y,
                                 const Tensor& z) {
  Tape tape;
  auto nodes = add_network(tape, params.generative, false);
  auto out = generative_mean(tape, nodes, params.arch, y, tape.constant(z));
  return tape.value(out);
}

// Sampling variant: draws z from the standard-normal prior under the seed.
inline Tensor generate_rtf_phase(const ModelParams& params, int y,
                                 std::uint64_t seed) {
  Rng rng(derive_seed(seed, "generate", static_cast<std::uint64_t>(y)));
  Tensor z({params.arch.M});
  z.values = rng.gaussian_vector(static_cast<std::size_t>(params.arch.M));
  return generate_rtf_phase(params, y, z);
}

}  // namespace reverbdoa
