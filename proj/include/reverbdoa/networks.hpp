#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "reverbdoa/rng.hpp"
#include "reverbdoa/tape.hpp"
#include "reverbdoa/tensor.hpp"

namespace reverbdoa {

// Shared geometry of the three networks. The input is a 1-channel in_h x in_w
// grid; two conv+pool stages reduce it to conv_channels x in_h/4 x in_w/4,
// and the decoder mirrors that path with unpool + transposed conv stages.
struct ArchConfig {
  int in_h = 32;
  int in_w = 128;
  int conv_channels = 8;
  int hidden = 200;
  int T = 37;
  int M = 2;

  int pooled_h() const { return in_h / 4; }
  int pooled_w() const { return in_w / 4; }
  int flat() const { return conv_channels * pooled_h() * pooled_w(); }

  void validate() const {
    if (in_h < 4 || in_w < 4 || in_h % 4 != 0 || in_w % 4 != 0) {
      throw config_error("arch: input sides must be multiples of 4");
    }
    if (conv_channels < 1 || hidden < 1 || T < 2 || M < 1) {
      throw config_error("arch: non-positive layer size");
    }
  }

  std::string digest() const {
    return "h" + std::to_string(in_h) + "w" + std::to_string(in_w) + "c" +
           std::to_string(conv_channels) + "f" + std::to_string(hidden) +
           "T" + std::to_string(T) + "M" + std::to_string(M);
  }

  bool operator==(const ArchConfig&) const = default;
};

struct ConvLayer {
  Tensor w, b;
};
struct DenseLayer {
  Tensor w, b;
};

struct ClassifierParams {
  ConvLayer conv1, conv2;
  DenseLayer fc1, out;
};

struct InferenceParams {
  ConvLayer conv1, conv2;
  DenseLayer fc1, head;
};

struct GenerativeParams {
  DenseLayer fc1, fc2;
  ConvLayer up1, up2;  // transposed conv layers, weights [Cin, Cout, 3, 3]
};

struct ModelParams {
  ArchConfig arch;
  ClassifierParams classifier;
  InferenceParams inference;
  GenerativeParams generative;

  // Canonical tensor order used by initialization, optimizer state and
  // checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    return {{"classifier.conv1.w", &classifier.conv1.w},
            {"classifier.conv1.b", &classifier.conv1.b},
            {"classifier.conv2.w", &classifier.conv2.w},
            {"classifier.conv2.b", &classifier.conv2.b},
            {"classifier.fc1.w", &classifier.fc1.w},
            {"classifier.fc1.b", &classifier.fc1.b},
            {"classifier.out.w", &classifier.out.w},
            {"classifier.out.b", &classifier.out.b},
            {"inference.conv1.w", &inference.conv1.w},
            {"inference.conv1.b", &inference.conv1.b},
            {"inference.conv2.w", &inference.conv2.w},
            {"inference.conv2.b", &inference.conv2.b},
            {"inference.fc1.w", &inference.fc1.w},
            {"inference.fc1.b", &inference.fc1.b},
            {"inference.head.w", &inference.head.w},
            {"inference.head.b", &inference.head.b},
            {"generative.fc1.w", &generative.fc1.w},
            {"generative.fc1.b", &generative.fc1.b},
            {"generative.fc2.w", &generative.fc2.w},
            {"generative.fc2.b", &generative.fc2.b},
            {"generative.up1.w", &generative.up1.w},
            {"generative.up1.b", &generative.up1.b},
            {"generative.up2.w", &generative.up2.w},
            {"generative.up2.b", &generative.up2.b}};
  }

  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const {
    auto& self = const_cast<ModelParams&>(*this);
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : self.named_tensors()) out.emplace_back(name, t);
    return out;
  }

  long long parameter_count() const {
    long long n = 0;
    for (auto& [name, t] : named_tensors()) n += t->numel();
    return n;
  }

  static ModelParams zeros(const ArchConfig& arch) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    const int cc = arch.conv_channels;
    const int flat = arch.flat();
    p.classifier.conv1 = {Tensor({cc, 1, 3, 3}), Tensor({cc})};
    p.classifier.conv2 = {Tensor({cc, cc, 3, 3}), Tensor({cc})};
    p.classifier.fc1 = {Tensor({arch.hidden, flat}), Tensor({arch.hidden})};
    p.classifier.out = {Tensor({arch.T, arch.hidden}), Tensor({arch.T})};
    p.inference.conv1 = {Tensor({cc, 1, 3, 3}), Tensor({cc})};
    p.inference.conv2 = {Tensor({cc, cc, 3, 3}), Tensor({cc})};
    p.inference.fc1 = {Tensor({arch.hidden, flat + arch.T}),
                       Tensor({arch.hidden})};
    p.inference.head = {Tensor({2 * arch.M, arch.hidden}),
                        Tensor({2 * arch.M})};
    p.generative.fc1 = {Tensor({arch.hidden, arch.T + arch.M}),
                        Tensor({arch.hidden})};
    p.generative.fc2 = {Tensor({flat, arch.hidden}), Tensor({flat})};
    p.generative.up1 = {Tensor({cc, cc, 3, 3}), Tensor({cc})};
    p.generative.up2 = {Tensor({cc, 1, 3, 3}), Tensor({1})};
    return p;
  }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per layer, filled in canonical
  // tensor order from one seeded stream.
  static ModelParams init(const ArchConfig& arch, std::uint64_t seed) {
    ModelParams p = zeros(arch);
    Rng rng(derive_seed(seed, "model-init"));
    auto fill = [&rng](Tensor& t, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t.values) v = rng.uniform(-bound, bound);
    };
    auto fill_conv = [&fill](ConvLayer& l, int fan_in) {
      fill(l.w, fan_in);
      fill(l.b, fan_in);
    };
    auto fill_dense = [&fill](DenseLayer& l) {
      fill(l.w, l.w.dim(1));
      fill(l.b, l.w.dim(1));
    };
    fill_conv(p.classifier.conv1, 1 * 9);
    fill_conv(p.classifier.conv2, arch.conv_channels * 9);
    fill_dense(p.classifier.fc1);
    fill_dense(p.classifier.out);
    fill_conv(p.inference.conv1, 1 * 9);
    fill_conv(p.inference.conv2, arch.conv_channels * 9);
    fill_dense(p.inference.fc1);
    fill_dense(p.inference.head);
    fill_dense(p.generative.fc1);
    fill_dense(p.generative.fc2);
    fill_conv(p.generative.up1, arch.conv_channels * 9);
    fill_conv(p.generative.up2, arch.conv_channels * 9);
    return p;
  }
};

// ---- tape wiring ----

struct LayerNodes {
  Tape::NodeId w, b;
};
struct ClassifierNodes {
  LayerNodes conv1, conv2, fc1, out;
};
struct InferenceNodes {
  LayerNodes conv1, conv2, fc1, head;
};
struct GenerativeNodes {
  LayerNodes fc1, fc2, up1, up2;
};
struct ModelNodes {
  ClassifierNodes classifier;
  InferenceNodes inference;
  GenerativeNodes generative;

  // Same order as ModelParams::named_tensors().
  std::vector<Tape::NodeId> tensor_nodes() const {
    return {classifier.conv1.w, classifier.conv1.b, classifier.conv2.w,
            classifier.conv2.b, classifier.fc1.w,   classifier.fc1.b,
            classifier.out.w,   classifier.out.b,   inference.conv1.w,
            inference.conv1.b,  inference.conv2.w,  inference.conv2.b,
            inference.fc1.w,    inference.fc1.b,    inference.head.w,
            inference.head.b,   generative.fc1.w,   generative.fc1.b,
            generative.fc2.w,   generative.fc2.b,   generative.up1.w,
            generative.up1.b,   generative.up2.w,   generative.up2.b};
  }
};

namespace detail {
inline LayerNodes add_layer(Tape& t, const Tensor& w, const Tensor& b,
                            bool trainable) {
  return {t.leaf(w, trainable), t.leaf(b, trainable)};
}
}  // namespace detail

inline ClassifierNodes add_network(Tape& t, const ClassifierParams& p,
                                   bool trainable) {
  return {detail::add_layer(t, p.conv1.w, p.conv1.b, trainable),
          detail::add_layer(t, p.conv2.w, p.conv2.b, trainable),
          detail::add_layer(t, p.fc1.w, p.fc1.b, trainable),
          detail::add_layer(t, p.out.w, p.out.b, trainable)};
}

inline InferenceNodes add_network(Tape& t, const InferenceParams& p,
                                  bool trainable) {
  return {detail::add_layer(t, p.conv1.w, p.conv1.b, trainable),
          detail::add_layer(t, p.conv2.w, p.conv2.b, trainable),
          detail::add_layer(t, p.fc1.w, p.fc1.b, trainable),
          detail::add_layer(t, p.head.w, p.head.b, trainable)};
}

inline GenerativeNodes add_network(Tape& t, const GenerativeParams& p,
                                   bool trainable) {
  return {detail::add_layer(t, p.fc1.w, p.fc1.b, trainable),
          detail::add_layer(t, p.fc2.w, p.fc2.b, trainable),
          detail::add_layer(t, p.up1.w, p.up1.b, trainable),
          detail::add_layer(t, p.up2.w, p.up2.b, trainable)};
}

inline ModelNodes add_model(Tape& t, const ModelParams& p, bool trainable) {
  return {add_network(t, p.classifier, trainable),
          add_network(t, p.inference, trainable),
          add_network(t, p.generative, trainable)};
}

inline Tensor one_hot(int y, int T) {
  if (y < 0 || y >= T) {
    throw dimension_error("one_hot: class index out of range");
  }
  Tensor t({T});
  t[y] = 1.0;
  return t;
}

// conv -> relu -> pool -> conv -> relu -> pool -> flatten, the front shared
// by the classifier and inference networks (with separate weights).
inline Tape::NodeId conv_trunk(Tape& t, const LayerNodes& c1,
                               const LayerNodes& c2, const ArchConfig& arch,
                               Tape::NodeId x) {
  auto h = t.max_pool2d(t.relu(t.conv2d(x, c1.w, c1.b)));
  h = t.max_pool2d(t.relu(t.conv2d(h, c2.w, c2.b)));
  return t.reshape(h, {arch.flat()});
}

inline Tape::NodeId classifier_probs(Tape& t, const ClassifierNodes& n,
                                     const ArchConfig& arch, Tape::NodeId x) {
  auto h = conv_trunk(t, n.conv1, n.conv2, arch, x);
  h = t.relu(t.dense(h, n.fc1.w, n.fc1.b));
  return t.softmax(t.dense(h, n.out.w, n.out.b));
}

inline Tape::NodeId inference_trunk(Tape& t, const InferenceNodes& n,
                                    const ArchConfig& arch, Tape::NodeId x) {
  return conv_trunk(t, n.conv1, n.conv2, arch, x);
}

// Latent posterior for one (input, label) pair given the precomputed trunk;
// the head emits means and log variances side by side.
inline std::pair<Tape::NodeId, Tape::NodeId> inference_posterior(
    Tape& t, const InferenceNodes& n, const ArchConfig& arch,
    Tape::NodeId trunk, int y) {
  auto joined = t.concat(trunk, t.constant(one_hot(y, arch.T)));
  auto h = t.relu(t.dense(joined, n.fc1.w, n.fc1.b));
  auto head = t.dense(h, n.head.w, n.head.b);
  auto mu = t.slice(head, 0, arch.M);
  auto var = t.exp(t.slice(head, arch.M, arch.M));
  return {mu, var};
}

// Decoder mean: label and latent code in, input-shaped grid out. The final
// layer is linear.
inline Tape::NodeId generative_mean(Tape& t, const GenerativeNodes& n,
                                    const ArchConfig& arch, int y,
                                    Tape::NodeId z) {
  auto joined = t.concat(t.constant(one_hot(y, arch.T)), z);
  auto h = t.relu(t.dense(joined, n.fc1.w, n.fc1.b));
  h = t.relu(t.dense(h, n.fc2.w, n.fc2.b));
  h = t.reshape(h, {arch.conv_channels, arch.pooled_h(), arch.pooled_w()});
  h = t.relu(t.transpose_conv2d(t.max_unpool2d(h), n.up1.w, n.up1.b));
  return t.transpose_conv2d(t.max_unpool2d(h), n.up2.w, n.up2.b);
}

inline int argmax_index(const Tensor& t) {
  int best = 0;
  for (int i = 1; i < t.numel(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

inline Tensor classifier_probabilities(const ModelParams& p, const Tensor& x) {
  Tape t;
  auto n = add_network(t, p.classifier, false);
  auto probs = classifier_probs(t, n, p.arch, t.constant(x));
  return t.value(probs);
}

inline int predict_class(const ModelParams& p, const Tensor& x) {
  return argmax_index(classifier_probabilities(p, x));
}

}  // namespace reverbdoa
