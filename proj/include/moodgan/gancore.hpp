#pragma once

// Condition-interchangeable generator/discriminator pair and the loss terms
// (Wasserstein adversarial with gradient penalty, condition regression or
// classification, cycle reconstruction).

#include "moodgan/nn/layers.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace moodgan {
struct ImageSample;
}

namespace moodgan::gan {

using nn::FeatureMap;
using nn::Mat;
using nn::Var;

enum class ConditionKind { kDiscrete7, kAv2, kMood3 };
enum class LossKind { kClassification, kRegression };

std::string to_string(ConditionKind kind);
ConditionKind parse_condition_kind(const std::string& name);

struct ConditionSpace {
  ConditionKind kind = ConditionKind::kMood3;
  int dim = 3;
  LossKind loss_kind = LossKind::kRegression;
  double lambda_reg = 3.0;

  /// Default lambda_reg: 1 for classification, 3 for regression.
  static ConditionSpace make(ConditionKind kind, std::optional<double> lambda_reg = std::nullopt);
  void validate() const;
  /// Name of the annotation field this space reads.
  std::string field() const;
};

/// Flat condition vector for one annotated sample.
Eigen::VectorXf encode_condition(const ConditionSpace& space, const ImageSample& sample);

struct LossWeights {
  double lambda_reg = 3.0;
  double lambda_rec = 10.0;
  double lambda_gp = 10.0;

  void validate() const {
    if (lambda_reg < 0 || lambda_rec < 0 || lambda_gp < 0) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
  }
};

// ---------------------------------------------------------------------------
// Networks.

struct GeneratorSpec {
  int base_channels = 8;
  int downsamples = 2;
  int residual_blocks = 2;
  int edge_kernel = 3;
  bool instance_norm = false;

  static GeneratorSpec desk() { return {}; }
  /// Layout of the cited 128x128 face editor.
  static GeneratorSpec full() { return {64, 2, 6, 7, true}; }
};

struct DiscriminatorSpec {
  int base_channels = 16;
  int downsamples = 3;

  static DiscriminatorSpec desk() { return {}; }
  static DiscriminatorSpec full() { return {64, 6}; }
};

template <typename Scalar>
class Generator {
 public:
  Generator(int condition_dim, GeneratorSpec spec, std::uint64_t seed)
      : condition_dim_(condition_dim), spec_(spec) {
    Rng rng(seed);
    const int k = spec.edge_kernel;
    int ch = spec.base_channels;
    convs_.emplace_back(params_, "stem", nn::ConvShape{3 + condition_dim, ch, k, 1, k / 2}, rng);
    norms_.emplace_back(make_norm("stem.norm", ch));
    for (int i = 0; i < spec.downsamples; ++i) {
      convs_.emplace_back(params_, "down" + std::to_string(i), nn::ConvShape{ch, 2 * ch, 4, 2, 1}, rng);
      norms_.emplace_back(make_norm("down" + std::to_string(i) + ".norm", 2 * ch));
      ch *= 2;
    }
    for (int i = 0; i < spec.residual_blocks; ++i) {
      const std::string name = "res" + std::to_string(i);
      convs_.emplace_back(params_, name + ".a", nn::ConvShape{ch, ch, 3, 1, 1}, rng);
      norms_.emplace_back(make_norm(name + ".a.norm", ch));
      convs_.emplace_back(params_, name + ".b", nn::ConvShape{ch, ch, 3, 1, 1}, rng);
      norms_.emplace_back(make_norm(name + ".b.norm", ch));
    }
    for (int i = 0; i < spec.downsamples; ++i) {
      ups_.emplace_back(params_, "up" + std::to_string(i), nn::ConvShape{ch, ch / 2, 4, 2, 1}, rng);
      up_norms_.emplace_back(make_norm("up" + std::to_string(i) + ".norm", ch / 2));
      ch /= 2;
    }
    convs_.emplace_back(params_, "out", nn::ConvShape{ch, 3, k, 1, k / 2}, rng);
  }

  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;

  /// images in [-1, 1], conditions [dim, batch] -> images in [-1, 1].
  FeatureMap<Scalar> operator()(const FeatureMap<Scalar>& images, const Var<Scalar>& conditions) const {
    if (images.channels() != 3) throw std::invalid_argument("generator: expected 3 channels");
    if (conditions.rows() != condition_dim_ || conditions.cols() != images.batch) {
      throw std::invalid_argument("generator: condition shape mismatch");
    }
    const int factor = 1 << spec_.downsamples;
    if (images.height % factor != 0 || images.width % factor != 0) {
      throw std::invalid_argument("generator: image size must be divisible by " + std::to_string(factor));
    }
    auto h = nn::concat_channels(images, nn::spread(conditions, images.height, images.width));
    std::size_t layer = 0;
    auto block = [&](const FeatureMap<Scalar>& x) { return norm(layer, convs_[layer](x)); };
    auto relu = [](const FeatureMap<Scalar>& x) { return nn::map_data(x, [](auto v) { return nn::relu(v); }); };

    h = relu(block(h));
    ++layer;
    for (int i = 0; i < spec_.downsamples; ++i, ++layer) h = relu(block(h));
    for (int i = 0; i < spec_.residual_blocks; ++i) {
      auto inner = relu(block(h));
      ++layer;
      auto outer = block(inner);
      ++layer;
      h = {h.data + outer.data, h.batch, h.height, h.width};
    }
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      auto up = ups_[i](h);
      h = relu(up_norms_[i] ? (*up_norms_[i])(up) : up);
    }
    auto out = convs_[layer](h);
    return nn::map_data(out, [](auto v) { return nn::tanh(v); });
  }

  int condition_dim() const { return condition_dim_; }
  const GeneratorSpec& spec() const { return spec_; }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }

 private:
  std::optional<nn::InstanceNorm<Scalar>> make_norm(const std::string& name, int channels) {
    if (!spec_.instance_norm) return std::nullopt;
    return nn::InstanceNorm<Scalar>(params_, name, channels);
  }

  FeatureMap<Scalar> norm(std::size_t layer, const FeatureMap<Scalar>& x) const {
    return norms_[layer] ? (*norms_[layer])(x) : x;
  }

  int condition_dim_;
  GeneratorSpec spec_;
  nn::ParameterSet<Scalar> params_;
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::vector<std::optional<nn::InstanceNorm<Scalar>>> norms_;
  std::vector<nn::ConvTranspose2d<Scalar>> ups_;
  std::vector<std::optional<nn::InstanceNorm<Scalar>>> up_norms_;
};

template <typename Scalar>
struct CriticOutput {
  Var<Scalar> score;      // [1, N]
  Var<Scalar> condition;  // [dim, N]
};

template <typename Scalar>
class Discriminator {
 public:
  Discriminator(int condition_dim, int image_size, DiscriminatorSpec spec, std::uint64_t seed)
      : condition_dim_(condition_dim), image_size_(image_size), spec_(spec) {
    Rng rng(seed);
    int ch = 3, next = spec.base_channels, size = image_size;
    for (int i = 0; i < spec.downsamples; ++i) {
      if (size % 2 != 0 || size < 2) throw std::invalid_argument("discriminator: image size too small");
      convs_.emplace_back(params_, "conv" + std::to_string(i), nn::ConvShape{ch, next, 4, 2, 1}, rng);
      ch = next;
      next *= 2;
      size /= 2;
    }
    const int features = ch * size * size;
    score_head_ = nn::Dense<Scalar>(params_, "score", features, 1, rng);
    condition_head_ = nn::Dense<Scalar>(params_, "condition", features, condition_dim, rng);
  }

  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;
  Discriminator(Discriminator&&) = default;
  Discriminator& operator=(Discriminator&&) = default;

  CriticOutput<Scalar> operator()(const FeatureMap<Scalar>& images) const {
    if (images.height != image_size_ || images.width != image_size_ || images.channels() != 3) {
      throw std::invalid_argument("discriminator: image shape mismatch");
    }
    auto h = images;
    for (const auto& conv : convs_) {
      h = nn::map_data(conv(h), [](auto v) { return nn::leaky_relu(v, Scalar(0.01)); });
    }
    auto flat = nn::flatten(h);
    return {score_head_(flat), condition_head_(flat)};
  }

  int condition_dim() const { return condition_dim_; }
  int image_size() const { return image_size_; }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }

 private:
  int condition_dim_;
  int image_size_;
  DiscriminatorSpec spec_;
  nn::ParameterSet<Scalar> params_;
  std::vector<nn::Conv2d<Scalar>> convs_;
  nn::Dense<Scalar> score_head_;
  nn::Dense<Scalar> condition_head_;
};

// ---------------------------------------------------------------------------
// Loss terms. `critic` is any callable FeatureMap -> CriticOutput and
// `generator` any callable (FeatureMap, Var) -> FeatureMap.

template <typename Scalar>
struct AdversarialTerms {
  Var<Scalar> d_adv;
  Var<Scalar> g_adv;
  Var<Scalar> gp;
};

namespace detail {
inline void require_same_shape(int n1, int h1, int w1, int c1, int n2, int h2, int w2, int c2) {
  if (n1 != n2 || h1 != h2 || w1 != w2 || c1 != c2) throw std::invalid_argument("loss: shape mismatch");
}
template <typename Scalar>
void require_same_shape(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  require_same_shape(a.batch, a.height, a.width, a.channels(), b.batch, b.height, b.width, b.channels());
}
}  // namespace detail

/// Per-sample interpolates eps * real + (1 - eps) * fake, eps ~ U[0, 1).
template <typename Scalar>
FeatureMap<Scalar> interpolate(const FeatureMap<Scalar>& real, const FeatureMap<Scalar>& fake, Rng& rng) {
  detail::require_same_shape(real, fake);
  const Eigen::Index pixels = real.pixels();
  Mat<Scalar> mixed(real.data.rows(), real.data.cols());
  for (int n = 0; n < real.batch; ++n) {
    const Scalar eps = static_cast<Scalar>(rng.uniform());
    mixed.middleCols(n * pixels, pixels) = eps * real.data.value().middleCols(n * pixels, pixels) +
                                           (Scalar(1) - eps) * fake.data.value().middleCols(n * pixels, pixels);
  }
  return {Var<Scalar>::constant(std::move(mixed)), real.batch, real.height, real.width};
}

/// mean((||grad_x score(x)||_2 - 1)^2) over the samples of `points`; the
/// result stays differentiable with respect to the critic's parameters.
template <typename Scalar, typename Critic>
Var<Scalar> gradient_penalty(const Critic& critic, const FeatureMap<Scalar>& points) {
  FeatureMap<Scalar> x{Var<Scalar>::leaf(points.data.value()), points.batch, points.height, points.width};
  Var<Scalar> score_sum;
  {
    nn::NoGradGuard enable(true);
    score_sum = nn::sum(critic(x).score);
  }
  auto grads = nn::grad(score_sum, {x.data}, /*create_graph=*/nn::grad_enabled());
  auto per_pixel = nn::col_sum(nn::square(grads[0]));
  auto map = nn::index_maps::spread(1, x.batch, x.pixels());
  auto per_sample = nn::scatter_add(per_pixel, map, 1, x.batch);
  auto norms = nn::sqrt(nn::add_scalar(per_sample, std::numeric_limits<Scalar>::min()));
  return nn::mean(nn::square(nn::add_scalar(norms, Scalar(-1))));
}

/// Wasserstein terms: d_adv = mean D(fake) - mean D(real), g_adv = -mean D(fake).
template <typename Scalar, typename Critic>
AdversarialTerms<Scalar> adversarial_terms(const Critic& critic, const FeatureMap<Scalar>& real,
                                           const FeatureMap<Scalar>& fake, const FeatureMap<Scalar>& interp) {
  detail::require_same_shape(real, fake);
  detail::require_same_shape(real, interp);
  auto real_score = nn::mean(critic(real).score);
  auto fake_score = nn::mean(critic(fake).score);
  return {fake_score - real_score, -fake_score, gradient_penalty(critic, interp)};
}

/// Mean squared error over batch and components.
template <typename Scalar>
Var<Scalar> regression_loss(const Var<Scalar>& predicted, const Var<Scalar>& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
    throw std::invalid_argument("regression loss: shape mismatch");
  }
  return nn::mean(nn::square(predicted - target));
}

/// Softmax cross-entropy, logits [classes, N], averaged over samples.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) {
    throw std::invalid_argument("cross entropy: label count mismatch");
  }
  Mat<Scalar> onehot = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= logits.rows()) throw std::invalid_argument("cross entropy: label out of range");
    onehot(labels[n], static_cast<Eigen::Index>(n)) = Scalar(1);
  }
  auto picked = nn::sum(nn::cwise_product(nn::log_softmax(logits), Var<Scalar>::constant(std::move(onehot))));
  return picked * (Scalar(-1) / Scalar(labels.size()));
}

inline void require_regression(const ConditionSpace& space) {
  if (space.loss_kind != LossKind::kRegression) {
    throw std::invalid_argument("regression loss requested for " + to_string(space.kind) +
                                "; use the classification loss");
  }
}

inline void require_classification(const ConditionSpace& space) {
  if (space.loss_kind != LossKind::kClassification) {
    throw std::invalid_argument("classification loss requested for continuous space " + to_string(space.kind));
  }
}

template <typename Scalar, typename Critic>
Var<Scalar> regression_loss_real(const ConditionSpace& space, const Critic& critic, const FeatureMap<Scalar>& x,
                                 const Var<Scalar>& targets) {
  require_regression(space);
  return regression_loss(critic(x).condition, targets);
}

template <typename Scalar, typename Critic, typename Gen>
Var<Scalar> regression_loss_fake(const ConditionSpace& space, const Critic& critic, const Gen& generator,
                                 const FeatureMap<Scalar>& x, const Var<Scalar>& targets) {
  require_regression(space);
  return regression_loss(critic(generator(x, targets)).condition, targets);
}

template <typename Scalar, typename Critic>
Var<Scalar> classification_loss_real(const ConditionSpace& space, const Critic& critic,
                                     const FeatureMap<Scalar>& x, const std::vector<int>& labels) {
  require_classification(space);
  return cross_entropy(critic(x).condition, labels);
}

template <typename Scalar>
Var<Scalar> one_hot(const std::vector<int>& labels, int classes) {
  Mat<Scalar> out = Mat<Scalar>::Zero(classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t n = 0; n < labels.size(); ++n) out(labels[n], static_cast<Eigen::Index>(n)) = Scalar(1);
  return Var<Scalar>::constant(std::move(out));
}

template <typename Scalar, typename Critic, typename Gen>
Var<Scalar> classification_loss_fake(const ConditionSpace& space, const Critic& critic, const Gen& generator,
                                     const FeatureMap<Scalar>& x, const std::vector<int>& labels) {
  require_classification(space);
  return cross_entropy(critic(generator(x, one_hot<Scalar>(labels, space.dim))).condition, labels);
}

/// mean |x - G(G(x, target), source)| over batch, pixels and channels.
template <typename Scalar, typename Gen>
Var<Scalar> reconstruction_loss(const Gen& generator, const FeatureMap<Scalar>& x, const Var<Scalar>& source,
                                const Var<Scalar>& target) {
  auto round_trip = generator(generator(x, target), source);
  detail::require_same_shape(x, round_trip);
  return nn::mean(nn::abs(x.data - round_trip.data));
}

template <typename Scalar>
struct TotalLosses {
  Var<Scalar> discriminator;
  Var<Scalar> generator;
};

/// L_D = d_adv + l_gp gp + l_reg reg_real;  L_G = g_adv + l_reg reg_fake + l_rec rec.
template <typename Scalar>
TotalLosses<Scalar> total_losses(const Var<Scalar>& d_adv, const Var<Scalar>& gp, const Var<Scalar>& reg_real,
                                 const Var<Scalar>& g_adv, const Var<Scalar>& reg_fake, const Var<Scalar>& rec,
                                 const LossWeights& w) {
  return {d_adv + gp * static_cast<Scalar>(w.lambda_gp) + reg_real * static_cast<Scalar>(w.lambda_reg),
          g_adv + reg_fake * static_cast<Scalar>(w.lambda_reg) + rec * static_cast<Scalar>(w.lambda_rec)};
}

}  // namespace moodgan::gan
