#pragma once

// Emotion classifier with a 3-unit tanh bottleneck, and the separate
// valence/arousal estimator.

#include "moodgan/corpus.hpp"
#include "moodgan/nn/convert.hpp"
#include "moodgan/nn/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace moodgan::repr {

using nn::FeatureMap;
using nn::Mat;
using nn::Var;

inline constexpr int kMoodDim = 3;

struct BackboneSpec {
  int base_channels = 16;
  int max_channels = 64;
  int stages = 4;
  /// 0 selects plain stride-2 conv blocks with a flattened output; > 0 builds
  /// residual stages ending in global average pooling.
  int blocks_per_stage = 0;
  int stem_kernel = 3;

  bool residual() const { return blocks_per_stage > 0; }

  static BackboneSpec desk() { return {}; }
  /// 18-layer residual layout for 256x256 inputs.
  static BackboneSpec full() { return {64, 512, 4, 2, 7}; }
  /// Few-thousand-parameter network for gradient checks.
  static BackboneSpec tiny() { return {4, 8, 2, 0, 3}; }
};

template <typename Scalar>
class Backbone {
 public:
  Backbone(nn::ParameterSet<Scalar>& params, int image_size, BackboneSpec spec, Rng& rng)
      : image_size_(image_size), spec_(spec) {
    if (image_size <= 0) throw std::invalid_argument("backbone: image size must be positive");
    int ch = 3, size = image_size;
    auto width = [&](int stage) { return std::min(spec.max_channels, spec.base_channels << stage); };
    if (!spec.residual()) {
      for (int i = 0; i < spec.stages; ++i) {
        if (size < 2) throw std::invalid_argument("backbone: image too small for the stage count");
        convs_.emplace_back(params, "conv" + std::to_string(i), nn::ConvShape{ch, width(i), 3, 2, 1}, rng);
        ch = width(i);
        size = (size + 1) / 2;
      }
      features_ = ch * size * size;
      return;
    }
    const int stem = spec.stem_kernel;
    convs_.emplace_back(params, "stem", nn::ConvShape{3, width(0), stem, 2, stem / 2}, rng);
    ch = width(0);
    for (int s = 0; s < spec.stages; ++s) {
      for (int b = 0; b < spec.blocks_per_stage; ++b) {
        const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        Block block;
        block.first = nn::Conv2d<Scalar>(params, name + ".a", nn::ConvShape{ch, width(s), 3, stride, 1}, rng);
        block.second = nn::Conv2d<Scalar>(params, name + ".b", nn::ConvShape{width(s), width(s), 3, 1, 1}, rng);
        if (stride != 1 || ch != width(s)) {
          block.projection = nn::Conv2d<Scalar>(params, name + ".proj", nn::ConvShape{ch, width(s), 1, stride, 0}, rng);
        }
        blocks_.push_back(std::move(block));
        ch = width(s);
      }
    }
    features_ = ch;
  }

  /// [-1, 1] images -> [features, N]
  Var<Scalar> operator()(const FeatureMap<Scalar>& images) const {
    if (images.channels() != 3 || images.height != image_size_ || images.width != image_size_) {
      throw std::invalid_argument("backbone: expected 3x" + std::to_string(image_size_) + "x" +
                                  std::to_string(image_size_) + " images");
    }
    auto act = [](const FeatureMap<Scalar>& x) {
      return nn::map_data(x, [](auto v) { return nn::leaky_relu(v, Scalar(0.01)); });
    };
    auto h = images;
    if (!spec_.residual()) {
      for (const auto& conv : convs_) h = act(conv(h));
      return nn::flatten(h);
    }
    h = act(convs_.front()(h));
    for (const auto& block : blocks_) {
      auto inner = block.second(act(block.first(h)));
      auto shortcut = block.projection ? (*block.projection)(h) : h;
      h = act(FeatureMap<Scalar>{inner.data + shortcut.data, inner.batch, inner.height, inner.width});
    }
    return nn::global_average(h);
  }

  int features() const { return features_; }
  int image_size() const { return image_size_; }
  const BackboneSpec& spec() const { return spec_; }

 private:
  struct Block {
    nn::Conv2d<Scalar> first;
    nn::Conv2d<Scalar> second;
    std::optional<nn::Conv2d<Scalar>> projection;
  };

  int image_size_;
  BackboneSpec spec_;
  int features_ = 0;
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::vector<Block> blocks_;
};

/// Backbone -> dense(3) -> tanh -> dense(7).
template <typename Scalar>
class ReprModel {
 public:
  ReprModel(int image_size, BackboneSpec spec, std::uint64_t seed) : ReprModel(image_size, spec, Rng(seed)) {}

  ReprModel(const ReprModel&) = delete;
  ReprModel& operator=(const ReprModel&) = delete;
  ReprModel(ReprModel&&) = default;
  ReprModel& operator=(ReprModel&&) = default;

  /// Post-tanh bottleneck activations, [3, N].
  Var<Scalar> embed(const FeatureMap<Scalar>& images) const { return nn::tanh(bottleneck_(backbone_(images))); }

  /// Class logits from the bottleneck, [7, N].
  Var<Scalar> logits(const FeatureMap<Scalar>& images) const { return head_(embed(images)); }

  /// Head applied to given mood vectors [3, N].
  Var<Scalar> head(const Var<Scalar>& mood) const { return head_(mood); }

  int image_size() const { return backbone_.image_size(); }
  const BackboneSpec& spec() const { return backbone_.spec(); }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }
  const nn::Dense<Scalar>& bottleneck_layer() const { return bottleneck_; }
  const nn::Dense<Scalar>& head_layer() const { return head_; }

 private:
  ReprModel(int image_size, BackboneSpec spec, Rng rng)
      : backbone_(params_, image_size, spec, rng),
        bottleneck_(params_, "bottleneck", backbone_.features(), kMoodDim, rng),
        head_(params_, "head", kMoodDim, kNumClasses, rng) {
    if (head_.in_features() != kMoodDim) throw std::logic_error("classification head must read the 3-unit bottleneck");
  }

  nn::ParameterSet<Scalar> params_;
  Backbone<Scalar> backbone_;
  nn::Dense<Scalar> bottleneck_;
  nn::Dense<Scalar> head_;
};

/// Backbone -> dense(2): (valence, arousal), unbounded.
template <typename Scalar>
class AvEstimator {
 public:
  AvEstimator(int image_size, BackboneSpec spec, std::uint64_t seed) : AvEstimator(image_size, spec, Rng(seed)) {}

  AvEstimator(const AvEstimator&) = delete;
  AvEstimator& operator=(const AvEstimator&) = delete;
  AvEstimator(AvEstimator&&) = default;
  AvEstimator& operator=(AvEstimator&&) = default;

  Var<Scalar> operator()(const FeatureMap<Scalar>& images) const { return head_(backbone_(images)); }

  int image_size() const { return backbone_.image_size(); }
  const BackboneSpec& spec() const { return backbone_.spec(); }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }
  const nn::Dense<Scalar>& head_layer() const { return head_; }

 private:
  AvEstimator(int image_size, BackboneSpec spec, Rng rng)
      : backbone_(params_, image_size, spec, rng), head_(params_, "av", backbone_.features(), 2, rng) {}

  nn::ParameterSet<Scalar> params_;
  Backbone<Scalar> backbone_;
  nn::Dense<Scalar> head_;
};

// ---------------------------------------------------------------------------
// Batch inference on [0,1] images, without recording a graph.

namespace detail {
inline void require_size(const ImageBatch& batch, int size) {
  if (batch.height != size || batch.width != size) {
    throw std::invalid_argument("expected " + std::to_string(size) + "x" + std::to_string(size) + " images, got " +
                                std::to_string(batch.height) + "x" + std::to_string(batch.width));
  }
}
}  // namespace detail

template <typename Scalar>
Mat<Scalar> embed(const ReprModel<Scalar>& model, const ImageBatch& images) {
  detail::require_size(images, model.image_size());
  nn::NoGradGuard no_grad;
  return model.embed(nn::to_feature_map<Scalar>(images)).value();
}

template <typename Scalar>
Mat<Scalar> classify(const ReprModel<Scalar>& model, const ImageBatch& images) {
  detail::require_size(images, model.image_size());
  nn::NoGradGuard no_grad;
  return model.logits(nn::to_feature_map<Scalar>(images)).value();
}

template <typename Scalar>
Mat<Scalar> estimate_av(const AvEstimator<Scalar>& model, const ImageBatch& images) {
  detail::require_size(images, model.image_size());
  nn::NoGradGuard no_grad;
  return model(nn::to_feature_map<Scalar>(images)).value();
}

/// Column-wise argmax; ties resolve to the lowest index.
template <typename Derived>
std::vector<int> argmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < logits.rows(); ++r) {
      if (logits(r, c) > logits(best, c)) best = r;
    }
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/metadata.json + <dir>/weights.bin.

enum class ModelKind { kRepr, kAv };

void write_metadata(const std::string& dir, ModelKind kind, int image_size, const BackboneSpec& spec);

struct ModelMetadata {
  ModelKind kind;
  int image_size;
  BackboneSpec spec;
};

/// Throws std::runtime_error when the directory or its metadata is missing or
/// incompatible.
ModelMetadata read_metadata(const std::string& dir);

void save_checkpoint(const ReprModel<float>& model, const std::string& dir);
void save_checkpoint(const AvEstimator<float>& model, const std::string& dir);
ReprModel<float> load_repr(const std::string& dir);
AvEstimator<float> load_av(const std::string& dir);

// ---------------------------------------------------------------------------
// Annotation.

struct AnnotationResult {
  int rows = 0;        // rows written
  int unreadable = 0;  // rows whose image failed to load; mood set to null
};

/// Copies `manifest_in` to `manifest_out`, replacing each row's "mood" with
/// the embedding of its clean (un-augmented) preprocessed image.
AnnotationResult annotate_corpus(const ReprModel<float>& model, const std::string& manifest_in,
                                 const std::string& manifest_out,
                                 const Preprocessor& preprocess = center_crop_resize);

}  // namespace moodgan::repr
