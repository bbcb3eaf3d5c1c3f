#pragma once

// Bridges between [0,1] image batches and the networks' [-1,1] feature maps.

#include "moodgan/image.hpp"
#include "moodgan/nn/layers.hpp"

namespace moodgan::nn {

template <typename Scalar>
FeatureMap<Scalar> to_feature_map(const ImageBatch& batch) {
  Mat<Scalar> data = to_signed(batch.pixels).cast<Scalar>();
  return {Var<Scalar>::constant(std::move(data)), batch.batch, batch.height, batch.width};
}

/// Inverse of to_feature_map (values are not clipped).
template <typename Scalar>
ImageBatch to_image_batch(const FeatureMap<Scalar>& map) {
  ImageBatch out;
  out.pixels = to_unit(map.data.value().template cast<float>());
  out.batch = map.batch;
  out.height = map.height;
  out.width = map.width;
  return out;
}

}  // namespace moodgan::nn
