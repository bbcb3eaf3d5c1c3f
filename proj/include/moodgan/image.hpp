#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace moodgan {

/// RGB image, channel-major pixels: pixels(c, y * width + x), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  Eigen::Matrix3Xf pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(Eigen::Matrix3Xf::Zero(3, h * w)) {}

  float& at(int c, int y, int x) { return pixels(c, y * width + x); }
  float at(int c, int y, int x) const { return pixels(c, y * width + x); }
};

/// A batch in network layout: [3, batch * height * width].
struct ImageBatch {
  Eigen::MatrixXf pixels;
  int batch = 0;
  int height = 0;
  int width = 0;
};

inline ImageBatch stack(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("stack: empty batch");
  ImageBatch out;
  out.batch = static_cast<int>(images.size());
  out.height = images.front()->height;
  out.width = images.front()->width;
  const Eigen::Index pixels = static_cast<Eigen::Index>(out.height) * out.width;
  out.pixels.resize(3, pixels * out.batch);
  for (int n = 0; n < out.batch; ++n) {
    if (images[n]->height != out.height || images[n]->width != out.width) {
      throw std::invalid_argument("stack: image size mismatch");
    }
    out.pixels.middleCols(n * pixels, pixels) = images[n]->pixels;
  }
  return out;
}

inline ImageBatch stack(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  return stack(ptrs);
}

inline Image unstack(const ImageBatch& batch, int n) {
  Image out(batch.height, batch.width);
  const Eigen::Index pixels = static_cast<Eigen::Index>(batch.height) * batch.width;
  out.pixels = batch.pixels.middleCols(n * pixels, pixels);
  return out;
}

/// [0, 1] -> [-1, 1]
inline Eigen::MatrixXf to_signed(const Eigen::MatrixXf& unit) {
  return (unit.array() * 2.0f - 1.0f).matrix();
}

/// [-1, 1] -> [0, 1]
inline Eigen::MatrixXf to_unit(const Eigen::MatrixXf& signed_pixels) {
  return ((signed_pixels.array() + 1.0f) * 0.5f).matrix();
}

}  // namespace moodgan
