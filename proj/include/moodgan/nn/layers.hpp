#pragma once

// Parameter containers, convolution/dense layers and Adam on top of the
// autograd engine. Feature maps carry their spatial shape next to a
// [channels, batch * height * width] matrix.

#include "moodgan/nn/autograd.hpp"
#include "moodgan/rng.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace moodgan::nn {

template <typename Scalar>
struct FeatureMap {
  Var<Scalar> data;
  int batch = 0;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }
};

// ---------------------------------------------------------------------------
// Cached index maps for the shape-changing linear operations.

namespace index_maps {

namespace detail {
using Key = std::tuple<int, int, int, int, int, int, int, int>;

inline IndexMap cached(const Key& key, const std::function<std::vector<std::int32_t>()>& build) {
  static std::mutex mutex;
  static std::map<Key, IndexMap> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto map = std::make_shared<const std::vector<std::int32_t>>(build());
  cache.emplace(key, map);
  return map;
}
}  // namespace detail

/// Patch extraction: [C, N*H*W] -> [k*k*C, N*Ho*Wo], rows ordered (ky, kx, c).
inline IndexMap im2col(int channels, int batch, int height, int width, int kernel, int stride,
                       int pad) {
  return detail::cached({0, channels, batch, height, width, kernel, stride, pad}, [=] {
    const int out_h = (height + 2 * pad - kernel) / stride + 1;
    const int out_w = (width + 2 * pad - kernel) / stride + 1;
    const std::int64_t rows = static_cast<std::int64_t>(channels) * kernel * kernel;
    std::vector<std::int32_t> index(rows * batch * out_h * out_w);
    std::int64_t i = 0;
    for (int n = 0; n < batch; ++n) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - pad + kx;
              const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
              const std::int64_t base = static_cast<std::int64_t>(channels) *
                                        ((static_cast<std::int64_t>(n) * height + iy) * width + ix);
              for (int c = 0; c < channels; ++c) {
                index[i++] = inside ? static_cast<std::int32_t>(base + c) : -1;
              }
            }
          }
        }
      }
    }
    return index;
  });
}

/// Nearest-neighbour x2 upsampling.
inline IndexMap upsample2(int channels, int batch, int height, int width) {
  return detail::cached({1, channels, batch, height, width, 0, 0, 0}, [=] {
    const int oh = 2 * height, ow = 2 * width;
    std::vector<std::int32_t> index(static_cast<std::size_t>(channels) * batch * oh * ow);
    std::size_t i = 0;
    for (int n = 0; n < batch; ++n)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          for (int c = 0; c < channels; ++c)
            index[i++] = c + channels * ((n * height + y / 2) * width + x / 2);
    return index;
  });
}

/// [C, N*P] -> [C*P, N], row = c * P + pixel.
inline IndexMap flatten(int channels, int batch, int pixels) {
  return detail::cached({2, channels, batch, pixels, 0, 0, 0, 0}, [=] {
    const std::int64_t rows = static_cast<std::int64_t>(channels) * pixels;
    std::vector<std::int32_t> index(rows * batch);
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c)
        for (int s = 0; s < pixels; ++s)
          index[(c * pixels + s) + rows * n] = c + channels * (n * pixels + s);
    return index;
  });
}

/// [C, N] -> [C, N*P]: one value per (channel, sample) repeated over pixels.
/// Used with scatter_add it sums each (channel, sample) segment instead.
inline IndexMap spread(int channels, int batch, int pixels) {
  return detail::cached({3, channels, batch, pixels, 0, 0, 0, 0}, [=] {
    std::vector<std::int32_t> index(static_cast<std::size_t>(channels) * batch * pixels);
    std::size_t i = 0;
    for (int n = 0; n < batch; ++n)
      for (int s = 0; s < pixels; ++s)
        for (int c = 0; c < channels; ++c) index[i++] = c + channels * n;
    return index;
  });
}

}  // namespace index_maps

// ---------------------------------------------------------------------------
// Shape-aware free functions.

template <typename Scalar>
FeatureMap<Scalar> upsample2(const FeatureMap<Scalar>& x) {
  auto map = index_maps::upsample2(x.channels(), x.batch, x.height, x.width);
  return {gather(x.data, map, x.channels(), static_cast<Eigen::Index>(x.batch) * 4 * x.pixels()),
          x.batch, 2 * x.height, 2 * x.width};
}

/// [C, N*H*W] -> [C*H*W, N]
template <typename Scalar>
Var<Scalar> flatten(const FeatureMap<Scalar>& x) {
  auto map = index_maps::flatten(x.channels(), x.batch, x.pixels());
  return gather(x.data, map, static_cast<Eigen::Index>(x.channels()) * x.pixels(), x.batch);
}

/// [C, N] -> [C, N*H*W]
template <typename Scalar>
FeatureMap<Scalar> spread(const Var<Scalar>& values, int height, int width) {
  const int channels = static_cast<int>(values.rows());
  const int batch = static_cast<int>(values.cols());
  auto map = index_maps::spread(channels, batch, height * width);
  return {gather(values, map, channels, static_cast<Eigen::Index>(batch) * height * width), batch,
          height, width};
}

/// Mean over pixels: [C, N*H*W] -> [C, N]
template <typename Scalar>
Var<Scalar> global_average(const FeatureMap<Scalar>& x) {
  auto map = index_maps::spread(x.channels(), x.batch, x.pixels());
  return scatter_add(x.data, map, x.channels(), x.batch) * (Scalar(1) / Scalar(x.pixels()));
}

template <typename Scalar>
FeatureMap<Scalar> concat_channels(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  return {concat_rows(a.data, b.data), a.batch, a.height, a.width};
}

template <typename Scalar, typename Fn>
FeatureMap<Scalar> map_data(const FeatureMap<Scalar>& x, Fn&& fn) {
  return {fn(x.data), x.batch, x.height, x.width};
}

// ---------------------------------------------------------------------------
// Parameters.

template <typename Scalar>
class ParameterSet {
 public:
  Var<Scalar> add(const std::string& name, Mat<Scalar> value) {
    for (const auto& [existing, _] : entries_) {
      if (existing == name) throw std::invalid_argument("duplicate parameter " + name);
    }
    auto var = Var<Scalar>::leaf(std::move(value));
    entries_.emplace_back(name, var);
    return var;
  }

  const std::vector<std::pair<std::string, Var<Scalar>>>& entries() const { return entries_; }

  std::vector<Var<Scalar>> vars() const {
    std::vector<Var<Scalar>> out;
    for (const auto& [_, v] : entries_) out.push_back(v);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += static_cast<std::size_t>(v.size());
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var<Scalar>>> entries_;
};

template <typename Scalar>
Mat<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

struct ConvShape {
  int in_channels;
  int out_channels;
  int kernel;
  int stride = 1;
  int pad = 0;
};

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<Scalar>& params, const std::string& name, ConvShape shape, Rng& rng)
      : shape_(shape) {
    const int fan_in = shape.in_channels * shape.kernel * shape.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    weight_ = params.add(name + ".weight",
                         uniform_matrix<Scalar>(shape.out_channels, fan_in, bound, rng));
    bias_ = params.add(name + ".bias", uniform_matrix<Scalar>(shape.out_channels, 1, bound, rng));
  }

  FeatureMap<Scalar> operator()(const FeatureMap<Scalar>& x) const {
    if (x.channels() != shape_.in_channels) throw std::invalid_argument("conv: channel mismatch");
    const int k = shape_.kernel, s = shape_.stride, p = shape_.pad;
    const int out_h = (x.height + 2 * p - k) / s + 1;
    const int out_w = (x.width + 2 * p - k) / s + 1;
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("conv: input too small");
    auto map = index_maps::im2col(x.channels(), x.batch, x.height, x.width, k, s, p);
    auto cols = gather(x.data, map, static_cast<Eigen::Index>(x.channels()) * k * k,
                       static_cast<Eigen::Index>(x.batch) * out_h * out_w);
    return {add_bias(matmul(weight_, cols), bias_), x.batch, out_h, out_w};
  }

  const ConvShape& shape() const { return shape_; }
  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }

 private:
  ConvShape shape_{};
  Var<Scalar> weight_;
  Var<Scalar> bias_;
};

/// Adjoint of a strided convolution; upsamples by `stride`. Weight layout
/// [in_channels, k*k*out_channels].
template <typename Scalar>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<Scalar>& params, const std::string& name, ConvShape shape, Rng& rng)
      : shape_(shape) {
    const int fan_in = shape.in_channels * shape.kernel * shape.kernel / (shape.stride * shape.stride);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    weight_ = params.add(name + ".weight",
                         uniform_matrix<Scalar>(shape.in_channels,
                                                shape.out_channels * shape.kernel * shape.kernel, bound, rng));
    bias_ = params.add(name + ".bias", uniform_matrix<Scalar>(shape.out_channels, 1, bound, rng));
  }

  FeatureMap<Scalar> operator()(const FeatureMap<Scalar>& x) const {
    if (x.channels() != shape_.in_channels) throw std::invalid_argument("deconv: channel mismatch");
    const int k = shape_.kernel, s = shape_.stride, p = shape_.pad;
    const int out_h = (x.height - 1) * s - 2 * p + k;
    const int out_w = (x.width - 1) * s - 2 * p + k;
    auto map = index_maps::im2col(shape_.out_channels, x.batch, out_h, out_w, k, s, p);
    auto cols = matmul(weight_, x.data, true, false);
    auto out = scatter_add(cols, map, shape_.out_channels, static_cast<Eigen::Index>(x.batch) * out_h * out_w);
    return {add_bias(out, bias_), x.batch, out_h, out_w};
  }

  const ConvShape& shape() const { return shape_; }

 private:
  ConvShape shape_{};
  Var<Scalar> weight_;
  Var<Scalar> bias_;
};

template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(ParameterSet<Scalar>& params, const std::string& name, int in, int out, Rng& rng)
      : in_(in), out_(out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = params.add(name + ".weight", uniform_matrix<Scalar>(out, in, bound, rng));
    bias_ = params.add(name + ".bias", uniform_matrix<Scalar>(out, 1, bound, rng));
  }

  /// [in, N] -> [out, N]
  Var<Scalar> operator()(const Var<Scalar>& x) const {
    if (x.rows() != in_) throw std::invalid_argument("dense: feature mismatch");
    return add_bias(matmul(weight_, x), bias_);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Var<Scalar> weight_;
  Var<Scalar> bias_;
};

/// Per-sample, per-channel normalization with a learned affine map.
template <typename Scalar>
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(ParameterSet<Scalar>& params, const std::string& name, int channels)
      : gamma_(params.add(name + ".gamma", Mat<Scalar>::Ones(channels, 1))),
        beta_(params.add(name + ".beta", Mat<Scalar>::Zero(channels, 1))) {}

  FeatureMap<Scalar> operator()(const FeatureMap<Scalar>& x) const {
    const int c = x.channels();
    auto map = index_maps::spread(c, x.batch, x.pixels());
    const Eigen::Index cols = x.data.cols();
    const Scalar inv_pixels = Scalar(1) / Scalar(x.pixels());
    auto centered = x.data - gather(scatter_add(x.data, map, c, x.batch) * inv_pixels, map, c, cols);
    auto variance = scatter_add(square(centered), map, c, x.batch) * inv_pixels;
    auto inv_std = reciprocal(sqrt(add_scalar(variance, Scalar(1e-5))));
    auto normalized = cwise_product(centered, gather(inv_std, map, c, cols));
    return {add_bias(cwise_product(normalized, broadcast_cols(gamma_, cols)), beta_), x.batch,
            x.height, x.width};
  }

 private:
  Var<Scalar> gamma_;
  Var<Scalar> beta_;
};

// ---------------------------------------------------------------------------
// Optimizer.

template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Var<Scalar>> params, double beta1, double beta2, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
      v_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
    }
  }

  void step(const std::vector<Var<Scalar>>& grads, double lr) {
    if (grads.size() != params_.size()) throw std::invalid_argument("adam: gradient count");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Scalar step = static_cast<Scalar>(lr / c1);
    const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
    const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const Scalar eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = grads[i].value();
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      auto& w = params_[i].mutable_value();
      w.array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Var<Scalar>> params_;
  std::vector<Mat<Scalar>> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Weight blobs: "MGW1", u32 count, then per entry
// u32 name length, name, u64 rows, u64 cols, u8 scalar bytes, raw data.

template <typename Scalar>
void save_parameters(const ParameterSet<Scalar>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("MGW1", 4);
  const auto count = static_cast<std::uint32_t>(params.entries().size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, var] : params.entries()) {
    const auto len = static_cast<std::uint32_t>(name.size());
    const auto rows = static_cast<std::uint64_t>(var.rows());
    const auto cols = static_cast<std::uint64_t>(var.cols());
    const auto bytes = static_cast<std::uint8_t>(sizeof(Scalar));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(&bytes), sizeof(bytes));
    out.write(reinterpret_cast<const char*>(var.value().data()),
              static_cast<std::streamsize>(var.size() * sizeof(Scalar)));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

/// Loads values in place; names and shapes must match exactly. float and
/// double blobs are interchangeable.
template <typename Scalar>
void load_parameters(ParameterSet<Scalar>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MGW1") throw std::runtime_error("bad weight file " + path);
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != params.entries().size()) throw std::runtime_error("parameter count mismatch in " + path);
  for (const auto& [name, var_const] : params.entries()) {
    auto var = var_const;
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    std::uint64_t rows = 0, cols = 0;
    std::uint8_t bytes = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    in.read(reinterpret_cast<char*>(&bytes), sizeof(bytes));
    if (!in || stored != name || rows != static_cast<std::uint64_t>(var.rows()) ||
        cols != static_cast<std::uint64_t>(var.cols())) {
      throw std::runtime_error("parameter mismatch at " + name + " in " + path);
    }
    auto& dst = var.mutable_value();
    if (bytes == sizeof(float)) {
      Eigen::MatrixXf tmp(rows, cols);
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 4));
      dst = tmp.cast<Scalar>();
    } else if (bytes == sizeof(double)) {
      Eigen::MatrixXd tmp(rows, cols);
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 8));
      dst = tmp.cast<Scalar>();
    } else {
      throw std::runtime_error("unsupported scalar width in " + path);
    }
    if (!in) throw std::runtime_error("truncated weight file " + path);
  }
}

}  // namespace moodgan::nn
