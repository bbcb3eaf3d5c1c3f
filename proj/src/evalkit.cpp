#include "moodgan/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace moodgan::eval {

using json = nlohmann::ordered_json;

GeneratorFn generator_fn(const gan::Generator<float>& generator) {
  return [&generator](const ImageBatch& images, const Eigen::MatrixXf& conditions) {
    nn::NoGradGuard no_grad;
    nn::FeatureMap<float> x{nn::Var<float>::constant(images.pixels), images.batch, images.height, images.width};
    auto out = generator(x, nn::Var<float>::constant(conditions));
    ImageBatch result = images;
    result.pixels = out.data.value();
    return result;
  };
}

AvFn estimator_fn(const repr::AvEstimator<float>& estimator) {
  return {estimator.image_size(), [&estimator](const ImageBatch& images) {
            nn::NoGradGuard no_grad;
            nn::FeatureMap<float> x{nn::Var<float>::constant(images.pixels), images.batch, images.height,
                                    images.width};
            return Eigen::MatrixXf(estimator(x).value());
          }};
}

GeneratorFn identity_generator() {
  return [](const ImageBatch& images, const Eigen::MatrixXf&) { return images; };
}

double pooled_rmse(double red, double green, double blue) {
  return std::sqrt((red * red + green * green + blue * blue) / 3.0);
}

namespace {

/// Order-independent sum: values are added in sorted order.
double stable_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

void require_faces(const std::vector<const Image*>& faces) {
  if (faces.empty()) throw std::invalid_argument("empty test set");
}

ImageBatch signed_batch(const std::vector<const Image*>& faces, std::size_t begin, std::size_t end) {
  ImageBatch batch = stack(std::vector<const Image*>(faces.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     faces.begin() + static_cast<std::ptrdiff_t>(end)));
  batch.pixels = to_signed(batch.pixels);
  return batch;
}

Eigen::MatrixXf replicate(const Eigen::VectorXf& condition, int count) {
  return condition.replicate(1, count);
}

void require_shape(const ImageBatch& in, const ImageBatch& out) {
  if (in.batch != out.batch || in.height != out.height || in.width != out.width || in.pixels.rows() != out.pixels.rows() ||
      in.pixels.cols() != out.pixels.cols()) {
    throw std::invalid_argument("generator changed the batch shape");
  }
}

/// Mean color of each image of a [-1, 1] batch on the 0-255 scale, [3, N].
Eigen::Matrix3Xd mean_colors(const ImageBatch& batch) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(batch.height) * batch.width;
  Eigen::Matrix3Xd out(3, batch.batch);
  for (int n = 0; n < batch.batch; ++n) {
    const Eigen::Vector3d mean = batch.pixels.middleCols(n * pixels, pixels).cast<double>().rowwise().mean();
    out.col(n) = (mean.array() + 1.0) * 0.5 * 255.0;
  }
  return out;
}

}  // namespace

ColorRmse mean_color_rmse(const GeneratorFn& generator, const std::vector<Eigen::VectorXf>& condition_points,
                          const std::vector<const Image*>& faces, int batch_size) {
  require_faces(faces);
  if (condition_points.empty()) throw std::invalid_argument("no condition points");
  std::array<std::vector<double>, 3> squared;
  for (std::size_t begin = 0; begin < faces.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(faces.size(), begin + static_cast<std::size_t>(batch_size));
    const ImageBatch batch = signed_batch(faces, begin, end);
    const Eigen::Matrix3Xd original = mean_colors(batch);
    Eigen::Matrix3Xd edited = Eigen::Matrix3Xd::Zero(3, batch.batch);
    for (const auto& point : condition_points) {
      const ImageBatch out = generator(batch, replicate(point, batch.batch));
      require_shape(batch, out);
      edited += mean_colors(out);
    }
    edited /= static_cast<double>(condition_points.size());
    for (int n = 0; n < batch.batch; ++n) {
      for (int c = 0; c < 3; ++c) squared[static_cast<std::size_t>(c)].push_back(std::pow(edited(c, n) - original(c, n), 2));
    }
  }
  const double count = static_cast<double>(faces.size());
  ColorRmse out;
  out.red = std::sqrt(stable_sum(squared[0]) / count);
  out.green = std::sqrt(stable_sum(squared[1]) / count);
  out.blue = std::sqrt(stable_sum(squared[2]) / count);
  out.all = pooled_rmse(out.red, out.green, out.blue);
  return out;
}

double eval_reconstruction(const GeneratorFn& generator, const std::vector<const Image*>& faces,
                           const Eigen::MatrixXf& conditions, std::uint64_t seed, int batch_size) {
  require_faces(faces);
  if (conditions.cols() != static_cast<Eigen::Index>(faces.size())) {
    throw std::invalid_argument("one condition per face required");
  }
  const auto order = Rng(seed).permutation(static_cast<int>(faces.size()));
  std::vector<double> per_face;
  per_face.reserve(faces.size());
  for (std::size_t begin = 0; begin < faces.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(faces.size(), begin + static_cast<std::size_t>(batch_size));
    const ImageBatch batch = signed_batch(faces, begin, end);
    Eigen::MatrixXf source(conditions.rows(), batch.batch), target(conditions.rows(), batch.batch);
    for (int n = 0; n < batch.batch; ++n) {
      source.col(n) = conditions.col(static_cast<Eigen::Index>(begin) + n);
      target.col(n) = conditions.col(order[begin + static_cast<std::size_t>(n)]);
    }
    const ImageBatch edited = generator(batch, target);
    require_shape(batch, edited);
    const ImageBatch back = generator(edited, source);
    require_shape(batch, back);
    const Eigen::Index pixels = static_cast<Eigen::Index>(batch.height) * batch.width;
    for (int n = 0; n < batch.batch; ++n) {
      const auto diff = (batch.pixels.middleCols(n * pixels, pixels) - back.pixels.middleCols(n * pixels, pixels))
                            .cast<double>()
                            .cwiseAbs();
      per_face.push_back(diff.mean());
    }
  }
  return stable_sum(per_face) / static_cast<double>(faces.size());
}

MetricsReport make_report(const ColorRmse& color, double l_rec, int n_faces) {
  return {color.red, color.green, color.blue, color.all, l_rec, n_faces};
}

TransitionCurve transition_curve(const GeneratorFn& generator, const AvFn& estimator,
                                 const geometry::Traversal& traversal, const std::vector<const Image*>& faces,
                                 int av_index, int batch_size) {
  require_faces(faces);
  if (av_index != 0 && av_index != 1) throw std::invalid_argument("av_index must be 0 (valence) or 1 (arousal)");
  if (faces.front()->height != estimator.image_size || faces.front()->width != estimator.image_size) {
    throw std::invalid_argument("estimator expects " + std::to_string(estimator.image_size) + "px images, faces are " +
                                std::to_string(faces.front()->height) + "px");
  }
  TransitionCurve curve;
  curve.axis_name = traversal.axis_name;
  curve.targeted = traversal.targets;
  for (const auto& point : traversal.points) {
    std::vector<double> values;
    values.reserve(faces.size());
    for (std::size_t begin = 0; begin < faces.size(); begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(faces.size(), begin + static_cast<std::size_t>(batch_size));
      const ImageBatch batch = signed_batch(faces, begin, end);
      const ImageBatch edited = generator(batch, replicate(point.cast<float>(), batch.batch));
      require_shape(batch, edited);
      const Eigen::MatrixXf av = estimator.estimate(edited);
      for (int n = 0; n < batch.batch; ++n) values.push_back(static_cast<double>(av(av_index, n)));
    }
    const double mean = stable_sum(values) / static_cast<double>(values.size());
    std::vector<double> deviations;
    for (double v : values) deviations.push_back((v - mean) * (v - mean));
    curve.estimated.push_back(mean);
    curve.per_point_std.push_back(std::sqrt(stable_sum(deviations) / static_cast<double>(values.size())));
  }
  return curve;
}

SmoothnessStats smoothness_stats(const TransitionCurve& curve) {
  const std::size_t n = curve.estimated.size();
  if (n < 3) throw std::invalid_argument("smoothness statistics need at least 3 points");
  if (curve.targeted.size() != n) throw std::invalid_argument("curve length mismatch");
  SmoothnessStats s;
  double squared = 0.0;
  for (std::size_t i = 0; i < n; ++i) squared += std::pow(curve.estimated[i] - curve.targeted[i], 2);
  s.identity_rmse = std::sqrt(squared / static_cast<double>(n));
  int rising = 0;
  for (std::size_t i = 1; i < n; ++i) {
    s.max_step = std::max(s.max_step, std::abs(curve.estimated[i] - curve.estimated[i - 1]));
    rising += curve.estimated[i] >= curve.estimated[i - 1];
  }
  s.monotone_fraction = static_cast<double>(rising) / static_cast<double>(n - 1);
  return s;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string report_json(const MetricsReport& r) {
  json j;
  j["rmse_red"] = r.rmse_red;
  j["rmse_green"] = r.rmse_green;
  j["rmse_blue"] = r.rmse_blue;
  j["rmse_all"] = r.rmse_all;
  j["l_rec"] = r.l_rec;
  j["n_faces"] = r.n_faces;
  return j.dump(2) + "\n";
}

std::string curve_csv(const TransitionCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "targeted,estimated,std\n";
  for (std::size_t i = 0; i < curve.targeted.size(); ++i) {
    out << curve.targeted[i] << ',' << curve.estimated[i] << ',' << curve.per_point_std[i] << '\n';
  }
  return out.str();
}

std::string curve_json(const TransitionCurve& curve, const SmoothnessStats& stats) {
  json j;
  j["axis"] = curve.axis_name;
  j["targeted"] = curve.targeted;
  j["estimated"] = curve.estimated;
  j["per_point_std"] = curve.per_point_std;
  j["identity_rmse"] = stats.identity_rmse;
  j["max_step"] = stats.max_step;
  j["monotone_fraction"] = stats.monotone_fraction;
  j["spearman"] = spearman(curve.targeted, curve.estimated);
  return j.dump(2) + "\n";
}

Image tile_row(const std::vector<Image>& tiles) {
  if (tiles.empty()) throw std::invalid_argument("no tiles");
  const int h = tiles.front().height, w = tiles.front().width;
  Image out(h, w * static_cast<int>(tiles.size()));
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].height != h || tiles[t].width != w) throw std::invalid_argument("tile size mismatch");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.pixels.col(y * out.width + static_cast<int>(t) * w + x) = tiles[t].pixels.col(y * w + x);
    }
  }
  return out;
}

std::vector<Image> traversal_strip(const GeneratorFn& generator, const Image& face,
                                   const std::vector<Eigen::VectorXd>& points) {
  std::vector<Image> out{face};
  const ImageBatch batch = signed_batch({&face}, 0, 1);
  for (const auto& point : points) {
    ImageBatch edited = generator(batch, point.cast<float>());
    require_shape(batch, edited);
    edited.pixels = to_unit(edited.pixels).cwiseMax(0.0f).cwiseMin(1.0f);
    out.push_back(unstack(edited, 0));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace moodgan::eval
