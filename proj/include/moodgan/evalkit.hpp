#pragma once

// Evaluation of trained editors: mean-color preservation, round-trip
// reconstruction, targeted-vs-estimated transition curves and their
// smoothness, plus report writers and image grids.

#include "moodgan/geometry.hpp"
#include "moodgan/image.hpp"
#include "moodgan/reprnet.hpp"
#include "moodgan/gancore.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace moodgan::eval {

/// Edits a batch of [-1, 1] images toward conditions [dim, N]; returns a
/// [-1, 1] batch of the same shape.
using GeneratorFn = std::function<ImageBatch(const ImageBatch& images, const Eigen::MatrixXf& conditions)>;

/// Valence/arousal of a batch of [-1, 1] images as [2, N].
struct AvFn {
  int image_size = 0;
  std::function<Eigen::MatrixXf(const ImageBatch& images)> estimate;
};

GeneratorFn generator_fn(const gan::Generator<float>& generator);
AvFn estimator_fn(const repr::AvEstimator<float>& estimator);

/// Returns its input unchanged.
GeneratorFn identity_generator();

struct ColorRmse {
  double red = 0.0;
  double green = 0.0;
  double blue = 0.0;
  double all = 0.0;
};

/// sqrt((r^2 + g^2 + b^2) / 3)
double pooled_rmse(double red, double green, double blue);

/// Per face, the mean color of the original against the average of the mean
/// colors of its edits toward each condition point; RMSE over faces per
/// channel on the 0-255 scale.
ColorRmse mean_color_rmse(const GeneratorFn& generator, const std::vector<Eigen::VectorXf>& condition_points,
                          const std::vector<const Image*>& faces, int batch_size = 32);

/// Mean round-trip L1 in the [-1, 1] domain: each face is edited toward a
/// seeded permutation of the faces' own conditions and back.
double eval_reconstruction(const GeneratorFn& generator, const std::vector<const Image*>& faces,
                           const Eigen::MatrixXf& conditions, std::uint64_t seed, int batch_size = 32);

struct MetricsReport {
  double rmse_red = 0.0;
  double rmse_green = 0.0;
  double rmse_blue = 0.0;
  double rmse_all = 0.0;
  double l_rec = 0.0;
  int n_faces = 0;
};

MetricsReport make_report(const ColorRmse& color, double l_rec, int n_faces);

struct TransitionCurve {
  std::string axis_name;
  std::vector<double> targeted;
  std::vector<double> estimated;
  std::vector<double> per_point_std;
};

/// For each traversal point, edits every face and averages the estimator's
/// `av_index` component (0 valence, 1 arousal).
TransitionCurve transition_curve(const GeneratorFn& generator, const AvFn& estimator,
                                 const geometry::Traversal& traversal, const std::vector<const Image*>& faces,
                                 int av_index, int batch_size = 32);

struct SmoothnessStats {
  double identity_rmse = 0.0;
  double max_step = 0.0;
  double monotone_fraction = 0.0;
};

/// Throws std::invalid_argument for curves shorter than 3 points.
SmoothnessStats smoothness_stats(const TransitionCurve& curve);

/// Rank correlation with average ranks for ties; 0 when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::string report_json(const MetricsReport& report);
/// Header "targeted,estimated,std", one row per point.
std::string curve_csv(const TransitionCurve& curve);
std::string curve_json(const TransitionCurve& curve, const SmoothnessStats& stats);

/// Tiles images left to right.
Image tile_row(const std::vector<Image>& tiles);

/// The face followed by its edits toward each traversal point.
std::vector<Image> traversal_strip(const GeneratorFn& generator, const Image& face,
                                   const std::vector<Eigen::VectorXd>& points);

void write_text(const std::string& path, const std::string& text);

}  // namespace moodgan::eval
