#pragma once

// Analysis of the 3-d mood space: class centroids, least-squares valence and
// arousal axes, the orthogonal third axis and condition traversals.

#include "moodgan/corpus.hpp"
#include "moodgan/gancore.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace moodgan::geometry {

using Centroids = std::array<Eigen::Vector3d, kNumClasses>;

/// Mean mood vector per class. Throws std::invalid_argument naming every
/// class without samples.
Centroids class_centroids(const std::vector<std::pair<int, Eigen::Vector3d>>& annotations);

struct AvAnnotation {
  Eigen::Vector3d mood;
  double valence = 0.0;
  double arousal = 0.0;
};

struct AxisBasis {
  Eigen::Vector3d valence_axis;
  Eigen::Vector3d arousal_axis;
  Eigen::Vector3d third_axis;
  /// Minimum-norm mood vector mapped to (valence, arousal) = (0, 0).
  Eigen::Vector3d offset;
};

struct AxisFit {
  AxisBasis basis;
  Eigen::Matrix<double, 2, 3> weights;  // rows: valence, arousal
  Eigen::Vector2d intercept;
  double residual_rms = 0.0;

  /// weights * mood + intercept
  Eigen::Vector2d predict(const Eigen::Vector3d& mood) const { return weights * mood + intercept; }
};

/// Ordinary least squares (valence, arousal) ~ W mood + b. Throws
/// std::invalid_argument("degenerate representation") when the design matrix
/// is rank deficient.
AxisFit regress_av_axes(const std::vector<AvAnnotation>& annotations);

/// u x v. Throws std::invalid_argument("undefined orthogonal axis") for zero
/// or parallel inputs (angle <= 1e-6 rad).
Eigen::Vector3d cross_product(const Eigen::Vector3d& u, const Eigen::Vector3d& v);

/// Unit-length u x v.
Eigen::Vector3d orthogonal_axis(const Eigen::Vector3d& u, const Eigen::Vector3d& v);

std::string basis_to_json(const AxisBasis& basis);
AxisBasis basis_from_json(const std::string& text);

struct Traversal {
  gan::ConditionKind space = gan::ConditionKind::kMood3;
  std::string axis_name;
  std::vector<Eigen::VectorXd> points;
  /// Nominal target value of each point on the axis's affect scale.
  std::vector<double> targets;
};

/// axis: "valence" or "arousal" (any space), "third" (mood3 only).
/// discrete7 interpolates one-hot endpoints (sad->happy, neutral->surprise);
/// av2 sweeps one coordinate over [-1, 1]; mood3 walks center + t * axis for
/// t in [-1, 1], shortened where the line would leave the [-1, 1]^3 cube.
Traversal make_traversal(gan::ConditionKind space, const std::string& axis, int n_points,
                         const AxisBasis* basis = nullptr);

/// Center of mood3 traversals: the offset clipped to [-1, 1]^3.
Eigen::Vector3d traversal_center(const AxisBasis& basis);

}  // namespace moodgan::geometry
