#include "moodgan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace moodgan::geometry {

using json = nlohmann::ordered_json;

Centroids class_centroids(const std::vector<std::pair<int, Eigen::Vector3d>>& annotations) {
  Centroids sums;
  sums.fill(Eigen::Vector3d::Zero());
  std::array<long, kNumClasses> counts{};
  for (const auto& [label, mood] : annotations) {
    if (label < 0 || label >= kNumClasses) throw std::invalid_argument("class id out of range");
    sums[static_cast<std::size_t>(label)] += mood;
    ++counts[static_cast<std::size_t>(label)];
  }
  std::string missing;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) missing += (missing.empty() ? "" : ", ") + std::string(kClassNames[c]);
  }
  if (!missing.empty()) throw std::invalid_argument("no samples for classes: " + missing);
  for (int c = 0; c < kNumClasses; ++c) sums[static_cast<std::size_t>(c)] /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  return sums;
}

Eigen::Vector3d cross_product(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  const Eigen::Vector3d w = u.cross(v);
  const double nu = u.norm(), nv = v.norm();
  if (!(nu > 0) || !(nv > 0) || !(w.norm() > std::sin(1e-6) * nu * nv)) {
    throw std::invalid_argument("undefined orthogonal axis");
  }
  return w;
}

Eigen::Vector3d orthogonal_axis(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  return cross_product(u, v).normalized();
}

AxisFit regress_av_axes(const std::vector<AvAnnotation>& annotations) {
  const auto n = static_cast<Eigen::Index>(annotations.size());
  if (n < 4) throw std::invalid_argument("degenerate representation");
  Eigen::MatrixXd design(n, 4);
  Eigen::MatrixXd targets(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = annotations[static_cast<std::size_t>(i)];
    design.row(i) << a.mood.transpose(), 1.0;
    targets.row(i) << a.valence, a.arousal;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 4) throw std::invalid_argument("degenerate representation");
  const Eigen::MatrixXd solution = qr.solve(targets);  // [4, 2]

  AxisFit fit;
  fit.weights = solution.topRows(3).transpose();
  fit.intercept = solution.row(3).transpose();
  fit.residual_rms = std::sqrt((design * solution - targets).squaredNorm() / static_cast<double>(2 * n));

  const double valence_norm = fit.weights.row(0).norm(), arousal_norm = fit.weights.row(1).norm();
  if (!(valence_norm > 0) || !(arousal_norm > 0)) throw std::invalid_argument("degenerate representation");
  fit.basis.valence_axis = fit.weights.row(0).transpose() / valence_norm;
  fit.basis.arousal_axis = fit.weights.row(1).transpose() / arousal_norm;
  fit.basis.third_axis = orthogonal_axis(fit.basis.valence_axis, fit.basis.arousal_axis);
  const Eigen::Matrix<double, 3, 2> pinv = fit.weights.completeOrthogonalDecomposition().pseudoInverse();
  fit.basis.offset = pinv * (-fit.intercept);
  return fit;
}

namespace {

json vec_json(const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); }

Eigen::Vector3d vec_from(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw std::invalid_argument(std::string("basis field '") + key + "' is not a 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace

std::string basis_to_json(const AxisBasis& basis) {
  json j;
  j["valence_axis"] = vec_json(basis.valence_axis);
  j["arousal_axis"] = vec_json(basis.arousal_axis);
  j["third_axis"] = vec_json(basis.third_axis);
  j["offset"] = vec_json(basis.offset);
  j["schema_version"] = 1;
  return j.dump(2);
}

AxisBasis basis_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (j.at("schema_version").get<int>() != 1) throw std::invalid_argument("unsupported basis schema");
    return {vec_from(j, "valence_axis"), vec_from(j, "arousal_axis"), vec_from(j, "third_axis"), vec_from(j, "offset")};
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed basis JSON: ") + e.what());
  }
}

Eigen::Vector3d traversal_center(const AxisBasis& basis) { return basis.offset.cwiseMax(-1.0).cwiseMin(1.0); }

namespace {

Eigen::VectorXd one_hot(int index) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumClasses);
  v[index] = 1.0;
  return v;
}

double nominal(int i, int n, double lo, double hi) { return lo + (hi - lo) * static_cast<double>(i) / (n - 1); }

}  // namespace

Traversal make_traversal(gan::ConditionKind space, const std::string& axis, int n_points, const AxisBasis* basis) {
  if (n_points < 2) throw std::invalid_argument("a traversal needs at least 2 points");
  Traversal out;
  out.space = space;
  out.axis_name = axis;
  const bool valence = axis == "valence", arousal = axis == "arousal", third = axis == "third";
  if (!valence && !arousal && !third) throw std::invalid_argument("unknown traversal axis '" + axis + "'");

  switch (space) {
    case gan::ConditionKind::kDiscrete7: {
      if (third) throw std::invalid_argument("unknown traversal axis 'third' for discrete7");
      const auto from = one_hot(valence ? emotion::kSad : emotion::kNeutral);
      const auto to = one_hot(valence ? emotion::kHappy : emotion::kSurprise);
      for (int i = 0; i < n_points; ++i) {
        const double t = nominal(i, n_points, 0.0, 1.0);
        out.points.push_back((1.0 - t) * from + t * to);
        // valence spans sad (-1) to happy (+1); arousal neutral (0) to surprise (+1)
        out.targets.push_back(valence ? 2.0 * t - 1.0 : t);
      }
      break;
    }
    case gan::ConditionKind::kAv2: {
      if (third) throw std::invalid_argument("unknown traversal axis 'third' for av2");
      for (int i = 0; i < n_points; ++i) {
        const double t = nominal(i, n_points, -1.0, 1.0);
        Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
        p[valence ? 0 : 1] = t;
        out.points.push_back(p);
        out.targets.push_back(t);
      }
      break;
    }
    case gan::ConditionKind::kMood3: {
      if (basis == nullptr) throw std::invalid_argument("mood3 traversal requires an axis basis");
      const Eigen::Vector3d direction =
          valence ? basis->valence_axis : arousal ? basis->arousal_axis : basis->third_axis;
      const Eigen::Vector3d center = traversal_center(*basis);
      // Portion of the line center + s * direction inside the cube, limited to s in [-1, 1].
      double lo = -1.0, hi = 1.0;
      for (int k = 0; k < 3; ++k) {
        if (direction[k] == 0.0) continue;
        double a = (-1.0 - center[k]) / direction[k], b = (1.0 - center[k]) / direction[k];
        if (a > b) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
      }
      if (!(hi - lo > 1e-9)) throw std::invalid_argument("traversal line does not cross the mood cube");
      for (int i = 0; i < n_points; ++i) {
        const double t = nominal(i, n_points, -1.0, 1.0);
        const double s = lo + (hi - lo) * (t + 1.0) / 2.0;
        out.points.push_back((center + s * direction).cwiseMax(-1.0).cwiseMin(1.0));
        out.targets.push_back(t);
      }
      break;
    }
  }
  return out;
}

}  // namespace moodgan::geometry
