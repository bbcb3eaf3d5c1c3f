#include "doctest.h"

#include "moodgan/geometry.hpp"
#include "moodgan/rng.hpp"

#include <cmath>

using namespace moodgan;
using geometry::AvAnnotation;
using Eigen::Vector3d;

namespace {

Vector3d random_vector(Rng& rng, double bound = 1.0) {
  return {rng.uniform(-bound, bound), rng.uniform(-bound, bound), rng.uniform(-bound, bound)};
}

/// Solves the 4x4 normal equations by Gauss-Jordan elimination with partial
/// pivoting; returns [4, 2] coefficients (three weights, then the intercept).
std::array<std::array<double, 2>, 4> normal_equations(const std::vector<AvAnnotation>& rows) {
  double a[4][6] = {};
  for (const auto& r : rows) {
    const double x[4] = {r.mood[0], r.mood[1], r.mood[2], 1.0};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) a[i][j] += x[i] * x[j];
      a[i][4] += x[i] * r.valence;
      a[i][5] += x[i] * r.arousal;
    }
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int i = col + 1; i < 4; ++i) {
      if (std::abs(a[i][col]) > std::abs(a[pivot][col])) pivot = i;
    }
    for (int j = 0; j < 6; ++j) std::swap(a[col][j], a[pivot][j]);
    for (int i = 0; i < 4; ++i) {
      if (i == col) continue;
      const double f = a[i][col] / a[col][col];
      for (int j = col; j < 6; ++j) a[i][j] -= f * a[col][j];
    }
  }
  std::array<std::array<double, 2>, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = {a[i][4] / a[i][i], a[i][5] / a[i][i]};
  return out;
}

std::vector<AvAnnotation> plane_annotations(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AvAnnotation> rows;
  for (int i = 0; i < n; ++i) {
    const Vector3d m = random_vector(rng);
    rows.push_back({m, m[0], m[1]});
  }
  return rows;
}

}  // namespace

TEST_CASE("singleton classes are their own centroids") {
  Rng rng(1);
  std::vector<std::pair<int, Vector3d>> rows;
  for (int c = 0; c < kNumClasses; ++c) rows.emplace_back(c, random_vector(rng));
  const auto centroids = geometry::class_centroids(rows);
  for (int c = 0; c < kNumClasses; ++c) CHECK(centroids[c] == rows[c].second);
}

TEST_CASE("symmetric samples average to the origin") {
  std::vector<std::pair<int, Vector3d>> rows;
  for (int c = 0; c < kNumClasses; ++c) rows.emplace_back(c, Vector3d(0.1 * c, 0.2, 0.3));
  rows.emplace_back(3, Vector3d(1, 0, 0));
  rows.emplace_back(3, Vector3d(-1, 0, 0));
  rows.erase(rows.begin() + 3);
  const auto centroids = geometry::class_centroids(rows);
  CHECK(centroids[3] == Vector3d::Zero());
}

TEST_CASE("centroids agree with reverse-order accumulation and stay inside the class box") {
  Rng rng(2);
  std::vector<std::pair<int, Vector3d>> rows;
  for (int i = 0; i < 100 * kNumClasses; ++i) rows.emplace_back(i % kNumClasses, random_vector(rng));
  const auto centroids = geometry::class_centroids(rows);
  for (int c = 0; c < kNumClasses; ++c) {
    Vector3d sum = Vector3d::Zero(), lo = Vector3d::Constant(1e9), hi = Vector3d::Constant(-1e9);
    int count = 0;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      if (it->first != c) continue;
      sum += it->second;
      lo = lo.cwiseMin(it->second);
      hi = hi.cwiseMax(it->second);
      ++count;
    }
    CHECK(count == 100);
    CHECK((centroids[c] - sum / count).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((centroids[c].array() >= lo.array()).all());
    CHECK((centroids[c].array() <= hi.array()).all());
  }
}

TEST_CASE("missing classes are all named") {
  std::vector<std::pair<int, Vector3d>> rows;
  for (int c : {0, 1, 2, 4, 5}) rows.emplace_back(c, Vector3d::Zero());
  CHECK_THROWS_WITH_AS(geometry::class_centroids(rows), doctest::Contains("surprise"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(geometry::class_centroids(rows), doctest::Contains("angry"), std::invalid_argument);
}

TEST_CASE("noiseless plane recovers the canonical axes") {
  const auto fit = geometry::regress_av_axes(plane_annotations(50, 3));
  CHECK(fit.residual_rms < 1e-9);
  CHECK((fit.basis.valence_axis - Vector3d(1, 0, 0)).norm() < 1e-9);
  CHECK((fit.basis.arousal_axis - Vector3d(0, 1, 0)).norm() < 1e-9);
  CHECK((fit.basis.third_axis - Vector3d(0, 0, 1)).norm() < 1e-9);
  CHECK(fit.basis.offset.norm() < 1e-9);
}

TEST_CASE("identical moods are degenerate") {
  std::vector<AvAnnotation> rows(10, AvAnnotation{Vector3d(0.1, 0.2, 0.3), 0.5, -0.5});
  CHECK_THROWS_WITH_AS(geometry::regress_av_axes(rows), "degenerate representation", std::invalid_argument);
  CHECK_THROWS_AS(geometry::regress_av_axes(plane_annotations(3, 1)), std::invalid_argument);
}

TEST_CASE("weights match the normal equations") {
  Rng rng(4);
  std::vector<AvAnnotation> rows;
  for (int i = 0; i < 200; ++i) {
    const Vector3d m = random_vector(rng);
    rows.push_back({m, 0.8 * m[0] + 0.1 * m[2], 0.9 * m[1]});
  }
  const auto fit = geometry::regress_av_axes(rows);
  const auto oracle = normal_equations(rows);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(fit.weights(0, k) - oracle[k][0]) < 1e-6);
    CHECK(std::abs(fit.weights(1, k) - oracle[k][1]) < 1e-6);
  }
  CHECK(std::abs(fit.intercept[0] - oracle[3][0]) < 1e-6);
  CHECK(std::abs(fit.intercept[1] - oracle[3][1]) < 1e-6);
  CHECK(std::abs(fit.weights(0, 0) - 0.8) < 1e-9);
  CHECK(std::abs(fit.weights(0, 2) - 0.1) < 1e-9);
}

TEST_CASE("noisy fits keep an orthonormal right-handed third axis") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix<double, 2, 3> w;
    w << random_vector(rng).transpose(), random_vector(rng).transpose();
    const Eigen::Vector2d b(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    std::vector<AvAnnotation> rows;
    for (int i = 0; i < 60; ++i) {
      const Vector3d m = random_vector(rng);
      const Eigen::Vector2d av = w * m + b;
      rows.push_back({m, av[0] + rng.normal() * 0.05, av[1] + rng.normal() * 0.05});
    }
    const auto basis = geometry::regress_av_axes(rows).basis;
    CHECK(std::abs(basis.valence_axis.norm() - 1.0) < 1e-12);
    CHECK(std::abs(basis.arousal_axis.norm() - 1.0) < 1e-12);
    CHECK(std::abs(basis.third_axis.norm() - 1.0) < 1e-12);
    CHECK(std::abs(basis.third_axis.dot(basis.valence_axis)) < 1e-9);
    CHECK(std::abs(basis.third_axis.dot(basis.arousal_axis)) < 1e-9);
    CHECK(basis.valence_axis.cross(basis.arousal_axis).dot(basis.third_axis) > 0.0);
  }
}

TEST_CASE("cross product") {
  CHECK(geometry::cross_product({1, 0, 0}, {0, 1, 0}) == Vector3d(0, 0, 1));
  const Vector3d u(0.3, -0.2, 0.9);
  CHECK_THROWS_WITH_AS(geometry::cross_product(u, u), "undefined orthogonal axis", std::invalid_argument);
  CHECK_THROWS_AS(geometry::cross_product(u, -2.0 * u), std::invalid_argument);
  CHECK_THROWS_AS(geometry::cross_product(Vector3d::Zero(), u), std::invalid_argument);

  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Vector3d a = random_vector(rng), b = random_vector(rng);
    const Vector3d c = geometry::cross_product(a, b);
    CHECK(std::abs(c.dot(a)) < 1e-12);
    CHECK(std::abs(c.dot(b)) < 1e-12);
    // cofactor expansion of det([e; a; b])
    CHECK(c[0] == doctest::Approx(a[1] * b[2] - a[2] * b[1]).epsilon(1e-14));
    CHECK(c[1] == doctest::Approx(a[2] * b[0] - a[0] * b[2]).epsilon(1e-14));
    CHECK(c[2] == doctest::Approx(a[0] * b[1] - a[1] * b[0]).epsilon(1e-14));
    CHECK(std::abs(geometry::orthogonal_axis(a, b).norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("basis JSON round-trips") {
  const auto basis = geometry::regress_av_axes(plane_annotations(20, 7)).basis;
  const auto text = geometry::basis_to_json(basis);
  CHECK(text.find("\"schema_version\"") != std::string::npos);
  const auto back = geometry::basis_from_json(text);
  CHECK(back.valence_axis == basis.valence_axis);
  CHECK(back.third_axis == basis.third_axis);
  CHECK(back.offset == basis.offset);
  CHECK_THROWS(geometry::basis_from_json("{\"valence_axis\": [1, 0]}"));
}

TEST_CASE("discrete traversals interpolate one-hot endpoints") {
  const auto t = geometry::make_traversal(gan::ConditionKind::kDiscrete7, "valence", 3);
  REQUIRE(t.points.size() == 3);
  Eigen::VectorXd sad = Eigen::VectorXd::Zero(7), happy = Eigen::VectorXd::Zero(7);
  sad[emotion::kSad] = 1.0;
  happy[emotion::kHappy] = 1.0;
  CHECK(t.points[0] == sad);
  CHECK(t.points[1] == 0.5 * sad + 0.5 * happy);
  CHECK(t.points[2] == happy);
  CHECK(t.targets == std::vector<double>{-1.0, 0.0, 1.0});

  const auto arousal = geometry::make_traversal(gan::ConditionKind::kDiscrete7, "arousal", 5);
  for (const auto& p : arousal.points) {
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p[emotion::kNeutral] + p[emotion::kSurprise] == doctest::Approx(1.0));
  }
  CHECK(arousal.targets.front() == 0.0);
  CHECK(arousal.targets.back() == 1.0);
  CHECK_THROWS_AS(geometry::make_traversal(gan::ConditionKind::kDiscrete7, "third", 3), std::invalid_argument);
}

TEST_CASE("av2 traversals sweep one coordinate") {
  const auto t = geometry::make_traversal(gan::ConditionKind::kAv2, "valence", 3);
  REQUIRE(t.points.size() == 3);
  CHECK(t.points[0] == Eigen::Vector2d(-1, 0));
  CHECK(t.points[1] == Eigen::Vector2d(0, 0));
  CHECK(t.points[2] == Eigen::Vector2d(1, 0));
  const auto a = geometry::make_traversal(gan::ConditionKind::kAv2, "arousal", 2);
  CHECK(a.points[1] == Eigen::Vector2d(0, 1));
}

TEST_CASE("mood3 traversal on an exact basis is affine in the regressed valence") {
  const auto fit = geometry::regress_av_axes(plane_annotations(50, 3));
  const auto t = geometry::make_traversal(gan::ConditionKind::kMood3, "valence", 11, &fit.basis);
  REQUIRE(t.points.size() == 11);
  const double slope = fit.predict(t.points[1])[0] - fit.predict(t.points[0])[0];
  for (int i = 0; i < 11; ++i) {
    CHECK(std::abs(fit.predict(t.points[i])[0] - (fit.predict(t.points[0])[0] + i * slope)) < 1e-9);
  }
  CHECK(std::abs(fit.predict(t.points.front())[0] + 1.0) < 1e-9);
  CHECK(std::abs(fit.predict(t.points.back())[0] - 1.0) < 1e-9);
}

TEST_CASE("mood3 traversals stay in the cube and advance along their axis") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    geometry::AxisBasis basis;
    basis.valence_axis = random_vector(rng).normalized();
    basis.arousal_axis = random_vector(rng).normalized();
    basis.third_axis = geometry::orthogonal_axis(basis.valence_axis, basis.arousal_axis);
    basis.offset = random_vector(rng, 0.95);
    for (const std::string axis : {"valence", "arousal", "third"}) {
      const Vector3d direction = axis == "valence"   ? basis.valence_axis
                                 : axis == "arousal" ? basis.arousal_axis
                                                     : basis.third_axis;
      const auto t = geometry::make_traversal(gan::ConditionKind::kMood3, axis, 7, &basis);
      REQUIRE(t.points.size() == 7);
      for (std::size_t i = 0; i < t.points.size(); ++i) {
        CHECK(t.points[i].cwiseAbs().maxCoeff() <= 1.0);
        if (i > 0) CHECK(t.points[i].dot(direction) > t.points[i - 1].dot(direction));
      }
    }
  }
}

TEST_CASE("traversal preconditions") {
  CHECK_THROWS_AS(geometry::make_traversal(gan::ConditionKind::kAv2, "valence", 1), std::invalid_argument);
  CHECK_THROWS_AS(geometry::make_traversal(gan::ConditionKind::kAv2, "dominance", 3), std::invalid_argument);
  CHECK_THROWS_AS(geometry::make_traversal(gan::ConditionKind::kMood3, "valence", 3), std::invalid_argument);

  // Center pinned to an edge with an axis leaving the cube on both sides of it.
  geometry::AxisBasis edge;
  edge.valence_axis = Vector3d(1, -1, 0).normalized();
  edge.arousal_axis = Vector3d(0, 0, 1);
  edge.third_axis = geometry::orthogonal_axis(edge.valence_axis, edge.arousal_axis);
  edge.offset = Vector3d(2, 2, 0);
  CHECK_THROWS_AS(geometry::make_traversal(gan::ConditionKind::kMood3, "valence", 3, &edge), std::invalid_argument);
}
