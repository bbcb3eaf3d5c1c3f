#include "doctest.h"

#include "moodgan/corpus.hpp"
#include "moodgan/rng.hpp"
#include "support.hpp"

#include <array>
#include <cmath>
#include <sstream>

using namespace moodgan;
using moodgan::testing::TempDir;

namespace {

Image gradient_image(int h, int w, float tint) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(0, y, x) = static_cast<float>(x) / static_cast<float>(w - 1);
      img.at(1, y, x) = static_cast<float>(y) / static_cast<float>(h - 1);
      img.at(2, y, x) = tint;
    }
  }
  return img;
}

std::string row(const std::string& path, const std::string& extra) {
  return R"({"path": ")" + path + R"(", "split": "train")" + extra + "}";
}

// Independent restatement of the labeling rules.
int rule_label(double v, double a, double d) {
  if (a > 0.5 && std::abs(v) <= 0.3) return emotion::kSurprise;
  if (v > 0.4) return emotion::kHappy;
  if (v < -0.3 && a > 0.3) return d < 0 ? emotion::kFear : emotion::kAngry;
  if (v < -0.4 && a <= 0.3 && d >= 0.2) return emotion::kDisgust;
  if (v < -0.4) return emotion::kSad;
  return emotion::kNeutral;
}

// Grid histogram computed offline by enumerating (i - 5) / 5 for i in 0..10
// through the rules, in class order.
constexpr std::array<int, kNumClasses> kGridHistogram = {462, 363, 126, 99, 80, 105, 96};

}  // namespace

TEST_CASE("class list order is fixed") {
  CHECK(kClassNames.size() == 7);
  CHECK(kClassNames[0] == "neutral");
  CHECK(kClassNames[6] == "angry");
  CHECK(class_index("fear") == emotion::kFear);
  CHECK(class_index("contempt") == -1);
}

TEST_CASE("load_corpus keeps three valid rows") {
  TempDir dir("corpus3");
  std::vector<std::string> lines;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "img" + std::to_string(i) + ".ppm";
    write_image(gradient_image(20, 24, 0.1f * i), dir / name);
    lines.push_back(row(name, R"(, "emotion": )" + std::to_string(i)));
  }
  moodgan::testing::write_lines(dir / "m.jsonl", lines);
  const Corpus corpus = load_corpus(dir / "m.jsonl", 16);
  CHECK(corpus.samples.size() == 3);
  CHECK(corpus.report.accepted == 3);
  CHECK(corpus.report.dropped.empty());
  for (const auto& s : corpus.samples) {
    CHECK(s.image.height == 16);
    CHECK(s.image.width == 16);
  }
}

TEST_CASE("load_corpus drops an unreadable image with reason decode") {
  TempDir dir("corpus_decode");
  write_image(gradient_image(16, 16, 0.5f), dir / "good.png");
  {
    std::ofstream bad(dir / "bad.ppm", std::ios::binary);
    bad << "P6\n16 16\n255\ntruncated";
  }
  moodgan::testing::write_lines(dir / "m.jsonl", {row("good.png", R"(, "emotion": 1)"), row("bad.ppm", R"(, "emotion": 2)")});
  const Corpus corpus = load_corpus(dir / "m.jsonl", 16);
  REQUIRE(corpus.samples.size() == 1);
  REQUIRE(corpus.report.dropped.size() == 1);
  CHECK(corpus.report.dropped[0].reason == "decode");
  CHECK(corpus.report.dropped[0].path == "bad.ppm");
}

TEST_CASE("load_corpus fails on a missing manifest") {
  CHECK_THROWS(load_corpus("/nonexistent/manifest.jsonl", 16));
}

TEST_CASE("image codecs round-trip") {
  TempDir dir("codec");
  const Image img = gradient_image(9, 13, 0.25f);
  for (const std::string name : {"a.ppm", "a.png"}) {
    write_image(img, dir / name);
    const Image back = read_image(dir / name);
    REQUIRE(back.height == 9);
    REQUIRE(back.width == 13);
    CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
  }
}

TEST_CASE("synthetic corpus labels follow the renderer's rules") {
  TempDir dir("synth100");
  const std::uint64_t seed = 11;
  const std::string manifest = make_synthetic_corpus(90, 10, 32, seed, dir.path().string());
  const Corpus corpus = load_corpus(manifest, 32);
  REQUIRE(corpus.samples.size() == 100);
  for (int i = 0; i < 100; ++i) {
    const auto p = synthetic_params_for(seed, i);
    CHECK(*corpus.samples[static_cast<std::size_t>(i)].emotion == label_synthetic(p));
    CHECK(label_synthetic(p) == rule_label(p.v, p.a, p.d));
  }
  CHECK(corpus.split(Split::kTrain).size() == 90);
  CHECK(corpus.split(Split::kTest).size() == 10);
}

TEST_CASE("identity augmentation policy returns the input") {
  const ImageSample sample = render_synthetic({0.2, -0.3, 0.5, 4}, 32);
  const AugmentPolicy identity{{1.0, 1.0}, 0.0, 0.0};
  for (std::uint64_t index = 0; index < 5; ++index) {
    const auto out = augment(sample, identity, 3, 1, index);
    CHECK(out.image.pixels == sample.image.pixels);
    CHECK(out.emotion == sample.emotion);
  }
}

TEST_CASE("augmentation is a pure function of seed, epoch and index") {
  const ImageSample sample = render_synthetic({0.7, 0.1, -0.2, 9}, 32);
  const AugmentPolicy policy{{0.8, 1.2}, 15.0, 0.5};
  for (std::uint64_t index = 0; index < 8; ++index) {
    const auto a = augment(sample, policy, 21, 3, index);
    const auto b = augment(sample, policy, 21, 3, index);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.av == sample.av);
    CHECK(a.image.pixels.minCoeff() >= 0.0f);
    CHECK(a.image.pixels.maxCoeff() <= 1.0f);
  }
  const auto e1 = draw_augmentation(policy, 21, 3, 0), e2 = draw_augmentation(policy, 21, 4, 0);
  CHECK((e1.scale != e2.scale || e1.rotation_deg != e2.rotation_deg));
}

TEST_CASE("double horizontal flip restores the image") {
  const ImageSample sample = render_synthetic({-0.5, 0.6, 0.3, 2}, 32);
  const AugmentPolicy always_flip{{1.0, 1.0}, 0.0, 1.0};
  const AugmentDraw draw = draw_augmentation(always_flip, 5, 0, 7);
  REQUIRE(draw.flip);
  const Image twice = apply_augmentation(apply_augmentation(sample.image, draw), draw);
  CHECK((twice.pixels - sample.image.pixels).cwiseAbs().maxCoeff() < 1e-6f);
  const Image once = apply_augmentation(sample.image, draw);
  CHECK(once.at(0, 10, 3) == sample.image.at(0, 10, 28));
}

TEST_CASE("augment policy validation") {
  CHECK_THROWS_AS((AugmentPolicy{{0.0, 1.0}, 0.0, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((AugmentPolicy{{1.0, 1.0}, -1.0, 0.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((AugmentPolicy{{1.0, 1.0}, 0.0, 1.5}.validate()), std::invalid_argument);
}

TEST_CASE("renderer is deterministic and labels the neutral face") {
  const SyntheticParams params{0.0, 0.0, 0.0, 1};
  const auto a = render_synthetic(params, 32);
  const auto b = render_synthetic(params, 32);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(*a.emotion == emotion::kNeutral);
  CHECK(a.mood->isApprox(Eigen::Vector3d(0, 0, 0)));
  CHECK(a.av->isApprox(Eigen::Vector2d(0, 0)));
  CHECK(a.image.pixels.minCoeff() >= 0.0f);
  CHECK(a.image.pixels.maxCoeff() <= 1.0f);
  CHECK_THROWS_WITH(render_synthetic(params, 15), "canvas too small");
}

TEST_CASE("valence changes only the mouth region") {
  for (std::uint64_t seed : {3ULL, 17ULL, 123ULL}) {
    for (int size : {32, 48}) {
      const auto happy = render_synthetic({1.0, 0.0, 0.0, seed}, size);
      const auto sad = render_synthetic({-1.0, 0.0, 0.0, seed}, size);
      const auto box = synthetic_layout(seed, size).mouth;
      int inside = 0, outside = 0;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          bool differs = false;
          for (int c = 0; c < 3; ++c) differs |= happy.image.at(c, y, x) != sad.image.at(c, y, x);
          if (!differs) continue;
          (box.contains(x, y) ? inside : outside)++;
        }
      }
      CHECK(outside == 0);
      CHECK(inside > 0);
    }
  }
}

TEST_CASE("label rules") {
  CHECK(label_synthetic({0.9, 0.1, 0.0, 0}) == emotion::kHappy);
  CHECK(label_synthetic({0.0, 0.0, 0.0, 0}) == emotion::kNeutral);
  CHECK(label_synthetic({-0.8, 0.6, -0.5, 0}) == emotion::kFear);
  CHECK(label_synthetic({-0.8, 0.6, 0.5, 0}) == emotion::kAngry);
  CHECK(label_synthetic({-0.8, 0.0, 0.5, 0}) == emotion::kDisgust);
  CHECK(label_synthetic({-0.8, 0.0, 0.0, 0}) == emotion::kSad);
  CHECK(label_synthetic({0.1, 0.9, 0.0, 0}) == emotion::kSurprise);
}

TEST_CASE("label grid covers all classes") {
  std::array<int, kNumClasses> histogram{};
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      for (int k = 0; k < 11; ++k) {
        const SyntheticParams p{(i - 5) / 5.0, (j - 5) / 5.0, (k - 5) / 5.0, 0};
        const int label = label_synthetic(p);
        CHECK(label == rule_label(p.v, p.a, p.d));
        ++histogram[static_cast<std::size_t>(label)];
      }
    }
  }
  CHECK(histogram == kGridHistogram);
  for (int count : histogram) CHECK(count > 0);
}

TEST_CASE("label_synthetic is total on random controls") {
  Rng rng(99);
  for (int i = 0; i < 20000; ++i) {
    const SyntheticParams p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), 0};
    const int label = label_synthetic(p);
    CHECK(label >= 0);
    CHECK(label < kNumClasses);
    CHECK(label == rule_label(p.v, p.a, p.d));
  }
}

TEST_CASE("synthetic corpus is byte-identical across runs") {
  TempDir first("synth_a"), second("synth_b");
  const auto m1 = make_synthetic_corpus(100, 20, 32, 7, first.path().string());
  const auto m2 = make_synthetic_corpus(100, 20, 32, 7, second.path().string());
  CHECK(moodgan::testing::slurp(m1) == moodgan::testing::slurp(m2));
  CHECK(moodgan::testing::slurp(first / "images/test_00119.ppm") ==
        moodgan::testing::slurp(second / "images/test_00119.ppm"));
  CHECK(moodgan::testing::read_lines(m1).size() == 120);
}

TEST_CASE("synthetic corpus rejects empty splits") {
  TempDir dir("synth_zero");
  CHECK_THROWS_AS(make_synthetic_corpus(0, 20, 32, 7, dir.path().string()), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic_corpus(20, 0, 32, 7, dir.path().string()), std::invalid_argument);
}

TEST_CASE("synthetic class proportions match the grid histogram") {
  TempDir dir("synth1200");
  const auto manifest = make_synthetic_corpus(1000, 200, 32, 1, dir.path().string());
  std::array<int, kNumClasses> counts{};
  int total = 0;
  for (const auto& line : moodgan::testing::read_lines(manifest)) {
    ++counts[static_cast<std::size_t>(*parse_manifest_line(line).emotion)];
    ++total;
  }
  REQUIRE(total == 1200);
  for (int c = 0; c < kNumClasses; ++c) {
    const double sampled = 100.0 * counts[static_cast<std::size_t>(c)] / total;
    const double grid = 100.0 * kGridHistogram[static_cast<std::size_t>(c)] / 1331.0;
    INFO(kClassNames[static_cast<std::size_t>(c)], " sampled ", sampled, "% grid ", grid, "%");
    CHECK(std::abs(sampled - grid) <= 5.0);
  }
}

TEST_CASE("load_corpus never returns invalid samples from corrupted manifests") {
  TempDir dir("corrupt");
  write_image(gradient_image(12, 20, 0.3f), dir / "ok.ppm");
  {
    std::ofstream junk(dir / "junk.png", std::ios::binary);
    junk << "not a png";
  }
  const std::vector<std::string> fragments = {
      row("ok.ppm", R"(, "emotion": 3)"),
      row("ok.ppm", R"(, "valence": 0.5, "arousal": -0.5)"),
      row("ok.ppm", R"(, "mood": [0.1, -0.2, 0.3])"),
      row("ok.ppm", R"(, "emotion": 9)"),
      row("ok.ppm", R"(, "valence": 1.5, "arousal": 0.0)"),
      row("ok.ppm", R"(, "mood": [0.1, 0.2])"),
      row("ok.ppm", R"(, "emotion": "happy")"),
      row("ok.ppm", ""),
      row("missing.ppm", R"(, "emotion": 1)"),
      row("junk.png", R"(, "emotion": 1)"),
      R"({"split": "train", "emotion": 1})",
      R"({"path": "ok.ppm", "split": "holdout", "emotion": 1})",
      "{not json",
      "[1, 2, 3]",
  };
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> lines;
    const int n = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < n; ++i) lines.push_back(fragments[rng.below(fragments.size())]);
    moodgan::testing::write_lines(dir / "m.jsonl", lines);
    const Corpus corpus = load_corpus(dir / "m.jsonl", 16);
    CHECK(corpus.report.accepted + static_cast<int>(corpus.report.dropped.size()) == n);
    CHECK(static_cast<int>(corpus.samples.size()) == corpus.report.accepted);
    for (const auto& s : corpus.samples) {
      CHECK(s.image.height == 16);
      CHECK(s.image.width == 16);
      CHECK(s.image.pixels.minCoeff() >= 0.0f);
      CHECK(s.image.pixels.maxCoeff() <= 1.0f);
      CHECK(s.has_annotation());
      if (s.emotion) CHECK((*s.emotion >= 0 && *s.emotion < kNumClasses));
      if (s.av) CHECK(s.av->cwiseAbs().maxCoeff() <= 1.0);
      if (s.mood) CHECK(s.mood->cwiseAbs().maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("manifest lines round-trip") {
  ManifestRecord rec;
  rec.path = "images/x.ppm";
  rec.split = Split::kVal;
  rec.emotion = 4;
  rec.valence = -0.25;
  rec.arousal = 0.75;
  rec.mood = Eigen::Vector3d(0.1, 0.2, -0.3);
  const auto back = parse_manifest_line(format_manifest_line(rec));
  CHECK(back.path == rec.path);
  CHECK(back.split == Split::kVal);
  CHECK(*back.emotion == 4);
  CHECK(*back.valence == -0.25);
  CHECK(*back.arousal == 0.75);
  CHECK(*back.mood == *rec.mood);
}
