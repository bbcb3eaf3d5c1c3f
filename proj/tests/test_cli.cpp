#include "doctest.h"

#include "cli.hpp"
#include "moodgan/corpus.hpp"
#include "moodgan/geometry.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "json.hpp"

using namespace moodgan;
using moodgan::testing::TempDir;
using moodgan::testing::read_lines;
using moodgan::testing::slurp;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Drops the wall-clock field of each log row.
std::vector<std::string> log_without_time(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& line : read_lines(path)) {
    auto row = json::parse(line);
    row.erase("wall_time");
    out.push_back(row.dump());
  }
  return out;
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

/// A tiny corpus, a repr checkpoint and the annotated manifest.
struct Pipeline {
  TempDir dir{"cli_pipeline"};
  std::string manifest, annotated, repr;

  Pipeline() {
    manifest = dir / "data/manifest.jsonl";
    annotated = dir / "data/manifest.annotated.jsonl";
    repr = dir / "repr/checkpoint";
    REQUIRE(run({"synth", "--n-train", "80", "--n-test", "7", "--size", "16", "--seed", "3", "--out", dir / "data"})
                .code == 0);
    REQUIRE(run({"train", "--stage", "repr", "--manifest", manifest, "--out", dir / "repr", "--iterations", "30",
                 "--image-size", "16", "--preset", "tiny", "--batch-size", "8", "--lr", "0.001", "--seed", "1"})
                .code == cli::kExitOk);
    REQUIRE(run({"annotate", "--checkpoint", repr, "--manifest", manifest}).code == cli::kExitOk);
  }

  Result train_gan(const std::string& condition, const std::string& out) const {
    return run({"train", "--stage", "gan", "--condition", condition, "--manifest", annotated, "--out", out,
                "--iterations", "2", "--image-size", "16", "--preset", "tiny", "--batch-size", "4", "--set",
                "n_critic=1"});
  }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  TempDir dir("cli_usage");
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"paint"}).code == cli::kExitUsage);
  CHECK(run({"synth", "--n-train", "0", "--out", dir / "a"}).code == cli::kExitUsage);
  CHECK(run({"synth", "--n-train", "4"}).code == cli::kExitUsage);
  CHECK(run({"synth", "--size", "8", "--out", dir / "a"}).code == cli::kExitUsage);
  CHECK(run({"train", "--stage", "critic", "--manifest", "m", "--out", dir / "b"}).code == cli::kExitUsage);
  CHECK(run({"train", "--stage", "gan", "--condition", "va2", "--manifest", "m", "--out", dir / "b"}).code ==
        cli::kExitUsage);
  CHECK(run({"eval", "--gan", "identity", "--manifest", "m", "--out", dir / "c"}).code == cli::kExitUsage);
  CHECK(run({"synth", "--help"}).code == cli::kExitOk);
  CHECK(!fs::exists(dir / "a"));
}

TEST_CASE("synth writes identical corpora for identical flags") {
  TempDir dir("cli_synth");
  const std::vector<std::string> flags = {"--n-train", "6", "--n-test", "2", "--size", "16", "--seed", "9"};
  auto first = flags, second = flags;
  first.insert(first.begin(), "synth");
  second.insert(second.begin(), "synth");
  first.insert(first.end(), {"--out", dir / "a"});
  second.insert(second.end(), {"--out", dir / "b"});
  REQUIRE(run(first).code == 0);
  REQUIRE(run(second).code == 0);
  CHECK(read_lines(dir / "a/manifest.jsonl").size() == 8);
  CHECK(slurp(dir / "a/manifest.jsonl") == slurp(dir / "b/manifest.jsonl"));
  CHECK(slurp(dir / "a/artifacts.json") == slurp(dir / "b/artifacts.json"));
  const auto artifacts = read_json(dir / "a/artifacts.json");
  CHECK(artifacts.at("command") == "synth");
  CHECK(artifacts.at("artifacts").size() == 9);
  for (const auto& rel : artifacts.at("artifacts")) {
    const std::string path = rel.get<std::string>();
    CHECK(slurp(dir / ("a/" + path)) == slurp(dir / ("b/" + path)));
  }
}

TEST_CASE("train checks its config and flags") {
  TempDir dir("cli_train");
  REQUIRE(run({"synth", "--n-train", "8", "--n-test", "2", "--size", "16", "--seed", "1", "--out", dir / "data"}).code ==
          0);
  const auto manifest = dir / "data/manifest.jsonl";
  const std::vector<std::string> base = {"train", "--stage", "repr", "--manifest", manifest, "--image-size", "16",
                                         "--preset", "tiny"};
  const auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };

  CHECK(with({"--out", dir / "u", "--set", "learning_rate=1"}).code == cli::kExitUsage);
  CHECK(with({"--out", dir / "u", "--set", "iterations"}).code == cli::kExitUsage);
  CHECK(with({"--out", dir / "u", "--config", dir / "absent.txt"}).code == cli::kExitUsage);
  moodgan::testing::write_lines(dir / "bad.txt", {"critic.lr = 0.1"});
  CHECK(with({"--out", dir / "u", "--config", dir / "bad.txt"}).code == cli::kExitUsage);
  CHECK(run({"train", "--stage", "repr", "--manifest", dir / "none.jsonl", "--out", dir / "u"}).code ==
        cli::kExitFailure);

  // stage sections override flat keys; flags override both
  moodgan::testing::write_lines(dir / "run.txt", {"iterations = 7", "repr.iterations = 5", "av.iterations = 9",
                                                  "batch_size = 4", "n_points = 5"});
  const auto sectioned = with({"--out", dir / "s", "--config", dir / "run.txt"});
  REQUIRE(sectioned.code == 0);
  CHECK(read_lines(dir / "s/train_log.jsonl").size() == 5);
  const auto flagged = with({"--out", dir / "f", "--config", dir / "run.txt", "--iterations", "3"});
  REQUIRE(flagged.code == 0);
  CHECK(read_lines(dir / "f/train_log.jsonl").size() == 3);
  CHECK(slurp(dir / "f/config.txt").find("batch_size = 4\n") != std::string::npos);

  CHECK(fs::exists(dir / "f/checkpoint/metadata.json"));
  const auto artifacts = read_json(dir / "f/artifacts.json");
  CHECK(artifacts.at("command") == "train");
  bool listed = false;
  for (const auto& p : artifacts.at("artifacts")) listed = listed || p == "checkpoint/metadata.json";
  CHECK(listed);
}

TEST_CASE("training a mood3 GAN before annotation names the annotate step") {
  TempDir dir("cli_order");
  REQUIRE(run({"synth", "--n-train", "8", "--n-test", "2", "--size", "16", "--out", dir / "data"}).code == 0);
  const auto r = run({"train", "--stage", "gan", "--condition", "mood3", "--manifest", dir / "data/manifest.jsonl",
                      "--out", dir / "gan", "--iterations", "1", "--image-size", "16"});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find("annotate") != std::string::npos);
  CHECK(!fs::exists(dir / "gan/checkpoint"));
}

TEST_CASE("annotate") {
  Pipeline p;
  CHECK(read_lines(p.annotated).size() == read_lines(p.manifest).size());
  for (const auto& line : read_lines(p.annotated)) CHECK(parse_manifest_line(line).mood.has_value());
  CHECK(read_json(p.annotated + ".artifacts.json").at("command") == "annotate");

  CHECK(run({"annotate", "--checkpoint", p.dir / "missing", "--manifest", p.manifest}).code == cli::kExitFailure);
  CHECK(run({"annotate", "--checkpoint", p.repr, "--manifest", p.manifest, "--out", p.manifest}).code ==
        cli::kExitUsage);
  const auto before = slurp(p.annotated);
  CHECK(run({"annotate", "--checkpoint", p.repr, "--manifest", p.manifest, "--out", p.dir / "data/again.jsonl"})
            .code == 0);
  CHECK(slurp(p.dir / "data/again.jsonl") == before);
}

TEST_CASE("full tiny pipeline") {
  Pipeline p;
  for (const std::string condition : {"discrete7", "av2", "mood3"}) {
    const auto r = p.train_gan(condition, p.dir / ("gan_" + condition));
    INFO(condition, ": ", r.err);
    CHECK(r.code == 0);
    CHECK(fs::exists(p.dir / ("gan_" + condition + "/checkpoint/generator.bin")));
    CHECK(read_lines(p.dir / ("gan_" + condition + "/train_log.jsonl")).size() == 2);
  }
  REQUIRE(run({"train", "--stage", "av", "--manifest", p.manifest, "--out", p.dir / "av", "--iterations", "10",
               "--image-size", "16", "--preset", "tiny", "--batch-size", "8"})
              .code == 0);

  SUBCASE("analyze") {
    const auto r = run({"analyze", "--manifest", p.annotated, "--out", p.dir / "analysis", "--gan",
                        p.dir / "gan_mood3/checkpoint", "--n-points", "5", "--face-index", "2"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto basis = geometry::basis_from_json(slurp(p.dir / "analysis/basis.json"));
    CHECK(std::abs(basis.third_axis.dot(basis.valence_axis)) < 1e-9);
    CHECK(std::abs(basis.third_axis.dot(basis.arousal_axis)) < 1e-9);
    CHECK(std::abs(basis.third_axis.norm() - 1.0) < 1e-12);
    for (const std::string axis : {"valence", "arousal", "third"}) {
      const auto grid = read_image(p.dir / ("analysis/grid_" + axis + ".png"));
      CHECK(grid.height == 16);
      CHECK(grid.width == 16 * 6);
    }
    CHECK(read_image(p.dir / "analysis/grid_centroids.png").width == 16 * 8);

    // centroids from an independent pass over the raw JSON rows
    std::array<Eigen::Vector3d, kNumClasses> sums;
    sums.fill(Eigen::Vector3d::Zero());
    std::array<int, kNumClasses> counts{};
    for (const auto& line : read_lines(p.annotated)) {
      const auto row = json::parse(line);
      if (row.at("split") != "train") continue;
      const int c = row.at("emotion").get<int>();
      const auto& m = row.at("mood");
      sums[c] += Eigen::Vector3d(m[0].get<double>(), m[1].get<double>(), m[2].get<double>());
      ++counts[c];
    }
    const auto written = read_json(p.dir / "analysis/centroids.json").at("centroids");
    for (int c = 0; c < kNumClasses; ++c) {
      REQUIRE(counts[c] > 0);
      const auto& v = written.at(std::string(kClassNames[c]));
      for (int k = 0; k < 3; ++k) CHECK(std::abs(v[k].get<double>() - sums[c][k] / counts[c]) < 1e-12);
    }
    CHECK(run({"analyze", "--manifest", p.manifest, "--out", p.dir / "bad"}).code == cli::kExitFailure);
  }

  SUBCASE("eval") {
    for (const std::string condition : {"discrete7", "av2", "mood3"}) {
      const auto out = p.dir / ("eval_" + condition);
      const auto r = run({"eval", "--gan", p.dir / ("gan_" + condition + "/checkpoint"), "--manifest", p.annotated,
                          "--estimator", p.dir / "av/checkpoint", "--out", out, "--n-points", "6"});
      INFO(condition, ": ", r.err);
      REQUIRE(r.code == 0);
      const auto report = read_json(out + "/report.json");
      const double red = report.at("rmse_red"), green = report.at("rmse_green"), blue = report.at("rmse_blue");
      CHECK(std::abs(report.at("rmse_all").get<double>() - std::sqrt((red * red + green * green + blue * blue) / 3)) <
            1e-9);
      CHECK(report.at("n_faces") == 7);
      for (const std::string axis : {"valence", "arousal"}) {
        const auto rows = read_lines(out + "/curve_" + axis + ".csv");
        CHECK(rows.size() == 7);  // header + n_points
        CHECK(read_json(out + "/curve_" + axis + ".json").at("estimated").size() == 6);
      }
    }
    CHECK(run({"eval", "--gan", p.dir / "gan_mood3/checkpoint", "--manifest", p.annotated, "--condition", "av2",
               "--out", p.dir / "x"})
              .code == cli::kExitUsage);
  }

  SUBCASE("identity stub") {
    const auto r = run({"eval", "--gan", "identity", "--condition", "mood3", "--manifest", p.annotated, "--size", "16",
                        "--out", p.dir / "identity"});
    REQUIRE(r.code == 0);
    const auto report = read_json(p.dir / "identity/report.json");
    for (const char* key : {"rmse_red", "rmse_green", "rmse_blue", "rmse_all", "l_rec"}) {
      CHECK(report.at(key).get<double>() == 0.0);
    }
  }

  SUBCASE("commands repeat") {
    const auto again = p.train_gan("mood3", p.dir / "gan_mood3_again");
    REQUIRE(again.code == 0);
    CHECK(log_without_time(p.dir / "gan_mood3/train_log.jsonl") ==
          log_without_time(p.dir / "gan_mood3_again/train_log.jsonl"));
    CHECK(slurp(p.dir / "gan_mood3/checkpoint/generator.bin") ==
          slurp(p.dir / "gan_mood3_again/checkpoint/generator.bin"));
    for (const auto& out : {p.dir / "e1", p.dir / "e2"}) {
      REQUIRE(run({"eval", "--gan", p.dir / "gan_mood3/checkpoint", "--manifest", p.annotated, "--estimator",
                   p.dir / "av/checkpoint", "--out", out, "--n-points", "4"})
                  .code == 0);
    }
    for (const char* file : {"report.json", "curve_valence.csv", "curve_arousal.json", "artifacts.json"}) {
      CHECK(slurp(p.dir / "e1/" + file) == slurp(p.dir / "e2/" + file));
    }
  }
}
