#include "cli.hpp"

#include "moodgan/corpus.hpp"
#include "moodgan/evalkit.hpp"
#include "moodgan/geometry.hpp"
#include "moodgan/reprnet.hpp"
#include "moodgan/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

namespace moodgan::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Bad flags or config: exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Keys read by analyze and eval; everything else in a config file belongs
/// to a training stage.
const std::set<std::string> kPipelineKeys = {"n_points", "eval_seed", "face_index"};
const std::set<std::string> kStages = {"repr", "av", "gan"};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw std::runtime_error(what + " not found: " + path);
}

train::Settings load_settings(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  try {
    return train::read_settings(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

/// Training keys for one stage: unprefixed keys plus "<stage>.key" entries,
/// the latter taking precedence.
train::Settings stage_settings(const train::Settings& all, const std::string& stage) {
  train::Settings out;
  for (const auto& [key, value] : all) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      if (!kPipelineKeys.count(key)) out[key] = value;
      continue;
    }
    const std::string prefix = key.substr(0, dot);
    if (!kStages.count(prefix)) throw UsageError("unknown config section '" + prefix + "' in key '" + key + "'");
  }
  for (const auto& [key, value] : all) {
    if (key.rfind(stage + ".", 0) == 0) out[key.substr(stage.size() + 1)] = value;
  }
  return out;
}

std::string pipeline_value(const train::Settings& all, const std::string& key, const std::string& fallback) {
  const auto it = all.find(key);
  return it == all.end() ? fallback : it->second;
}

long parse_long(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + text + "'");
  }
}

/// Records what a command produced, relative to its output root.
class Artifacts {
 public:
  Artifacts(std::string command, fs::path root) : command_(std::move(command)), root_(std::move(root)) {}

  void add(const fs::path& path) { paths_.push_back(fs::relative(path, root_).generic_string()); }

  void add_tree(const fs::path& dir) {
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename() != "artifacts.json") found.push_back(entry.path());
    }
    for (const auto& p : found) add(p);
  }

  void write(const fs::path& file) {
    std::sort(paths_.begin(), paths_.end());
    paths_.erase(std::unique(paths_.begin(), paths_.end()), paths_.end());
    json j;
    j["command"] = command_;
    j["artifacts"] = paths_;
    eval::write_text(file.string(), j.dump(2) + "\n");
  }

  void write() { write(root_ / "artifacts.json"); }

 private:
  std::string command_;
  fs::path root_;
  std::vector<std::string> paths_;
};

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<ManifestRecord> read_records(const std::string& manifest) {
  require_file(manifest, "manifest");
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read " + manifest);
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_manifest_line(line));
    } catch (const std::exception&) {
      // load_corpus reports malformed rows; analysis simply skips them
    }
  }
  return out;
}

/// Fails early, naming the annotate step, when no training row carries the
/// field the condition space needs.
void require_condition_field(const std::string& manifest, const gan::ConditionSpace& space) {
  const auto records = read_records(manifest);
  const bool present = std::any_of(records.begin(), records.end(), [&](const ManifestRecord& r) {
    if (r.split != Split::kTrain) return false;
    switch (space.kind) {
      case gan::ConditionKind::kDiscrete7: return r.emotion.has_value();
      case gan::ConditionKind::kAv2: return r.valence.has_value() && r.arousal.has_value();
      case gan::ConditionKind::kMood3: return r.mood.has_value();
    }
    return false;
  });
  if (present) return;
  if (space.kind == gan::ConditionKind::kMood3) {
    throw std::runtime_error("manifest " + manifest +
                             " has no mood annotations; run 'moodgan annotate' with a trained repr checkpoint first");
  }
  throw std::runtime_error("manifest " + manifest + " has no training rows with field '" + space.field() + "'");
}

// ---------------------------------------------------------------------------
// Shared analysis helpers.

std::vector<std::pair<int, Eigen::Vector3d>> mood_annotations(const std::vector<ManifestRecord>& records) {
  std::vector<std::pair<int, Eigen::Vector3d>> out;
  for (const auto& r : records) {
    if (r.split == Split::kTrain && r.emotion && r.mood) out.emplace_back(*r.emotion, *r.mood);
  }
  return out;
}

std::vector<geometry::AvAnnotation> av_annotations(const std::vector<ManifestRecord>& records) {
  std::vector<geometry::AvAnnotation> out;
  for (const auto& r : records) {
    if (r.split == Split::kTrain && r.mood && r.valence && r.arousal) out.push_back({*r.mood, *r.valence, *r.arousal});
  }
  return out;
}

/// Class means of the training rows' (valence, arousal).
std::array<Eigen::Vector2d, kNumClasses> av_centroids(const std::vector<ManifestRecord>& records) {
  std::array<Eigen::Vector2d, kNumClasses> sums;
  sums.fill(Eigen::Vector2d::Zero());
  std::array<long, kNumClasses> counts{};
  for (const auto& r : records) {
    if (r.split != Split::kTrain || !r.emotion || !r.valence || !r.arousal) continue;
    if (*r.emotion < 0 || *r.emotion >= kNumClasses) continue;
    sums[static_cast<std::size_t>(*r.emotion)] += Eigen::Vector2d(*r.valence, *r.arousal);
    ++counts[static_cast<std::size_t>(*r.emotion)];
  }
  std::string missing;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      missing += (missing.empty() ? "" : ", ") + std::string(kClassNames[static_cast<std::size_t>(c)]);
    } else {
      sums[static_cast<std::size_t>(c)] /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  if (!missing.empty()) throw std::runtime_error("no valence/arousal samples for classes: " + missing);
  return sums;
}

/// One condition vector per class, used for centroid edits and the color metric.
std::vector<Eigen::VectorXd> class_condition_points(gan::ConditionKind kind, const std::vector<ManifestRecord>& records) {
  std::vector<Eigen::VectorXd> out;
  switch (kind) {
    case gan::ConditionKind::kDiscrete7:
      for (int c = 0; c < kNumClasses; ++c) out.push_back(Eigen::VectorXd::Unit(kNumClasses, c));
      break;
    case gan::ConditionKind::kAv2:
      for (const auto& v : av_centroids(records)) out.emplace_back(v);
      break;
    case gan::ConditionKind::kMood3:
      for (const auto& v : geometry::class_centroids(mood_annotations(records))) out.emplace_back(v);
      break;
  }
  return out;
}

geometry::AxisFit fit_axes(const std::vector<ManifestRecord>& records) {
  const auto annotations = av_annotations(records);
  if (annotations.empty()) {
    throw std::runtime_error("no training rows with mood, valence and arousal; run 'moodgan annotate' first");
  }
  return geometry::regress_av_axes(annotations);
}

std::vector<std::string> traversal_axes(gan::ConditionKind kind) {
  if (kind == gan::ConditionKind::kMood3) return {"valence", "arousal", "third"};
  return {"valence", "arousal"};
}

std::vector<const Image*> face_pointers(const std::vector<const ImageSample*>& samples) {
  std::vector<const Image*> out;
  out.reserve(samples.size());
  for (const auto* s : samples) out.push_back(&s->image);
  return out;
}

std::vector<const ImageSample*> test_samples(const Corpus& corpus) {
  auto test = corpus.split(Split::kTest);
  if (test.empty()) throw std::runtime_error("manifest has no usable test rows");
  return test;
}

json centroids_json(const std::vector<ManifestRecord>& records) {
  const auto centroids = geometry::class_centroids(mood_annotations(records));
  json j;
  j["split"] = "train";
  json classes = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& v = centroids[static_cast<std::size_t>(c)];
    classes[std::string(kClassNames[static_cast<std::size_t>(c)])] = json::array({v[0], v[1], v[2]});
  }
  j["centroids"] = classes;
  return j;
}

json axis_fit_json(const geometry::AxisFit& fit) {
  json j;
  j["weights"] = json::array({json::array({fit.weights(0, 0), fit.weights(0, 1), fit.weights(0, 2)}),
                              json::array({fit.weights(1, 0), fit.weights(1, 1), fit.weights(1, 2)})});
  j["intercept"] = json::array({fit.intercept[0], fit.intercept[1]});
  j["residual_rms"] = fit.residual_rms;
  return j;
}

// ---------------------------------------------------------------------------
// Commands.

struct SynthArgs {
  int n_train = 2000;
  int n_test = 400;
  int size = 32;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const std::string manifest = make_synthetic_corpus(a.n_train, a.n_test, a.size, a.seed, a.out);
  Artifacts artifacts("synth", a.out);
  artifacts.add_tree(fs::path(a.out) / "images");
  artifacts.add(manifest);
  artifacts.write();
  out << "wrote " << manifest << " (" << a.n_train << " train, " << a.n_test << " test)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string stage;
  std::string condition;
  std::string manifest;
  std::string config;
  std::string out;
  std::optional<long> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<int> image_size;
  std::optional<std::string> preset;
  std::vector<std::string> overrides;  // key=value
};

train::TrainConfig resolve_train_config(const TrainArgs& a) {
  auto settings = stage_settings(load_settings(a.config), a.stage);
  // flags win over the file
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    settings[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (!a.condition.empty()) settings["condition_space"] = a.condition;
  if (a.iterations) settings["iterations"] = std::to_string(*a.iterations);
  if (a.seed) settings["seed"] = std::to_string(*a.seed);
  if (a.batch_size) settings["batch_size"] = std::to_string(*a.batch_size);
  if (a.image_size) settings["image_size"] = std::to_string(*a.image_size);
  if (a.preset) settings["preset"] = *a.preset;
  if (a.lr) {
    std::ostringstream text;
    text.precision(17);
    text << *a.lr;
    settings["lr"] = text.str();
  }
  try {
    return train::make_config(settings);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const train::TrainConfig config = resolve_train_config(a);
  require_file(a.manifest, "manifest");
  if (a.stage == "gan") require_condition_field(a.manifest, config.condition_space);

  const Corpus corpus = load_corpus(a.manifest, config.image_size);
  out << "loaded " << corpus.report.accepted << " samples, dropped " << corpus.report.dropped.size() << "\n";

  const long every = std::max(1L, config.iterations / 20);
  const train::ProgressFn progress = [&out, every](const train::LogRecord& r) {
    if (r.iteration % every != 0) return;
    out << "iter " << r.iteration;
    for (const auto& [name, value] : r.terms) out << ' ' << name << '=' << value;
    out << '\n';
  };

  make_dir(a.out);
  eval::write_text((fs::path(a.out) / "config.txt").string(), train::format_config(config));
  if (a.stage == "repr") {
    train::train_repr(config, corpus, a.out, progress);
  } else if (a.stage == "av") {
    train::train_av(config, corpus, a.out, progress);
  } else {
    train::train_gan(config, corpus, a.out, progress);
  }

  Artifacts artifacts("train", a.out);
  artifacts.add_tree(a.out);
  artifacts.write();
  out << "checkpoint " << (fs::path(a.out) / "checkpoint").string() << "\n";
  return kExitOk;
}

struct AnnotateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
};

int cmd_annotate(const AnnotateArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "repr checkpoint");
  require_file(a.manifest, "manifest");
  // Image paths stay relative to the manifest, so the output defaults to its directory.
  const fs::path target =
      a.out.empty() ? fs::path(a.manifest).parent_path() / "manifest.annotated.jsonl" : fs::path(a.out);
  if (fs::exists(target) && fs::equivalent(target, a.manifest)) {
    throw UsageError("refusing to overwrite the input manifest");
  }
  if (target.has_parent_path()) make_dir(target.parent_path());

  const auto model = repr::load_repr(a.checkpoint);
  const auto result = repr::annotate_corpus(model, a.manifest, target.string());

  const fs::path root = target.has_parent_path() ? target.parent_path() : fs::path(".");
  Artifacts artifacts("annotate", root);
  artifacts.add(target);
  artifacts.write(target.string() + ".artifacts.json");
  out << "annotated " << result.rows << " rows (" << result.unreadable << " unreadable) -> " << target.string()
      << "\n";
  return kExitOk;
}

struct AnalyzeArgs {
  std::string manifest;
  std::string out;
  std::string gan;
  std::string config;
  std::optional<int> n_points;
  std::optional<int> face_index;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const auto settings = load_settings(a.config);
  const int n_points = a.n_points.value_or(static_cast<int>(parse_long(pipeline_value(settings, "n_points", "11"), "n_points")));
  const int face_index =
      a.face_index.value_or(static_cast<int>(parse_long(pipeline_value(settings, "face_index", "0"), "face_index")));
  if (n_points < 3) throw UsageError("--n-points must be at least 3");
  if (face_index < 0) throw UsageError("--face-index must be non-negative");

  const auto records = read_records(a.manifest);
  make_dir(a.out);
  const fs::path root(a.out);
  Artifacts artifacts("analyze", root);

  const auto annotations = mood_annotations(records);
  if (annotations.empty()) {
    throw std::runtime_error("manifest " + a.manifest + " has no mood annotations; run 'moodgan annotate' first");
  }
  eval::write_text((root / "centroids.json").string(), centroids_json(records).dump(2) + "\n");
  artifacts.add(root / "centroids.json");

  const auto fit = fit_axes(records);
  eval::write_text((root / "basis.json").string(), geometry::basis_to_json(fit.basis) + "\n");
  eval::write_text((root / "axis_fit.json").string(), axis_fit_json(fit).dump(2) + "\n");
  artifacts.add(root / "basis.json");
  artifacts.add(root / "axis_fit.json");

  if (!a.gan.empty()) {
    require_file(a.gan, "gan checkpoint");
    const auto run = train::load_gan(a.gan);
    const Corpus corpus = load_corpus(a.manifest, run.image_size);
    const auto test = test_samples(corpus);
    if (face_index >= static_cast<int>(test.size())) throw UsageError("--face-index beyond the test split");
    const Image& face = test[static_cast<std::size_t>(face_index)]->image;
    const auto generator = eval::generator_fn(run.generator);

    for (const auto& axis : traversal_axes(run.space.kind)) {
      const auto traversal = geometry::make_traversal(run.space.kind, axis, n_points, &fit.basis);
      const fs::path file = root / ("grid_" + axis + ".png");
      write_image(eval::tile_row(eval::traversal_strip(generator, face, traversal.points)), file.string());
      artifacts.add(file);
    }
    const fs::path file = root / "grid_centroids.png";
    write_image(eval::tile_row(eval::traversal_strip(generator, face, class_condition_points(run.space.kind, records))),
                file.string());
    artifacts.add(file);
  }
  artifacts.write();
  out << "analysis written to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string gan;
  std::string manifest;
  std::string estimator;
  std::string condition;
  std::string basis;
  std::string config;
  std::string out;
  std::optional<int> n_points;
  std::optional<std::uint64_t> seed;
  int size = 32;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto settings = load_settings(a.config);
  const int n_points = a.n_points.value_or(static_cast<int>(parse_long(pipeline_value(settings, "n_points", "11"), "n_points")));
  const auto seed = a.seed.value_or(static_cast<std::uint64_t>(parse_long(pipeline_value(settings, "eval_seed", "0"), "eval_seed")));
  if (n_points < 3) throw UsageError("--n-points must be at least 3");

  const bool identity = a.gan == "identity";
  std::optional<train::GanRun> run;
  gan::ConditionKind kind;
  int size = a.size;
  if (identity) {
    if (a.condition.empty()) throw UsageError("--gan identity requires --condition");
    try {
      kind = gan::parse_condition_kind(a.condition);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    require_file(a.gan, "gan checkpoint");
    run.emplace(train::load_gan(a.gan));
    kind = run->space.kind;
    size = run->image_size;
    if (!a.condition.empty() && a.condition != gan::to_string(kind)) {
      throw UsageError("--condition " + a.condition + " does not match the checkpoint's " + gan::to_string(kind));
    }
  }
  const auto space = gan::ConditionSpace::make(kind);
  require_condition_field(a.manifest, space);

  const auto records = read_records(a.manifest);
  const Corpus corpus = load_corpus(a.manifest, size);
  const auto test = test_samples(corpus);
  const auto faces = face_pointers(test);
  Eigen::MatrixXf conditions(space.dim, static_cast<Eigen::Index>(test.size()));
  for (std::size_t i = 0; i < test.size(); ++i) {
    conditions.col(static_cast<Eigen::Index>(i)) = gan::encode_condition(space, *test[i]);
  }

  const auto generator = identity ? eval::identity_generator() : eval::generator_fn(run->generator);
  std::vector<Eigen::VectorXf> points;
  for (const auto& p : class_condition_points(kind, records)) points.push_back(p.cast<float>());

  make_dir(a.out);
  const fs::path root(a.out);
  Artifacts artifacts("eval", root);

  const auto color = eval::mean_color_rmse(generator, points, faces);
  const double l_rec = eval::eval_reconstruction(generator, faces, conditions, seed);
  const auto report = eval::make_report(color, l_rec, static_cast<int>(faces.size()));
  eval::write_text((root / "report.json").string(), eval::report_json(report));
  artifacts.add(root / "report.json");

  if (!a.estimator.empty()) {
    require_file(a.estimator, "estimator checkpoint");
    const auto estimator = repr::load_av(a.estimator);
    std::optional<geometry::AxisBasis> basis;
    if (kind == gan::ConditionKind::kMood3) {
      if (!a.basis.empty()) {
        require_file(a.basis, "basis");
        std::ifstream in(a.basis);
        basis = geometry::basis_from_json(std::string(std::istreambuf_iterator<char>(in), {}));
      } else {
        basis = fit_axes(records).basis;
      }
    }
    const auto av = eval::estimator_fn(estimator);
    for (const auto& [axis, index] : {std::pair<std::string, int>{"valence", 0}, {"arousal", 1}}) {
      const auto traversal = geometry::make_traversal(kind, axis, n_points, basis ? &*basis : nullptr);
      const auto curve = eval::transition_curve(generator, av, traversal, faces, index);
      const auto stats = eval::smoothness_stats(curve);
      eval::write_text((root / ("curve_" + axis + ".csv")).string(), eval::curve_csv(curve));
      eval::write_text((root / ("curve_" + axis + ".json")).string(), eval::curve_json(curve, stats));
      artifacts.add(root / ("curve_" + axis + ".csv"));
      artifacts.add(root / ("curve_" + axis + ".json"));
    }
  }
  artifacts.write();
  out << "rmse all " << report.rmse_all << ", l_rec " << report.l_rec << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expression editing with a learned 3-d mood space", "moodgan"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "render a procedural face corpus");
  synth_cmd->add_option("--n-train", synth.n_train, "training faces")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--n-test", synth.n_test, "test faces")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", synth.size, "canvas size in pixels")->check(CLI::Range(16, 1024));
  synth_cmd->add_option("--seed", synth.seed, "corpus seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the repr model, the AV estimator or a GAN");
  train_cmd->add_option("--stage", tr.stage, "repr | av | gan")->required()->check(CLI::IsMember({"repr", "av", "gan"}));
  train_cmd->add_option("--condition", tr.condition, "discrete7 | av2 | mood3 (gan stage)")
      ->check(CLI::IsMember({"discrete7", "av2", "mood3"}));
  train_cmd->add_option("--manifest", tr.manifest, "training manifest")->required();
  train_cmd->add_option("--config", tr.config, "key = value config file");
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--iterations", tr.iterations)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--image-size", tr.image_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "full", "tiny"}));
  train_cmd->add_option("--set", tr.overrides, "extra key=value overrides");

  AnnotateArgs an;
  auto* annotate_cmd = app.add_subcommand("annotate", "write mood vectors from a repr checkpoint into a manifest");
  annotate_cmd->add_option("--checkpoint", an.checkpoint, "repr checkpoint directory")->required();
  annotate_cmd->add_option("--manifest", an.manifest, "input manifest")->required();
  annotate_cmd->add_option("--out", an.out, "output manifest (default: manifest.annotated.jsonl beside the input)");

  AnalyzeArgs az;
  auto* analyze_cmd = app.add_subcommand("analyze", "centroids, axis regression and traversal grids");
  analyze_cmd->add_option("--manifest", az.manifest, "annotated manifest")->required();
  analyze_cmd->add_option("--out", az.out, "output directory")->required();
  analyze_cmd->add_option("--gan", az.gan, "gan checkpoint for traversal grids");
  analyze_cmd->add_option("--config", az.config, "key = value config file");
  analyze_cmd->add_option("--n-points", az.n_points);
  analyze_cmd->add_option("--face-index", az.face_index, "test face shown in the grids");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "color/reconstruction metrics and transition curves");
  eval_cmd->add_option("--gan", ev.gan, "gan checkpoint directory, or 'identity'")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "manifest with the condition field")->required();
  eval_cmd->add_option("--estimator", ev.estimator, "AV estimator checkpoint (enables curves)");
  eval_cmd->add_option("--condition", ev.condition, "condition space (required with identity)");
  eval_cmd->add_option("--basis", ev.basis, "basis.json for mood3 traversals (default: fitted from the manifest)");
  eval_cmd->add_option("--config", ev.config, "key = value config file");
  eval_cmd->add_option("--out", ev.out, "output directory")->required();
  eval_cmd->add_option("--n-points", ev.n_points);
  eval_cmd->add_option("--seed", ev.seed, "reconstruction target seed");
  eval_cmd->add_option("--size", ev.size, "image size for the identity stub")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*annotate_cmd) return cmd_annotate(an, out);
    if (*analyze_cmd) return cmd_analyze(az, out);
    if (*eval_cmd) return cmd_eval(ev, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace moodgan::cli
