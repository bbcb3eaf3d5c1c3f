#pragma once

// Training loops for the representation classifier, the valence/arousal
// estimator and the conditional GANs, plus checkpoints, loss logs and the
// finite-difference gradient report.

#include "moodgan/corpus.hpp"
#include "moodgan/gancore.hpp"
#include "moodgan/reprnet.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace moodgan::train {

/// Iterations between learning-rate decays.
inline constexpr long kDecayInterval = 1000;

/// Keys of the flat config file are exactly the member names.
struct TrainConfig {
  int batch_size = 16;
  double lr = 1e-4;
  double lr_decay = 0.996;
  long iterations = 1000;
  std::uint64_t seed = 0;
  int n_critic = 5;
  long checkpoint_every = 0;  // 0: final checkpoint only
  int image_size = 32;
  gan::ConditionSpace condition_space = gan::ConditionSpace::make(gan::ConditionKind::kMood3);
  gan::LossWeights weights;
  std::string preset = "desk";  // desk | full | tiny
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double augment_scale_min = 1.0;
  double augment_scale_max = 1.0;
  double augment_rotation_deg = 0.0;
  double augment_hflip_prob = 0.5;

  void validate() const;
  AugmentPolicy augment_policy() const;
  /// lr * lr_decay^floor(iteration / 1000)
  double learning_rate(long iteration) const;
};

using Settings = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment.
Settings read_settings(const std::string& path);
Settings parse_settings(const std::string& text);

/// Applies settings on top of `base`. Unknown keys and unparsable values
/// throw std::invalid_argument. Without an explicit lambda_reg the condition
/// space's default is used.
TrainConfig make_config(const Settings& settings, TrainConfig base = {});

std::string format_config(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Logs.

struct LogRecord {
  long iteration = 0;
  std::vector<std::pair<std::string, double>> terms;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since training start

  double term(const std::string& name) const;
};

struct TrainLog {
  std::vector<LogRecord> records;

  void write_jsonl(const std::string& path) const;
  static TrainLog read_jsonl(const std::string& path);
  /// Values of one term in iteration order.
  std::vector<double> series(const std::string& name) const;
};

using ProgressFn = std::function<void(const LogRecord&)>;

// ---------------------------------------------------------------------------
// Representation classifier and valence/arousal estimator.

repr::BackboneSpec backbone_for(const std::string& preset);

struct ReprRun {
  repr::ReprModel<float> model;
  TrainLog log;
};

struct AvRun {
  repr::AvEstimator<float> model;
  TrainLog log;
};

/// Cross-entropy on the emotion labels of the train split. Writes
/// <out_dir>/checkpoint (always), <out_dir>/checkpoints/iter_N on schedule
/// and <out_dir>/train_log.jsonl.
ReprRun train_repr(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
                   const ProgressFn& progress = {});

/// MSE on (valence, arousal) of the train split; same outputs as train_repr.
AvRun train_av(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
               const ProgressFn& progress = {});

// ---------------------------------------------------------------------------
// GANs.

struct GanSpecs {
  gan::GeneratorSpec generator;
  gan::DiscriminatorSpec discriminator;
};

GanSpecs gan_specs_for(const std::string& preset);

struct GanRun {
  gan::ConditionSpace space;
  int image_size = 0;
  long iteration = 0;
  GanSpecs specs;
  gan::Generator<float> generator;
  gan::Discriminator<float> discriminator;
  TrainLog log;
};

/// Names of the six logged GAN terms.
const std::vector<std::string>& gan_terms();

/// Column j of a step's targets is source column order[j]; step_key is
/// iteration * (n_critic + 1) + sub-step.
std::vector<int> target_permutation(std::uint64_t seed, std::uint64_t step_key, int batch);

/// Alternates n_critic discriminator steps with one generator step; targets
/// are a seeded permutation of each batch's own conditions.
GanRun train_gan(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
                 const ProgressFn& progress = {});

void save_gan(const GanRun& run, const std::string& dir);
/// Throws std::runtime_error for missing or incompatible checkpoints.
GanRun load_gan(const std::string& dir);

// ---------------------------------------------------------------------------
// Gradient verification.

enum class LossTerm {
  kDiscriminatorAdversarial,
  kGeneratorAdversarial,
  kGradientPenalty,
  kRegressionReal,
  kRegressionFake,
  kClassificationReal,
  kClassificationFake,
  kReconstruction,
  kReprCrossEntropy,
};

std::string to_string(LossTerm term);

struct ToyConfig {
  int image_size = 8;
  int batch = 2;
  int probes = 10;  // parameters sampled per network
  double step = 1e-4;
  std::uint64_t seed = 1;
};

struct GradientCheck {
  std::string network;
  std::size_t parameter_count = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_relative_error = 0.0;
};

struct FiniteDifferenceReport {
  LossTerm term;
  std::vector<GradientCheck> checks;
  double max_relative_error = 0.0;
};

/// Central differences of the chosen loss on double-precision toy networks.
FiniteDifferenceReport finite_difference_report(LossTerm term, const ToyConfig& toy = {});

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

}  // namespace moodgan::train
