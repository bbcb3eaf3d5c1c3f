#pragma once

// Annotated face corpora: manifest I/O, sanitation on load, preprocessing,
// deterministic augmentation and the parametric synthetic-face renderer.

#include "moodgan/image.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moodgan {

inline constexpr int kNumClasses = 7;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "neutral", "happy", "sad", "surprise", "fear", "disgust", "angry"};

namespace emotion {
inline constexpr int kNeutral = 0;
inline constexpr int kHappy = 1;
inline constexpr int kSad = 2;
inline constexpr int kSurprise = 3;
inline constexpr int kFear = 4;
inline constexpr int kDisgust = 5;
inline constexpr int kAngry = 6;
}  // namespace emotion

/// Index of a class name, or -1.
int class_index(std::string_view name);

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ImageSample {
  Image image;
  std::string path;
  Split split = Split::kTrain;
  std::optional<int> emotion;
  /// (valence, arousal)
  std::optional<Eigen::Vector2d> av;
  std::optional<Eigen::Vector3d> mood;

  bool has_annotation() const { return emotion || av || mood; }
};

// ---------------------------------------------------------------------------
// Manifest.

/// One JSONL row. Unknown keys are ignored on read.
struct ManifestRecord {
  std::string path;
  Split split = Split::kTrain;
  std::optional<int> emotion;
  std::optional<double> valence;
  std::optional<double> arousal;
  std::optional<Eigen::Vector3d> mood;
};

/// Throws std::invalid_argument on malformed rows.
ManifestRecord parse_manifest_line(const std::string& line);
std::string format_manifest_line(const ManifestRecord& record);

// ---------------------------------------------------------------------------
// Image codecs (binary PPM and PNG, chosen by extension).

/// Throws std::runtime_error when the file cannot be read or decoded.
Image read_image(const std::string& path);
void write_image(const Image& image, const std::string& path);

/// Bilinear when enlarging, box-filtered when shrinking.
Image resize(const Image& image, int height, int width);

/// Maps a decoded image to a size x size face crop. The default crops the
/// central square and resizes; a face detector/aligner can be plugged in.
using Preprocessor = std::function<Image(const Image&, int size)>;
Image center_crop_resize(const Image& image, int size);

// ---------------------------------------------------------------------------
// Loading.

struct DroppedRecord {
  int line = 0;
  std::string path;
  std::string reason;  // "malformed", "decode", "no_annotation", "annotation"
};

struct SanitationReport {
  int accepted = 0;
  std::vector<DroppedRecord> dropped;
};

struct Corpus {
  std::vector<ImageSample> samples;
  SanitationReport report;

  std::vector<const ImageSample*> split(Split which) const;
};

/// Reads a JSONL manifest; images are resolved relative to it. A missing
/// manifest throws; bad rows are dropped and listed in the report.
Corpus load_corpus(const std::string& manifest_path, int image_size,
                   const Preprocessor& preprocess = center_crop_resize);

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentPolicy {
  std::pair<double, double> scale_jitter_range{1.0, 1.0};
  double rotation_max_deg = 0.0;
  double hflip_prob = 0.0;

  void validate() const;
};

/// Geometric draw for one (seed, epoch, index).
struct AugmentDraw {
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool flip = false;
};

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                              std::uint64_t index);

/// Applies a draw; identity draws return an exact copy.
Image apply_augmentation(const Image& image, const AugmentDraw& draw);

/// A pure function of (sample, policy, seed, epoch, index).
ImageSample augment(const ImageSample& sample, const AugmentPolicy& policy, std::uint64_t seed,
                    std::uint64_t epoch, std::uint64_t index);

// ---------------------------------------------------------------------------
// Synthetic faces.

struct SyntheticParams {
  double v = 0.0;  // mouth curvature, valence proxy
  double a = 0.0;  // eye openness, arousal proxy
  double d = 0.0;  // eyebrow inner-end offset, dominance proxy
  std::uint64_t seed = 0;

  void validate() const;
};

/// Pixel boxes (inclusive lower, exclusive upper) of the rendered parts for a
/// given identity seed and canvas size.
struct SyntheticLayout {
  double center_x, center_y;
  double radius_x, radius_y;
  struct Box {
    int x0, y0, x1, y1;
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  };
  Box mouth;
};

SyntheticLayout synthetic_layout(std::uint64_t seed, int size);

/// First matching rule wins: surprise, happy, fear, angry, disgust, sad, neutral.
int label_synthetic(const SyntheticParams& params);

/// Throws std::invalid_argument("canvas too small") for size < 16.
ImageSample render_synthetic(const SyntheticParams& params, int size);

/// Writes images/ and manifest.jsonl under `out_dir`; returns the manifest path.
std::string make_synthetic_corpus(int n_train, int n_test, int size, std::uint64_t seed,
                                  const std::string& out_dir);

/// The (v, a, d) parameters drawn by make_synthetic_corpus for row `i`.
SyntheticParams synthetic_params_for(std::uint64_t seed, int i);

}  // namespace moodgan
