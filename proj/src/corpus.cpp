#include "moodgan/corpus.hpp"

#include "moodgan/rng.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace moodgan {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int class_index(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return i;
  }
  return -1;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "'");
}

// ---------------------------------------------------------------------------
// Manifest rows.

namespace {

std::optional<double> optional_number(const json& row, const char* key) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw std::invalid_argument(std::string("field '") + key + "' is not a number");
  return it->get<double>();
}

}  // namespace

ManifestRecord parse_manifest_line(const std::string& line) {
  json row;
  try {
    row = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!row.is_object()) throw std::invalid_argument("row is not an object");
  ManifestRecord rec;
  auto path = row.find("path");
  if (path == row.end() || !path->is_string()) throw std::invalid_argument("missing string field 'path'");
  rec.path = path->get<std::string>();
  auto split = row.find("split");
  if (split == row.end() || !split->is_string()) throw std::invalid_argument("missing string field 'split'");
  rec.split = parse_split(split->get<std::string>());
  auto emotion = row.find("emotion");
  if (emotion != row.end() && !emotion->is_null()) {
    if (!emotion->is_number_integer()) throw std::invalid_argument("field 'emotion' is not an integer");
    rec.emotion = emotion->get<int>();
  }
  rec.valence = optional_number(row, "valence");
  rec.arousal = optional_number(row, "arousal");
  auto mood = row.find("mood");
  if (mood != row.end() && !mood->is_null()) {
    if (!mood->is_array() || mood->size() != 3) throw std::invalid_argument("field 'mood' is not a 3-vector");
    Eigen::Vector3d m;
    for (int i = 0; i < 3; ++i) {
      if (!(*mood)[i].is_number()) throw std::invalid_argument("field 'mood' is not numeric");
      m[i] = (*mood)[i].get<double>();
    }
    rec.mood = m;
  }
  return rec;
}

std::string format_manifest_line(const ManifestRecord& record) {
  json row;
  row["path"] = record.path;
  row["split"] = to_string(record.split);
  row["emotion"] = record.emotion ? json(*record.emotion) : json(nullptr);
  row["valence"] = record.valence ? json(*record.valence) : json(nullptr);
  row["arousal"] = record.arousal ? json(*record.arousal) : json(nullptr);
  if (record.mood) {
    row["mood"] = json::array({(*record.mood)[0], (*record.mood)[1], (*record.mood)[2]});
  } else {
    row["mood"] = nullptr;
  }
  return row.dump();
}

// ---------------------------------------------------------------------------
// Codecs.

namespace {

bool has_extension(const std::string& path, const char* ext) {
  std::string e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

std::string read_ppm_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (read_ppm_token(in) != "P6") throw std::runtime_error("not a binary PPM: " + path);
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(read_ppm_token(in));
    height = std::stoi(read_ppm_token(in));
    maxval = std::stoi(read_ppm_token(in));
  } catch (const std::exception&) {
    throw std::runtime_error("bad PPM header: " + path);
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw std::runtime_error("bad PPM header: " + path);
  }
  const int bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3 * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error("truncated PPM: " + path);
  Image image(height, width);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (int p = 0; p < width * height; ++p) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t at = (static_cast<std::size_t>(p) * 3 + c) * bytes;
      const int value = bytes == 1 ? raw[at] : (raw[at] << 8) | raw[at + 1];
      image.pixels(c, p) = static_cast<float>(value) * scale;
    }
  }
  return image;
}

unsigned char quantize(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_ppm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int p = 0; p < image.width * image.height; ++p) {
    for (int c = 0; c < 3; ++c) raw[static_cast<std::size_t>(p) * 3 + c] = quantize(image.pixels(c, p));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw std::runtime_error("cannot decode PNG " + path + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error("cannot decode PNG " + path + ": " + png.message);
  }
  Image image(static_cast<int>(png.height), static_cast<int>(png.width));
  for (int p = 0; p < image.width * image.height; ++p) {
    for (int c = 0; c < 3; ++c) image.pixels(c, p) = raw[static_cast<std::size_t>(p) * 3 + c] / 255.0f;
  }
  return image;
}

void write_png(const Image& image, const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int p = 0; p < image.width * image.height; ++p) {
    for (int c = 0; c < 3; ++c) raw[static_cast<std::size_t>(p) * 3 + c] = quantize(image.pixels(c, p));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, raw.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + png.message);
  }
}

}  // namespace

Image read_image(const std::string& path) {
  if (has_extension(path, ".png")) return read_png(path);
  if (has_extension(path, ".ppm")) return read_ppm(path);
  throw std::runtime_error("unsupported image format: " + path);
}

void write_image(const Image& image, const std::string& path) {
  if (has_extension(path, ".png")) return write_png(image, path);
  if (has_extension(path, ".ppm")) return write_ppm(image, path);
  throw std::runtime_error("unsupported image format: " + path);
}

// ---------------------------------------------------------------------------
// Resampling.

namespace {

float sample_bilinear(const Image& image, int c, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - x0, fy = y - y0;
  if (fx == 0.0 && fy == 0.0) return image.at(c, y0, x0);
  const double top = (1 - fx) * image.at(c, y0, x0) + fx * image.at(c, y0, x1);
  const double bottom = (1 - fx) * image.at(c, y1, x0) + fx * image.at(c, y1, x1);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

// Averages the source area covered by each output pixel.
Image box_downsample(const Image& image, int height, int width) {
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double ya = y * sy, yb = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double xa = x * sx, xb = (x + 1) * sx;
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      double total = 0.0;
      for (int iy = static_cast<int>(ya); iy < std::min(static_cast<int>(std::ceil(yb)), image.height); ++iy) {
        const double wy = std::min<double>(iy + 1, yb) - std::max<double>(iy, ya);
        if (wy <= 0) continue;
        for (int ix = static_cast<int>(xa); ix < std::min(static_cast<int>(std::ceil(xb)), image.width); ++ix) {
          const double wx = std::min<double>(ix + 1, xb) - std::max<double>(ix, xa);
          if (wx <= 0) continue;
          acc += wx * wy * image.pixels.col(iy * image.width + ix).cast<double>();
          total += wx * wy;
        }
      }
      out.pixels.col(y * width + x) = (acc / total).cast<float>();
    }
  }
  return out;
}

}  // namespace

Image resize(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("resize: bad target size");
  if (height == image.height && width == image.width) return image;
  if (height <= image.height && width <= image.width) return box_downsample(image, height, width);
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = sample_bilinear(image, c, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
      }
    }
  }
  return out;
}

Image center_crop_resize(const Image& image, int size) {
  const int side = std::min(image.height, image.width);
  const int y0 = (image.height - side) / 2, x0 = (image.width - side) / 2;
  Image crop(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) crop.pixels.col(y * side + x) = image.pixels.col((y0 + y) * image.width + x0 + x);
  }
  return resize(crop, size, size);
}

// ---------------------------------------------------------------------------
// Loading.

std::vector<const ImageSample*> Corpus::split(Split which) const {
  std::vector<const ImageSample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

namespace {

bool in_unit_range(double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; }

std::optional<std::string> annotation_problem(const ManifestRecord& rec) {
  if (!rec.emotion && !(rec.valence && rec.arousal) && !rec.mood) return "no_annotation";
  if (rec.emotion && (*rec.emotion < 0 || *rec.emotion >= kNumClasses)) return "annotation";
  if (rec.valence.has_value() != rec.arousal.has_value()) return "annotation";
  if (rec.valence && (!in_unit_range(*rec.valence) || !in_unit_range(*rec.arousal))) return "annotation";
  if (rec.mood) {
    for (int i = 0; i < 3; ++i) {
      if (!in_unit_range((*rec.mood)[i])) return "annotation";
    }
  }
  return std::nullopt;
}

}  // namespace

Corpus load_corpus(const std::string& manifest_path, int image_size, const Preprocessor& preprocess) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
  if (image_size <= 0) throw std::invalid_argument("image size must be positive");
  const fs::path root = fs::path(manifest_path).parent_path();

  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord rec;
    try {
      rec = parse_manifest_line(line);
    } catch (const std::invalid_argument&) {
      corpus.report.dropped.push_back({line_no, "", "malformed"});
      continue;
    }
    if (auto problem = annotation_problem(rec)) {
      corpus.report.dropped.push_back({line_no, rec.path, *problem});
      continue;
    }
    Image image;
    try {
      image = preprocess(read_image((root / rec.path).string()), image_size);
    } catch (const std::exception&) {
      corpus.report.dropped.push_back({line_no, rec.path, "decode"});
      continue;
    }
    if (image.height != image_size || image.width != image_size) {
      corpus.report.dropped.push_back({line_no, rec.path, "decode"});
      continue;
    }
    image.pixels = image.pixels.cwiseMax(0.0f).cwiseMin(1.0f);

    ImageSample sample;
    sample.image = std::move(image);
    sample.path = rec.path;
    sample.split = rec.split;
    sample.emotion = rec.emotion;
    if (rec.valence) sample.av = Eigen::Vector2d(*rec.valence, *rec.arousal);
    sample.mood = rec.mood;
    corpus.samples.push_back(std::move(sample));
  }
  corpus.report.accepted = static_cast<int>(corpus.samples.size());
  return corpus;
}

// ---------------------------------------------------------------------------
// Augmentation.

void AugmentPolicy::validate() const {
  if (!(scale_jitter_range.first > 0 && scale_jitter_range.second >= scale_jitter_range.first)) {
    throw std::invalid_argument("augment: scale range must be positive and ordered");
  }
  if (!(rotation_max_deg >= 0)) throw std::invalid_argument("augment: rotation_max_deg must be >= 0");
  if (!(hflip_prob >= 0 && hflip_prob <= 1)) throw std::invalid_argument("augment: hflip_prob must be in [0,1]");
}

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                              std::uint64_t index) {
  policy.validate();
  Rng rng = Rng::derive({seed, epoch, index, 0xa11cULL});
  const double u_scale = rng.uniform();
  const double u_rot = rng.uniform();
  const double u_flip = rng.uniform();
  AugmentDraw draw;
  const auto [lo, hi] = policy.scale_jitter_range;
  draw.scale = lo == hi ? lo : lo + (hi - lo) * u_scale;
  draw.rotation_deg = policy.rotation_max_deg == 0 ? 0.0 : (2 * u_rot - 1) * policy.rotation_max_deg;
  draw.flip = u_flip < policy.hflip_prob;
  return draw;
}

Image apply_augmentation(const Image& image, const AugmentDraw& draw) {
  if (draw.scale == 1.0 && draw.rotation_deg == 0.0 && !draw.flip) return image;
  Image out(image.height, image.width);
  const double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
  const double theta = draw.rotation_deg * M_PI / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double sx = x, sy = y;
      if (draw.scale != 1.0 || draw.rotation_deg != 0.0) {
        const double dx = (x - cx) / draw.scale, dy = (y - cy) / draw.scale;
        sx = cx + cs * dx + sn * dy;
        sy = cy - sn * dx + cs * dy;
      }
      if (draw.flip) sx = (image.width - 1) - sx;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = sample_bilinear(image, c, sx, sy);
    }
  }
  return out;
}

ImageSample augment(const ImageSample& sample, const AugmentPolicy& policy, std::uint64_t seed,
                    std::uint64_t epoch, std::uint64_t index) {
  ImageSample out = sample;
  out.image = apply_augmentation(sample.image, draw_augmentation(policy, seed, epoch, index));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic faces.

void SyntheticParams::validate() const {
  for (double x : {v, a, d}) {
    if (!(x >= -1.0 && x <= 1.0)) throw std::invalid_argument("synthetic controls must lie in [-1,1]");
  }
}

int label_synthetic(const SyntheticParams& p) {
  using namespace emotion;
  if (p.a > 0.5 && std::abs(p.v) <= 0.3) return kSurprise;
  if (p.v > 0.4) return kHappy;
  if (p.v < -0.3 && p.a > 0.3 && p.d < 0) return kFear;
  if (p.v < -0.3 && p.a > 0.3 && p.d >= 0) return kAngry;
  if (p.v < -0.4 && p.a <= 0.3 && p.d >= 0.2) return kDisgust;
  if (p.v < -0.4) return kSad;
  return kNeutral;
}

namespace {

struct Identity {
  Eigen::Vector3f background;
  Eigen::Vector3f skin;
  Eigen::Vector3f ink;
  double jitter_x, jitter_y;
};

Identity identity_for(std::uint64_t seed) {
  Rng rng = Rng::derive({seed, 0xfaceULL});
  Identity id;
  const float shade = static_cast<float>(rng.uniform(-0.08, 0.08));
  id.skin = Eigen::Vector3f(0.86f, 0.70f, 0.58f) + Eigen::Vector3f::Constant(shade) +
            Eigen::Vector3f(static_cast<float>(rng.uniform(-0.04, 0.04)), static_cast<float>(rng.uniform(-0.04, 0.04)),
                            static_cast<float>(rng.uniform(-0.04, 0.04)));
  id.background = Eigen::Vector3f(0.30f, 0.40f, 0.52f) + Eigen::Vector3f::Constant(static_cast<float>(rng.uniform(-0.05, 0.05)));
  id.ink = Eigen::Vector3f(0.16f, 0.10f, 0.09f);
  id.jitter_x = rng.uniform(-1.0, 1.0);
  id.jitter_y = rng.uniform(-1.0, 1.0);
  return id;
}

// Geometry of the face in pixel units.
struct FaceGeometry {
  double cx, cy, rx, ry;
  double mouth_y, mouth_half_width, mouth_amplitude, mouth_thickness;
  double eye_dx, eye_y, eye_half_width;
  double brow_y, brow_outer_dx, brow_inner_dx, brow_drop, brow_thickness;
};

FaceGeometry face_geometry(const Identity& id, int size) {
  const double s = size;
  FaceGeometry g;
  g.cx = s / 2.0 + id.jitter_x * s / 32.0;
  g.cy = s / 2.0 + id.jitter_y * s / 32.0;
  g.rx = 0.36 * s;
  g.ry = 0.44 * s;
  g.mouth_y = g.cy + 0.45 * g.ry;
  g.mouth_half_width = 0.45 * g.rx;
  g.mouth_amplitude = 0.30 * g.ry;
  g.mouth_thickness = std::max(0.045 * s, 0.7);
  g.eye_dx = 0.40 * g.rx;
  g.eye_y = g.cy - 0.10 * g.ry;
  g.eye_half_width = 0.22 * g.rx;
  g.brow_y = g.cy - 0.40 * g.ry;
  g.brow_outer_dx = 0.68 * g.rx;
  g.brow_inner_dx = 0.12 * g.rx;
  g.brow_drop = 0.16 * g.ry;
  g.brow_thickness = std::max(0.035 * s, 0.6);
  return g;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

SyntheticLayout::Box mouth_box(const FaceGeometry& g, int size) {
  const double half_height = 0.5 * g.mouth_amplitude + g.mouth_thickness;
  SyntheticLayout::Box box;
  box.x0 = std::max(0, static_cast<int>(std::floor(g.cx - g.mouth_half_width - g.mouth_thickness)));
  box.x1 = std::min(size, static_cast<int>(std::ceil(g.cx + g.mouth_half_width + g.mouth_thickness)) + 1);
  box.y0 = std::max(0, static_cast<int>(std::floor(g.mouth_y - half_height)));
  box.y1 = std::min(size, static_cast<int>(std::ceil(g.mouth_y + half_height)) + 1);
  return box;
}

constexpr int kSuper = 4;

}  // namespace

SyntheticLayout synthetic_layout(std::uint64_t seed, int size) {
  const FaceGeometry g = face_geometry(identity_for(seed), size);
  return {g.cx, g.cy, g.rx, g.ry, mouth_box(g, size)};
}

ImageSample render_synthetic(const SyntheticParams& params, int size) {
  if (size < 16) throw std::invalid_argument("canvas too small");
  params.validate();
  const Identity id = identity_for(params.seed);
  const FaceGeometry g = face_geometry(id, size);
  const SyntheticLayout::Box mbox = mouth_box(g, size);

  const double eye_half_height = g.eye_half_width * (0.12 + 0.38 * (params.a + 1.0));
  const double mouth_bend = params.v * g.mouth_amplitude;

  Image image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int face = 0, ink = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
          const double ex = (px - g.cx) / g.rx, ey = (py - g.cy) / g.ry;
          if (ex * ex + ey * ey > 1.0) continue;
          ++face;
          bool dark = false;
          // eyes
          for (int side : {-1, 1}) {
            const double ux = (px - (g.cx + side * g.eye_dx)) / g.eye_half_width;
            const double uy = (py - g.eye_y) / eye_half_height;
            dark = dark || ux * ux + uy * uy <= 1.0;
            // brows: outer end fixed, inner end lowered by d
            const double inner_y = g.brow_y + params.d * g.brow_drop;
            dark = dark || segment_distance(px, py, g.cx + side * g.brow_outer_dx, g.brow_y,
                                            g.cx + side * g.brow_inner_dx, inner_y) <= g.brow_thickness;
          }
          // mouth: centre sits lower than the corners when v > 0
          if (mbox.contains(x, y)) {
            const double u = (px - g.cx) / g.mouth_half_width;
            if (std::abs(u) <= 1.0) {
              const double curve_y = g.mouth_y + mouth_bend * (0.5 - u * u);
              dark = dark || std::abs(py - curve_y) <= g.mouth_thickness;
            }
          }
          if (dark) ++ink;
        }
      }
      const float total = kSuper * kSuper;
      const float face_w = (face - ink) / total, ink_w = ink / total, bg_w = 1.0f - face_w - ink_w;
      image.pixels.col(y * size + x) = bg_w * id.background + face_w * id.skin + ink_w * id.ink;
    }
  }

  ImageSample sample;
  sample.image = std::move(image);
  sample.emotion = label_synthetic(params);
  sample.av = Eigen::Vector2d(params.v, params.a);
  sample.mood = Eigen::Vector3d(params.v, params.a, params.d);
  return sample;
}

SyntheticParams synthetic_params_for(std::uint64_t seed, int i) {
  Rng rng = Rng::derive({seed, static_cast<std::uint64_t>(i), 0x5eedULL});
  SyntheticParams p;
  p.v = rng.uniform(-1.0, 1.0);
  p.a = rng.uniform(-1.0, 1.0);
  p.d = rng.uniform(-1.0, 1.0);
  p.seed = rng.next();
  return p;
}

std::string make_synthetic_corpus(int n_train, int n_test, int size, std::uint64_t seed, const std::string& out_dir) {
  if (n_train <= 0 || n_test <= 0) throw std::invalid_argument("sample counts must be positive");
  if (size < 16) throw std::invalid_argument("canvas too small");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());
  const std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest);

  for (int i = 0; i < n_train + n_test; ++i) {
    const bool train = i < n_train;
    const SyntheticParams p = synthetic_params_for(seed, i);
    const ImageSample sample = render_synthetic(p, size);
    std::ostringstream name;
    name << "images/" << (train ? "train" : "test") << '_' << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_image(sample.image, (fs::path(out_dir) / name.str()).string());

    json row;
    row["path"] = name.str();
    row["split"] = train ? "train" : "test";
    row["emotion"] = *sample.emotion;
    row["valence"] = p.v;
    row["arousal"] = p.a;
    row["mood"] = nullptr;
    // Ground truth of the renderer, ignored by the manifest reader.
    row["synthetic"] = {{"v", p.v}, {"a", p.a}, {"d", p.d}, {"seed", p.seed}};
    out << row.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + manifest);
  return manifest;
}

}  // namespace moodgan
